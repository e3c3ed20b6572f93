//! Grasp pose estimation: ellipsoid gripper model, closest-half surface
//! sampling and the constrained multi-start alignment optimization.

use std::io::Write;
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::optim::LmSolver;
use crate::superquadric::{inside_outside, RecoveryConfig, SuperquadricParams};

/// Gripper envelope modeled as an ellipsoid surface sampled at `sample_count`
/// points.
#[derive(Debug, Clone, Copy)]
pub struct GripperModel {
    pub semi_axes: [f64; 3],
    pub sample_count: usize,
}

impl Default for GripperModel {
    fn default() -> Self {
        // parallel-jaw envelope
        Self {
            semi_axes: [0.03, 0.06, 0.03],
            sample_count: 20,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        if self.semi_axes.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::validation("gripper semi-axes must be positive"));
        }
        if self.sample_count < 6 {
            return Err(Error::validation("sample_count must be at least 6"));
        }
        Ok(())
    }
}

/// 7D gripper pose: position plus unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl GraspPose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }
}

/// Workspace constraints: a table plane and optional obstacle superquadrics.
#[derive(Debug, Clone)]
pub struct SceneConstraints {
    /// Plane z = table_height in the camera-aligned world frame.
    pub table_height: f64,
    pub clearance: f64,
    pub obstacles: Vec<SuperquadricParams>,
}

impl SceneConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.clearance < 0.0 || !self.clearance.is_finite() {
            return Err(Error::validation("clearance must be non-negative"));
        }
        if !self.table_height.is_finite() {
            return Err(Error::validation("table_height must be finite"));
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    /// No table: a plane far below anything reachable.
    pub fn unconstrained() -> Self {
        Self {
            table_height: f64::MIN / 4.0,
            clearance: 0.0,
            obstacles: Vec::new(),
        }
    }
}

/// Optimized pose with diagnostics.
#[derive(Debug, Clone)]
pub struct GraspResult {
    pub pose: GraspPose,
    pub final_cost: f64,
    /// |F - 1| per sampled gripper point at the final pose.
    pub residuals: Vec<f64>,
    pub margins: Vec<f64>,
    pub converged: bool,
    pub start_index: usize,
}

impl GraspResult {
    pub fn feasible(&self) -> bool {
        self.margins.iter().all(|&m| m > 0.0)
    }

    pub fn mean_residual(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len().max(1) as f64
    }

    /// Key-value text document with the pose and diagnostics.
    pub fn write_report(&self, mut dest: impl Write) -> Result<()> {
        let p = self.pose.position;
        let q = self.pose.orientation.quaternion();
        writeln!(dest, "position {} {} {}", p.x, p.y, p.z)?;
        writeln!(dest, "quaternion {} {} {} {}", q.i, q.j, q.k, q.w)?;
        writeln!(dest, "final_cost {}", self.final_cost)?;
        writeln!(dest, "mean_residual {}", self.mean_residual())?;
        let margins: Vec<String> = self.margins.iter().map(|m| m.to_string()).collect();
        writeln!(dest, "margins {}", margins.join(" "))?;
        writeln!(dest, "feasible {}", self.feasible())?;
        writeln!(dest, "converged {}", self.converged)?;
        writeln!(dest, "start_index {}", self.start_index)?;
        Ok(())
    }

    pub fn write_report_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_report(std::fs::File::create(path)?)
    }
}

/// Deterministic Fibonacci-spiral directions on the unit sphere.
fn fibonacci_sphere(n: usize) -> impl Iterator<Item = Vector3<f64>> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..n).map(move |i| {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let theta = 2.0 * std::f64::consts::PI * (i as f64) / golden;
        Vector3::new(r * theta.cos(), r * theta.sin(), z)
    })
}

/// Gripper-frame surface points on the half of the ellipsoid facing
/// `target_dir_local` (already expressed in the gripper frame). Exactly
/// `count` points, in spiral order; the spiral densifies until enough
/// points fall on the facing half.
fn sample_half_canonical(
    semi_axes: &[f64; 3],
    target_dir_local: &Vector3<f64>,
    count: usize,
) -> Vec<Vector3<f64>> {
    let mut n = 2 * count;
    loop {
        let picked: Vec<Vector3<f64>> = fibonacci_sphere(n)
            .map(|s| Vector3::new(semi_axes[0] * s.x, semi_axes[1] * s.y, semi_axes[2] * s.z))
            .filter(|q| q.dot(target_dir_local) >= 0.0)
            .take(count)
            .collect();
        if picked.len() == count {
            return picked;
        }
        n *= 2;
    }
}

/// Samples `model.sample_count` points on the gripper ellipsoid half facing
/// `target_center`, in world coordinates.
pub fn sample_gripper_half(
    model: &GripperModel,
    pose: &GraspPose,
    target_center: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    model.validate()?;
    if !target_center.iter().all(|v| v.is_finite()) {
        return Err(Error::validation("target_center must be finite"));
    }
    let dir_local = pose.orientation.inverse() * (target_center - pose.position);
    let canonical = sample_half_canonical(&model.semi_axes, &dir_local, model.sample_count);
    Ok(canonical
        .into_iter()
        .map(|q| pose.position + pose.orientation * q)
        .collect())
}

/// Alignment cost: sum of squared inside-outside deviations of the sampled
/// gripper points against the target superquadric.
pub fn grasp_cost(points: &[Vector3<f64>], sq: &SuperquadricParams) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::validation("grasp_cost: empty point list"));
    }
    Ok(points
        .iter()
        .map(|p| {
            let r = inside_outside(p, sq) - 1.0;
            r * r
        })
        .sum())
}

/// Constraint margins: first the table margin
/// `min_i(p_i.z - table_height - clearance)`, then one obstacle margin
/// `min_i(F(p_i, o) - 1)` per obstacle. The pose is feasible iff all
/// margins are positive.
pub fn constraint_margins(
    points: &[Vector3<f64>],
    constraints: &SceneConstraints,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::validation("constraint_margins: empty point list"));
    }
    let mut margins = Vec::with_capacity(1 + constraints.obstacles.len());
    margins.push(
        points
            .iter()
            .map(|p| p.z - constraints.table_height - constraints.clearance)
            .fold(f64::INFINITY, f64::min),
    );
    for obstacle in &constraints.obstacles {
        margins.push(
            points
                .iter()
                .map(|p| inside_outside(p, obstacle) - 1.0)
                .fold(f64::INFINITY, f64::min),
        );
    }
    Ok(margins)
}

const PENALTY_ROUNDS: usize = 5;
const PENALTY_INIT: f64 = 10.0;
const PENALTY_GROWTH: f64 = 10.0;

fn pose_from_vector(x: &[f64]) -> GraspPose {
    let q = nalgebra::Quaternion::new(x[6], x[3], x[4], x[5]);
    GraspPose::new(
        Vector3::new(x[0], x[1], x[2]),
        UnitQuaternion::from_quaternion(q),
    )
}

fn pose_to_vector(pose: &GraspPose) -> [f64; 7] {
    let q = pose.orientation.quaternion();
    [
        pose.position.x,
        pose.position.y,
        pose.position.z,
        q.i,
        q.j,
        q.k,
        q.w,
    ]
}

fn renormalize_quaternion(x: &mut [f64]) {
    let norm = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6]).sqrt();
    if norm < 1e-12 {
        x[3] = 0.0;
        x[4] = 0.0;
        x[5] = 0.0;
        x[6] = 1.0;
    } else {
        for v in &mut x[3..7] {
            *v /= norm;
        }
    }
}

/// The deterministic initial poses. Approach poses: for each of the six
/// plus/minus principal axes of the target, just outside the surface with
/// local -z facing the center, at two rolls 90 degrees apart (the gripper
/// envelope is elongated, so the tangential long-axis orientation matters).
/// Enveloping poses: at the target center with the gripper long axis mapped
/// onto each target axis in turn. 15 poses total.
pub fn initial_poses(sq: &SuperquadricParams, model: &GripperModel) -> Vec<GraspPose> {
    let rot = sq.rotation();
    let axes = sq.semi_axes();
    let g_max = model
        .semi_axes
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut poses = Vec::with_capacity(15);
    for (axis, &semi_axis) in axes.iter().enumerate() {
        for sign in [1.0f64, -1.0] {
            let dir = rot * (Vector3::ith(axis, 1.0) * sign);
            let toward = Unit::new_normalize(-dir);
            // map gripper -z onto the approach direction
            let base =
                UnitQuaternion::rotation_between(&(-Vector3::z()), &toward).unwrap_or_else(|| {
                    UnitQuaternion::from_axis_angle(
                        &Vector3::x_axis(),
                        std::f64::consts::PI,
                    )
                });
            for roll in [0.0, std::f64::consts::FRAC_PI_2] {
                let orientation =
                    base * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll);
                poses.push(GraspPose::new(
                    sq.translation + dir * (semi_axis + g_max),
                    orientation,
                ));
            }
        }
    }
    let target_rot = UnitQuaternion::from_rotation_matrix(&rot);
    let g_min = model.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
    // a concentric pose is a critical point of the symmetric alignment cost;
    // a small diagonal offset lets the optimizer descend away from it
    let nudge = rot * (Vector3::new(1.0, 1.0, 1.0).normalize() * 0.1 * g_min);
    for spin in [
        UnitQuaternion::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2),
    ] {
        poses.push(GraspPose::new(sq.translation + nudge, target_rot * spin));
    }
    poses
}

struct StartOutcome {
    result: GraspResult,
    violation: f64,
}

fn optimize_start(
    start_index: usize,
    start: &GraspPose,
    sq: &SuperquadricParams,
    model: &GripperModel,
    constraints: &SceneConstraints,
    config: &RecoveryConfig,
) -> StartOutcome {
    let l = model.sample_count;
    let n_obs = constraints.obstacles.len();
    let n_res = l * (2 + n_obs);
    let iterations_per_round = (config.max_iterations / PENALTY_ROUNDS).max(1);

    // the facing-half refresh makes cost non-monotone across iterations, so
    // track the best iterate (feasible-first, then alignment cost) rather
    // than trusting the last one
    let mut best: Option<(GraspPose, f64, f64)> = None;
    let mut consider = |pose: GraspPose| {
        let points = sample_gripper_half(model, &pose, &sq.translation).expect("validated inputs");
        let cost = grasp_cost(&points, sq).expect("non-empty samples");
        let margins = constraint_margins(&points, constraints).expect("non-empty samples");
        let violation: f64 = margins.iter().map(|&m| (-m).max(0.0)).sum();
        let better = match &best {
            None => true,
            Some((_, bc, bv)) => {
                (violation <= 0.0, if violation <= 0.0 { cost } else { violation })
                    < (*bv <= 0.0, if *bv <= 0.0 { *bc } else { *bv })
            }
        };
        if better {
            best = Some((pose, cost, violation));
        }
    };
    consider(*start);

    let mut solver = LmSolver::new(&pose_to_vector(start), 1e-3);
    let mut mu = PENALTY_INIT;
    for _ in 0..PENALTY_ROUNDS {
        for _ in 0..iterations_per_round {
            // refresh the facing half for the current iterate
            let pose = pose_from_vector(&solver.x);
            let dir_local = pose.orientation.inverse() * (sq.translation - pose.position);
            let canonical = sample_half_canonical(&model.semi_axes, &dir_local, l);
            let sqrt_mu = mu.sqrt();
            let report = solver.step(
                n_res,
                |x, out| {
                    let pose = pose_from_vector(x);
                    for (i, q) in canonical.iter().enumerate() {
                        let p = pose.position + pose.orientation * q;
                        out[i] = inside_outside(&p, sq) - 1.0;
                        out[l + i] = sqrt_mu
                            * (constraints.table_height + constraints.clearance - p.z).max(0.0);
                        for (k, obstacle) in constraints.obstacles.iter().enumerate() {
                            out[l * (2 + k) + i] =
                                sqrt_mu * (1.0 - inside_outside(&p, obstacle)).max(0.0);
                        }
                    }
                },
                renormalize_quaternion,
            );
            consider(pose_from_vector(&solver.x));
            if !report.accepted || report.cost_before - report.cost_after < config.tolerance {
                break;
            }
        }
        mu *= PENALTY_GROWTH;
    }

    let (pose, final_cost, violation) = best.expect("initial pose is always considered");
    let points = sample_gripper_half(model, &pose, &sq.translation).expect("validated inputs");
    let residuals: Vec<f64> = points
        .iter()
        .map(|p| (inside_outside(p, sq) - 1.0).abs())
        .collect();
    let margins = constraint_margins(&points, constraints).expect("non-empty samples");
    let feasible = margins.iter().all(|&m| m > 0.0);
    StartOutcome {
        result: GraspResult {
            pose,
            final_cost,
            residuals,
            margins,
            converged: feasible,
            start_index,
        },
        violation,
    }
}

/// Multi-start constrained alignment: fifteen deterministic starts, exterior
/// quadratic penalty with a x10 multiplier schedule, best feasible result
/// wins. With no feasible start the least-infeasible result is returned
/// flagged as not converged.
pub fn plan_grasp(
    sq: &SuperquadricParams,
    model: &GripperModel,
    constraints: &SceneConstraints,
    config: &RecoveryConfig,
) -> Result<GraspResult> {
    sq.validate()?;
    model.validate()?;
    constraints.validate()?;
    config.validate()?;

    let mut best: Option<StartOutcome> = None;
    for (index, start) in initial_poses(sq, model).iter().enumerate() {
        let outcome = optimize_start(index, start, sq, model, constraints, config);
        let better = match &best {
            None => true,
            Some(current) => {
                let a = (
                    !outcome.result.feasible(),
                    if outcome.result.feasible() {
                        outcome.result.final_cost
                    } else {
                        outcome.violation
                    },
                );
                let b = (
                    !current.result.feasible(),
                    if current.result.feasible() {
                        current.result.final_cost
                    } else {
                        current.violation
                    },
                );
                a < b
            }
        };
        if better {
            best = Some(outcome);
        }
    }
    Ok(best.expect("nonempty start set").result)
}
