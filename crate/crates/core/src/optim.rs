//! Damped least-squares local descent shared by superquadric recovery and
//! grasp pose optimization.
//!
//! The solver is a Levenberg-Marquardt loop over a residual vector with a
//! forward-difference Jacobian. A projection callback runs after every trial
//! step so callers can clamp parameters to bounds or renormalize a
//! quaternion.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Terminate when an accepted step decreases the cost by less than this.
    pub tolerance: f64,
    pub lambda_init: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-8,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub cost_before: f64,
    pub cost_after: f64,
    pub accepted: bool,
}

/// Incremental LM state; one `step` call performs one damped Gauss-Newton
/// update (with internal lambda retries) against the residual function it is
/// handed, so the residual definition may change between steps.
pub struct LmSolver {
    pub x: Vec<f64>,
    lambda: f64,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

impl LmSolver {
    pub fn new(x0: &[f64], lambda_init: f64) -> Self {
        Self {
            x: x0.to_vec(),
            lambda: lambda_init,
        }
    }

    pub fn step<R, P>(&mut self, n_residuals: usize, mut residuals: R, project: P) -> StepReport
    where
        R: FnMut(&[f64], &mut [f64]),
        P: Fn(&mut [f64]),
    {
        let n = self.x.len();
        let mut r0 = DVector::zeros(n_residuals);
        residuals(&self.x, r0.as_mut_slice());
        let cost_before = cost_of(&r0);

        // forward-difference Jacobian
        let mut jac = DMatrix::zeros(n_residuals, n);
        let mut rh = DVector::zeros(n_residuals);
        for k in 0..n {
            let h = 1e-7 * self.x[k].abs().max(1e-4);
            let mut xh = self.x.clone();
            xh[k] += h;
            residuals(&xh, rh.as_mut_slice());
            for i in 0..n_residuals {
                jac[(i, k)] = (rh[i] - r0[i]) / h;
            }
        }

        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r0;
        let mut report = StepReport {
            cost_before,
            cost_after: cost_before,
            accepted: false,
        };
        for _ in 0..16 {
            let mut a = jtj.clone();
            for k in 0..n {
                // Marquardt scaling keeps the damping meaningful across
                // parameters of very different magnitudes.
                a[(k, k)] += self.lambda * jtj[(k, k)].max(1e-12);
            }
            let delta = match a.lu().solve(&(-&jtr)) {
                Some(d) => d,
                None => {
                    self.lambda *= 10.0;
                    continue;
                }
            };
            let mut candidate = self.x.clone();
            for k in 0..n {
                candidate[k] += delta[k];
            }
            project(&mut candidate);
            residuals(&candidate, rh.as_mut_slice());
            let cost = cost_of(&rh);
            if cost.is_finite() && cost < cost_before {
                self.x = candidate;
                self.lambda = (self.lambda / 3.0).max(1e-12);
                report.cost_after = cost;
                report.accepted = true;
                return report;
            }
            self.lambda *= 10.0;
            if self.lambda > 1e12 {
                break;
            }
        }
        report
    }
}

/// Runs LM to convergence. `project` is applied to the start point and to
/// every trial step.
pub fn minimize_least_squares<R, P>(
    x0: &[f64],
    n_residuals: usize,
    mut residuals: R,
    project: P,
    opts: &LmOptions,
) -> LmResult
where
    R: FnMut(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let mut start = x0.to_vec();
    project(&mut start);
    let mut solver = LmSolver::new(&start, opts.lambda_init);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_cost = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let report = solver.step(n_residuals, &mut residuals, &project);
        iterations += 1;
        last_cost = report.cost_after;
        if !report.accepted || report.cost_before - report.cost_after < opts.tolerance {
            converged = report.accepted || report.cost_before.is_finite();
            if !report.accepted {
                last_cost = report.cost_before;
            }
            break;
        }
    }
    LmResult {
        x: solver.x,
        cost: last_cost,
        converged,
        iterations,
    }
}
