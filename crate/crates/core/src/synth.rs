//! Synthetic-scene oracle: surface clouds, depth renders and affordance maps
//! generated from known superquadrics so every pipeline stage can be checked
//! against ground truth.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::affordance::{gaussian_bump, AffordanceMap, DepthImage, InteractionPoint};
use crate::error::{Error, Result};
use crate::projection::CameraIntrinsics;
use crate::projection::{WeightedCloud, WeightedPoint};
use crate::superquadric::{
    inside_outside_point_gradient, surface_point, SuperquadricParams,
};

/// Resolution of the (eta, omega) splatting grid.
const SPLAT_GRID: usize = 512;

/// A rendered scene with its generating ground truth.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub truth: SuperquadricParams,
    /// Ground-truth affordance anchor on the truth surface.
    pub anchor: Vector3<f64>,
    pub depth: DepthImage,
    pub aff: AffordanceMap,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

/// Draws `n` surface points at uniform (eta, omega), displaced outward by
/// zero-mean Gaussian noise; weights are 1. Deterministic for a fixed seed.
pub fn sample_surface_cloud(
    sq: &SuperquadricParams,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<WeightedCloud> {
    if n < 1 {
        return Err(Error::validation("sample_surface_cloud: n must be >= 1"));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::validation("noise must be non-negative"));
    }
    sq.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let eta = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let omega = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut p = surface_point(sq, eta, omega);
        if noise > 0.0 {
            let outward = inside_outside_point_gradient(&p, sq);
            let norm = outward.norm();
            if norm > 0.0 {
                p += outward / norm * normal.sample(&mut rng);
            }
        }
        points.push(WeightedPoint::new(p, 1.0));
    }
    Ok(WeightedCloud::new(points))
}

/// Renders depth by z-buffer splatting a dense surface sampling, drops a
/// Gaussian affordance bump at the anchor's projection and returns the full
/// scene with ground truth attached.
#[allow(clippy::too_many_arguments)]
pub fn render_scene(
    sq: &SuperquadricParams,
    anchor_angles: (f64, f64),
    k: &CameraIntrinsics,
    width: usize,
    height: usize,
    sigma_px: f64,
    noise: f64,
    seed: u64,
) -> Result<SynthScene> {
    sq.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::validation("render dimensions must be positive"));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::validation("noise must be non-negative"));
    }
    let mut zbuf = vec![f32::INFINITY; width * height];
    let mut any_inside = false;
    for i in 0..SPLAT_GRID {
        let eta = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / SPLAT_GRID as f64;
        for j in 0..SPLAT_GRID {
            let omega = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / SPLAT_GRID as f64;
            let p = surface_point(sq, eta, omega);
            if p.z <= 0.0 {
                return Err(Error::validation(
                    "render_scene: superquadric extends behind the camera",
                ));
            }
            let u = (k.fx * p.x / p.z + k.cx).round();
            let v = (k.fy * p.y / p.z + k.cy).round();
            if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                continue;
            }
            any_inside = true;
            let idx = v as usize * width + u as usize;
            if (p.z as f32) < zbuf[idx] {
                zbuf[idx] = p.z as f32;
            }
        }
    }
    if !any_inside {
        return Err(Error::validation(
            "render_scene: superquadric projects entirely outside the frame",
        ));
    }

    let anchor = surface_point(sq, anchor_angles.0, anchor_angles.1);
    let ax = k.fx * anchor.x / anchor.z + k.cx;
    let ay = k.fy * anchor.y / anchor.z + k.cy;
    if ax < 0.0 || ay < 0.0 || ax >= width as f64 || ay >= height as f64 {
        return Err(Error::validation(
            "render_scene: anchor projects outside the frame",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let depth: Vec<f32> = zbuf
        .into_iter()
        .map(|z| {
            if z.is_finite() {
                let z = z as f64
                    + if noise > 0.0 {
                        normal.sample(&mut rng)
                    } else {
                        0.0
                    };
                z.max(1e-4) as f32
            } else {
                0.0
            }
        })
        .collect();
    let depth = DepthImage::new(width, height, depth)?;
    let aff = gaussian_bump(&[InteractionPoint::new(ax, ay)], sigma_px, width, height)?;
    Ok(SynthScene {
        truth: *sq,
        anchor,
        depth,
        aff,
        intrinsics: *k,
        seed,
    })
}
