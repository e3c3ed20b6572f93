//! Affordance-map comparison metrics (KLD, SIM, NSS), the normalized
//! pixel-wise grasp distance and the sigmoid focal loss.

use crate::affordance::AffordanceMap;
use crate::error::{Error, Result};

const KLD_EPS: f64 = 1e-12;
const FOCAL_CLAMP: f64 = 1e-7;
/// Ground-truth binarization threshold for NSS.
const NSS_THRESHOLD: f64 = 0.1;

/// Bundle of every metric over one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
    pub pws: Option<f64>,
}

fn check_dims(pred: &AffordanceMap, gt: &AffordanceMap) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::validation(format!(
            "map dimensions differ: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

fn normalized(map: &AffordanceMap, label: &str) -> Result<Vec<f64>> {
    let sum = map.sum();
    if sum <= 0.0 {
        return Err(Error::validation(format!("{label} map has zero mass")));
    }
    Ok(map.values().iter().map(|&v| v as f64 / sum).collect())
}

/// Kullback-Leibler divergence of the sum-normalized ground truth from the
/// sum-normalized prediction, natural log.
pub fn kld(pred: &AffordanceMap, gt: &AffordanceMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let p = normalized(pred, "pred")?;
    let g = normalized(gt, "gt")?;
    Ok(g.iter()
        .zip(&p)
        .filter(|(&gi, _)| gi > 0.0)
        .map(|(&gi, &pi)| gi * (gi / pi.max(KLD_EPS)).ln())
        .sum())
}

/// Histogram intersection of the sum-normalized maps.
pub fn sim(pred: &AffordanceMap, gt: &AffordanceMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let p = normalized(pred, "pred")?;
    let g = normalized(gt, "gt")?;
    Ok(p.iter().zip(&g).map(|(&pi, &gi)| pi.min(gi)).sum())
}

/// Normalized scanpath saliency: mean of the standardized prediction over
/// pixels where the ground truth exceeds 0.1. Returns 0 for a constant
/// prediction or an empty mask.
pub fn nss(pred: &AffordanceMap, gt: &AffordanceMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let n = pred.values().len() as f64;
    let mean = pred.values().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = pred
        .values()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n; // population variance
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        // Compare in f32 so a stored 0.1 is not promoted above the threshold.
        if g > NSS_THRESHOLD as f32 {
            total += (p as f64 - mean) / sigma;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

/// Euclidean pixel distance between the grasp pixel and the affordance
/// argmax, normalized by the image diagonal.
pub fn pws_distance(grasp_pixel: (f64, f64), aff: &AffordanceMap) -> Result<f64> {
    let (gx, gy) = grasp_pixel;
    if !(0.0..aff.width() as f64).contains(&gx) || !(0.0..aff.height() as f64).contains(&gy) {
        return Err(Error::validation(format!(
            "grasp pixel ({gx}, {gy}) outside {}x{} image",
            aff.width(),
            aff.height()
        )));
    }
    let (mx, my) = aff.argmax();
    let dx = gx - mx as f64;
    let dy = gy - my as f64;
    let diagonal = ((aff.width() * aff.width() + aff.height() * aff.height()) as f64).sqrt();
    Ok((dx * dx + dy * dy).sqrt() / diagonal)
}

/// Continuous-target focal loss: mean of
/// `|target - pred|^gamma * BCE(pred, target)` with pred clamped away from
/// {0, 1}. `gamma = 0` reduces to plain cross-entropy.
pub fn focal_loss(pred: &AffordanceMap, target: &AffordanceMap, gamma: f64) -> Result<f64> {
    check_dims(pred, target)?;
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::validation("gamma must be non-negative"));
    }
    let n = pred.values().len() as f64;
    let mut total = 0.0;
    for (&p, &t) in pred.values().iter().zip(target.values()) {
        let p = (p as f64).clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
        let t = t as f64;
        let bce = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        let modulator = if gamma == 0.0 {
            1.0
        } else {
            (t - p).abs().powf(gamma)
        };
        total += modulator * bce;
    }
    Ok(total / n)
}

/// Computes KLD, SIM and NSS (plus pws if a grasp pixel is supplied) in one
/// call.
pub fn report(
    pred: &AffordanceMap,
    gt: &AffordanceMap,
    grasp_pixel: Option<(f64, f64)>,
) -> Result<MetricReport> {
    Ok(MetricReport {
        kld: kld(pred, gt)?,
        sim: sim(pred, gt)?,
        nss: nss(pred, gt)?,
        pws: grasp_pixel.map(|px| pws_distance(px, gt)).transpose()?,
    })
}
