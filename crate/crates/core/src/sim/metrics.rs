use super::SimError;
use crate::lie::{LieError, Pose};

/// Edge RMSE split into rotation (degrees) and translation (meters) parts of
/// `Log(truth⁻¹ · estimate)`.
pub fn rmse(estimates: &[Pose], truth: &[Pose]) -> Result<(f64, f64), SimError> {
    if estimates.len() != truth.len() || truth.is_empty() {
        return Err(SimError::SizeMismatch(estimates.len(), truth.len()));
    }
    let (mut rot, mut trans) = (0.0, 0.0);
    for (e, t) in estimates.iter().zip(truth) {
        let d = t.between(e)?.log();
        rot += d.rotation_part().iter().map(|v| v * v).sum::<f64>();
        trans += d.translation_part().iter().map(|v| v * v).sum::<f64>();
    }
    let n = truth.len() as f64;
    Ok(((rot / n).sqrt().to_degrees(), (trans / n).sqrt()))
}

/// Root-mean-square translation of `truth_i⁻¹ · estimate_i`.
pub fn ate(estimates: &[Pose], truth: &[Pose]) -> Result<f64, SimError> {
    if estimates.len() != truth.len() || truth.is_empty() {
        return Err(SimError::SizeMismatch(estimates.len(), truth.len()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| Ok(t.between(e)?.translation().iter().map(|v| v * v).sum::<f64>()))
        .sum::<Result<f64, LieError>>()?;
    Ok((sum / truth.len() as f64).sqrt())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
