//! Evaluation metrics for enhanced signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap applied to SI-SDR in both directions so perfect (or totally failed)
/// reconstructions stay finite.
pub const SI_SDR_CAP_DB: f64 = 80.0;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is decomposed against the scaled reference `α·s` with
/// `α = ⟨ŝ,s⟩/‖s‖²`; the ratio is `10·log10(‖αs‖²/‖ŝ−αs‖²)`, clamped to
/// ±[`SI_SDR_CAP_DB`].
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples", reference.len()),
            got: format!("{} samples", estimate.len()),
        });
    }
    if reference.is_empty() {
        return Err(Error::SignalTooShort { len: 0, min: 1 });
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy <= 0.0 {
        return Err(Error::ZeroEnergy("SI-SDR reference is silent".into()));
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if target_energy <= 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    if noise_energy <= 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Bounded SNR variant in [0,1]: `Σ|s| / (Σ|s| + Σ|n|)` over the direct
/// signal and the residual noise. Same contract as the channel-weight
/// target in the estimation module, exposed for evaluation.
pub fn snr_variant(direct: &[f64], residual_noise: &[f64]) -> Result<f64> {
    crate::estimation::true_channel_weight(direct, residual_noise)
}

/// Decomposes an estimate against the reference into the scaled projection
/// and the residual, then reports both metrics.
pub fn evaluate(reference: &[f64], estimate: &[f64]) -> Result<EvalResult> {
    let si = si_sdr(reference, estimate)?;
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    let dot: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = dot / ref_energy;
    let target: Vec<f64> = reference.iter().map(|&r| alpha * r).collect();
    let residual: Vec<f64> = estimate.iter().zip(&target).map(|(e, t)| e - t).collect();
    let snr = snr_variant(&target, &residual)?;
    Ok(EvalResult {
        si_sdr_db: si,
        snr_variant: snr,
    })
}

/// Metric pair for one (scene, algorithm) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub si_sdr_db: f64,
    pub snr_variant: f64,
}
