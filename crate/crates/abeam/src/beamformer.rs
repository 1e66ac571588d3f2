//! Mask-driven MVDR beamforming.
//!
//! Per-channel masks are combined into speech/noise reliability weights
//! (η = ∏ masks, ξ = ∏ (1−masks), over all channels), which weight
//! per-frequency covariance estimates over the selected channels. The
//! steering vector is the principal eigenvector of the speech covariance,
//! rescaled so the reference channel has unit response, and the weights are
//! the closed-form MVDR solution against the diagonally-loaded noise
//! covariance.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::TFMask;
use crate::spectral::{istft, stft, Spectrogram, StftConfig};

/// Diagonal loading factor δ: phi ← phi + δ·(trace/M)·I before inversion.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Eigen-gap below which the steering vector is considered unreliable.
pub const EIGEN_GAP_TOL: f64 = 1e-10;

/// Element-wise mask products over all channels: `eta` (speech
/// reliability) and `xi` (noise reliability).
pub fn mask_products(masks: &[TFMask]) -> Result<(Array2<f64>, Array2<f64>)> {
    if masks.is_empty() {
        return Err(Error::InvalidConfig("no masks".into()));
    }
    let dim = masks[0].dim();
    if masks.iter().any(|m| m.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", dim),
            got: "mixed mask shapes".into(),
        });
    }
    let mut eta = Array2::ones(dim);
    let mut xi = Array2::ones(dim);
    for m in masks {
        eta *= m;
        xi *= &m.map(|&v| 1.0 - v);
    }
    Ok((eta, xi))
}

/// Weighted per-frequency covariance over the input channels:
/// `Φ(f) = (1/Σ_t w(t,f)) Σ_t w(t,f)·y(f,t) y(f,t)ᴴ`.
///
/// Returns one M×M matrix per frequency bin and a flag per bin marking
/// degenerate frequencies whose total weight is zero.
pub fn weighted_covariance(
    y: &[Spectrogram],
    w: &Array2<f64>,
) -> Result<(Vec<DMatrix<Complex64>>, Vec<bool>)> {
    let m = y.len();
    if m == 0 {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    let dim = y[0].dim();
    if y.iter().any(|s| s.dim() != dim) || w.dim() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", dim),
            got: format!("{:?}", w.dim()),
        });
    }
    let (bins, frames) = dim;
    let per_freq: Vec<(DMatrix<Complex64>, bool)> = (0..bins)
        .into_par_iter()
        .map(|f| {
            let wsum: f64 = (0..frames).map(|t| w[[f, t]]).sum();
            if wsum <= 1e-300 {
                return (DMatrix::zeros(m, m), true);
            }
            let mut phi = DMatrix::zeros(m, m);
            for t in 0..frames {
                let wt = w[[f, t]];
                if wt == 0.0 {
                    continue;
                }
                for i in 0..m {
                    let yi = y[i][[f, t]];
                    for j in i..m {
                        phi[(i, j)] += yi * y[j][[f, t]].conj() * wt;
                    }
                }
            }
            phi /= Complex64::new(wsum, 0.0);
            for i in 0..m {
                for j in 0..i {
                    phi[(i, j)] = phi[(j, i)].conj();
                }
                phi[(i, i)] = Complex64::new(phi[(i, i)].re, 0.0);
            }
            (phi, false)
        })
        .collect();
    let mut mats = Vec::with_capacity(bins);
    let mut degenerate = Vec::with_capacity(bins);
    for (phi, d) in per_freq {
        mats.push(phi);
        degenerate.push(d);
    }
    Ok((mats, degenerate))
}

/// Steering vector from one covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringResult {
    /// Unit-norm dominant eigenvector, phase-rotated so the reference
    /// component is real nonnegative. When the eigen-gap is below
    /// [`EIGEN_GAP_TOL`] this is the deterministic fallback `e_ref`.
    pub c: DVector<Complex64>,
    pub eigenvalue: f64,
    pub eigen_gap: f64,
    pub low_confidence: bool,
}

fn power_iterate(phi: &DMatrix<Complex64>, start: DVector<Complex64>) -> (f64, DVector<Complex64>) {
    let mut v = start;
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex64::new(norm, 0.0);
    }
    let mut lambda = 0.0f64;
    for _ in 0..1000 {
        let mut next = phi * &v;
        let n = next.norm();
        if n <= 1e-300 {
            return (0.0, v);
        }
        next /= Complex64::new(n, 0.0);
        let new_lambda = (next.adjoint() * phi * &next)[(0, 0)].re;
        // Align phase so convergence is measured on the vector itself.
        let overlap = (v.adjoint() * &next)[(0, 0)];
        let phase = if overlap.norm() > 1e-300 {
            overlap / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let aligned = &next * phase.conj();
        let delta = (&aligned - &v).norm();
        v = aligned;
        lambda = new_lambda;
        if delta < 1e-12 {
            break;
        }
    }
    (lambda, v)
}

/// Dominant eigenvector of a Hermitian PSD matrix by power iteration, with
/// one deflation step to estimate the eigen-gap.
pub fn principal_steering(phi: &DMatrix<Complex64>, reference: usize) -> Result<SteeringResult> {
    let m = phi.nrows();
    if m == 0 || phi.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", phi.nrows(), phi.ncols()),
        });
    }
    if reference >= m {
        return Err(Error::OutOfRange(format!(
            "reference {} outside 0..{}",
            reference, m
        )));
    }
    let e_ref = DVector::from_fn(m, |i, _| {
        Complex64::new(if i == reference { 1.0 } else { 0.0 }, 0.0)
    });
    // Deterministic start with all components populated.
    let start = DVector::from_fn(m, |i, _| Complex64::new(1.0 / (i + 1) as f64, 0.0));
    let (l1, v1) = power_iterate(phi, start.clone());
    if l1 <= 0.0 {
        return Ok(SteeringResult {
            c: e_ref,
            eigenvalue: l1.max(0.0),
            eigen_gap: 0.0,
            low_confidence: true,
        });
    }
    let deflated = phi - (&v1 * v1.adjoint()) * Complex64::new(l1, 0.0);
    let (l2, _) = power_iterate(&deflated, start);
    let gap = l1 - l2;
    if gap < EIGEN_GAP_TOL {
        return Ok(SteeringResult {
            c: e_ref,
            eigenvalue: l1,
            eigen_gap: gap,
            low_confidence: true,
        });
    }
    // Phase convention: reference component real nonnegative; if the
    // reference component vanishes, pivot on the largest component.
    let mut c = v1;
    let pivot = if c[reference].norm() > 1e-12 {
        reference
    } else {
        let mut p = 0;
        for i in 1..m {
            if c[i].norm() > c[p].norm() {
                p = i;
            }
        }
        p
    };
    let ph = c[pivot] / c[pivot].norm();
    c *= ph.conj();
    Ok(SteeringResult {
        c,
        eigenvalue: l1,
        eigen_gap: gap,
        low_confidence: false,
    })
}

/// Closed-form MVDR weights `w = Φ⁻¹c / (cᴴΦ⁻¹c)` with diagonal loading.
pub fn mvdr_weights(phi_nn: &DMatrix<Complex64>, c: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let m = phi_nn.nrows();
    if phi_nn.ncols() != m || c.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} matrix with {}-vector", m, m, m),
            got: format!("{}x{}, {}", phi_nn.nrows(), phi_nn.ncols(), c.len()),
        });
    }
    if c.norm() <= 1e-300 {
        return Err(Error::ZeroEnergy("steering vector is zero".into()));
    }
    let trace: f64 = (0..m).map(|i| phi_nn[(i, i)].re).sum();
    if trace <= 0.0 {
        return Err(Error::ZeroEnergy("noise covariance is zero".into()));
    }
    let mut delta = DIAGONAL_LOADING;
    for _ in 0..4 {
        let mut loaded = phi_nn.clone();
        let load = Complex64::new(delta * trace / m as f64, 0.0);
        for i in 0..m {
            loaded[(i, i)] += load;
        }
        if let Some(u) = loaded.lu().solve(c) {
            let denom = (c.adjoint() * &u)[(0, 0)];
            if denom.norm() > 1e-300 {
                return Ok(u / denom);
            }
        }
        delta *= 1e3;
    }
    Err(Error::InvalidConfig(
        "noise covariance unsolvable even with heavy loading".into(),
    ))
}

/// Applies per-frequency weights: `out(f,t) = w(f)ᴴ y(f,t)`.
pub fn apply_beamformer(w: &[DVector<Complex64>], y: &[Spectrogram]) -> Result<Spectrogram> {
    let m = y.len();
    if m == 0 {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    let (bins, frames) = y[0].dim();
    if w.len() != bins || w.iter().any(|wf| wf.len() != m) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} weight vectors of length {}", bins, m),
            got: format!("{}", w.len()),
        });
    }
    let mut out = Array2::from_elem((bins, frames), Complex64::new(0.0, 0.0));
    for f in 0..bins {
        for t in 0..frames {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, spec) in y.iter().enumerate() {
                acc += w[f][i].conj() * spec[[f, t]];
            }
            out[[f, t]] = acc;
        }
    }
    Ok(out)
}

/// Per-frequency diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqDiag {
    pub bin: usize,
    pub degenerate: bool,
    pub low_confidence_steering: bool,
    pub eigen_gap: f64,
    pub weight_norm: f64,
}

/// Beamformer output plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOutput {
    /// Enhanced time signal.
    pub signal: Vec<f64>,
    pub n_selected: usize,
    /// Global index of the reference channel (best weight among selected).
    pub reference: usize,
    /// True when the single-channel bypass was taken.
    pub bypass_single: bool,
    /// Bins passed through from the reference channel (zero mask weight).
    pub degenerate_bins: usize,
    /// Bins where the steering eigen-gap was below tolerance.
    pub low_confidence_bins: usize,
    pub diags: Option<Vec<FreqDiag>>,
}

/// Full mask-driven MVDR enhancement over synchronized channels.
///
/// `aligned` are the M synchronized time signals, `masks` the M per-channel
/// masks on the same STFT grid, `p` the selection vector, and `q` the
/// channel weights (used to pick the reference channel among the selected).
/// With exactly one selected channel the aligned waveform is returned
/// directly; otherwise selected spectrograms are scaled by `p_i`, and each
/// frequency is solved independently.
pub fn enhance(
    aligned: &[Vec<f64>],
    masks: &[TFMask],
    p: &[f64],
    q: &[f64],
    cfg: &StftConfig,
    want_diags: bool,
) -> Result<EnhanceOutput> {
    let m = aligned.len();
    if m == 0 || masks.len() != m || p.len() != m || q.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{} masks/p/q entries", m.max(1)),
            got: format!("{}/{}/{}", masks.len(), p.len(), q.len()),
        });
    }
    let len = aligned[0].len();
    if aligned.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples per channel", len),
            got: "ragged channel lengths".into(),
        });
    }
    let selected: Vec<usize> = (0..m).filter(|&i| p[i] > 0.0).collect();
    if selected.is_empty() {
        return Err(Error::InvalidConfig("selection vector is all zero".into()));
    }
    // Reference: best-weight channel among the selected.
    let reference = *selected
        .iter()
        .max_by(|&&a, &&b| q[a].partial_cmp(&q[b]).unwrap().then(b.cmp(&a)))
        .unwrap();
    if selected.len() == 1 {
        return Ok(EnhanceOutput {
            signal: aligned[selected[0]].clone(),
            n_selected: 1,
            reference,
            bypass_single: true,
            degenerate_bins: 0,
            low_confidence_bins: 0,
            diags: want_diags.then(Vec::new),
        });
    }
    let (eta, xi) = mask_products(masks)?;
    let ref_spec = stft(&aligned[reference], cfg)?;
    let (bins, frames) = ref_spec.dim();
    if eta.dim() != (bins, frames) {
        return Err(Error::ShapeMismatch {
            expected: format!("masks of shape ({}, {})", bins, frames),
            got: format!("{:?}", eta.dim()),
        });
    }
    let scaled: Vec<Spectrogram> = selected
        .iter()
        .map(|&i| stft(&aligned[i], cfg).map(|s| s.map(|v| v * p[i])))
        .collect::<Result<_>>()?;
    let (phi_xx, degen_x) = weighted_covariance(&scaled, &eta)?;
    let (phi_nn, degen_n) = weighted_covariance(&scaled, &xi)?;
    let ref_local = selected.iter().position(|&i| i == reference).unwrap();
    let n_sel = selected.len();

    struct BinOut {
        row: Vec<Complex64>,
        degenerate: bool,
        low_confidence: bool,
        eigen_gap: f64,
        weight_norm: f64,
    }
    let rows: Vec<BinOut> = (0..bins)
        .into_par_iter()
        .map(|f| -> Result<BinOut> {
            if degen_x[f] || degen_n[f] {
                // Zero total mask weight: pass the reference channel through.
                let row = (0..frames).map(|t| ref_spec[[f, t]]).collect();
                return Ok(BinOut {
                    row,
                    degenerate: true,
                    low_confidence: false,
                    eigen_gap: 0.0,
                    weight_norm: 0.0,
                });
            }
            let steer = principal_steering(&phi_xx[f], ref_local)?;
            // Unit response on the reference channel: rescale the unit-norm
            // eigenvector so its reference component is 1.
            let c = if !steer.low_confidence && steer.c[ref_local].norm() > 1e-9 {
                &steer.c / steer.c[ref_local]
            } else {
                DVector::from_fn(n_sel, |i, _| {
                    Complex64::new(if i == ref_local { 1.0 } else { 0.0 }, 0.0)
                })
            };
            let w = mvdr_weights(&phi_nn[f], &c)?;
            let row = (0..frames)
                .map(|t| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, spec) in scaled.iter().enumerate() {
                        acc += w[i].conj() * spec[[f, t]];
                    }
                    acc
                })
                .collect();
            Ok(BinOut {
                row,
                degenerate: false,
                low_confidence: steer.low_confidence,
                eigen_gap: steer.eigen_gap,
                weight_norm: w.norm(),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Array2::from_elem((bins, frames), Complex64::new(0.0, 0.0));
    let mut degenerate_bins = 0;
    let mut low_confidence_bins = 0;
    let mut diags = want_diags.then(Vec::new);
    for (f, bin) in rows.iter().enumerate() {
        for t in 0..frames {
            out[[f, t]] = bin.row[t];
        }
        degenerate_bins += bin.degenerate as usize;
        low_confidence_bins += bin.low_confidence as usize;
        if let Some(d) = diags.as_mut() {
            d.push(FreqDiag {
                bin: f,
                degenerate: bin.degenerate,
                low_confidence_steering: bin.low_confidence,
                eigen_gap: bin.eigen_gap,
                weight_norm: bin.weight_norm,
            });
        }
    }
    let signal = istft(&out, cfg)?;
    Ok(EnhanceOutput {
        signal,
        n_selected: n_sel,
        reference,
        bypass_single: false,
        degenerate_bins,
        low_confidence_bins,
        diags,
    })
}
