//! Time synchronization across ad-hoc channels.
//!
//! The reference channel is the one-best (highest-weight) channel; every
//! other channel's relative delay against it is estimated with GCC-PHAT
//! over the whole utterance, then all channels are shifted and trimmed to
//! the common overlap window.

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::argmax_q;

/// Floor applied to the cross-spectrum magnitude before the phase
/// transform, so silent bins do not produce 0/0.
pub const PHAT_FLOOR: f64 = 1e-12;

/// Default maximum lag as a fraction of a second: device offsets of up to
/// half a second plus worst-case acoustic propagation, with margin.
pub const DEFAULT_MAX_LAG_S: f64 = 0.6;

/// Result of one pairwise delay estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    /// Positive when `sig` lags the reference.
    pub delay_samples: i64,
    /// Height of the GCC peak (real part), useful as a confidence signal.
    pub peak_value: f64,
}

/// Generalized cross-correlation with phase transform: the integer lag in
/// `[-max_lag, max_lag]` that maximizes the whitened cross-correlation of
/// `sig` against `reference`.
pub fn gcc_phat(sig: &[f64], reference: &[f64], max_lag: usize) -> Result<DelayEstimate> {
    if max_lag == 0 {
        return Err(Error::InvalidConfig("max_lag must be positive".into()));
    }
    let min_len = 2 * max_lag;
    if sig.len() < min_len || reference.len() < min_len {
        return Err(Error::SignalTooShort {
            len: sig.len().min(reference.len()),
            min: min_len,
        });
    }
    if sig.iter().all(|&v| v == 0.0) || reference.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroEnergy("GCC-PHAT input has no energy".into()));
    }
    // One FFT over the zero-padded pair; circular correlation is safe
    // because the padding exceeds the lag search range.
    let n = (sig.len() + reference.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = sig
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut b: Vec<Complex64> = reference
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    let mut cross: Vec<Complex64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let c = x * y.conj();
            c / c.norm().max(PHAT_FLOOR)
        })
        .collect();
    ifft.process(&mut cross);
    // Lag k of sig against reference lives at index k (mod n) for k ≥ 0 and
    // at n+k for k < 0.
    let mut best_lag = 0i64;
    let mut best_val = f64::NEG_INFINITY;
    let lag_bound = max_lag.min(n / 2) as i64;
    for lag in -lag_bound..=lag_bound {
        let idx = if lag >= 0 { lag as usize } else { (n as i64 + lag) as usize };
        let v = cross[idx].re / n as f64;
        if v > best_val || (v == best_val && lag.abs() < best_lag.abs()) {
            best_val = v;
            best_lag = lag;
        }
    }
    Ok(DelayEstimate {
        delay_samples: best_lag,
        peak_value: best_val,
    })
}

/// Aligned channels plus the bookkeeping needed to trim evaluation
/// references identically.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    /// Shifted channels, all trimmed to the same length.
    pub aligned: Vec<Vec<f64>>,
    /// Estimated delay of each channel against the reference (reference 0).
    pub delays: Vec<i64>,
    /// GCC peak per channel (reference gets 1.0 by convention).
    pub peaks: Vec<f64>,
    /// Index of the reference channel (argmax of the weights).
    pub reference: usize,
    /// Overlap window `[window_start, window_end)` in the reference
    /// channel's (unshifted) time base.
    pub window_start: usize,
    pub window_end: usize,
    /// Channels whose delay estimation failed and were passed through
    /// unshifted.
    pub failed: Vec<bool>,
}

impl SyncResult {
    pub fn aligned_len(&self) -> usize {
        self.window_end - self.window_start
    }
}

/// Synchronizes all channels to the highest-weight reference channel.
///
/// Channel n with estimated delay d_n is advanced by d_n samples
/// (`aligned_n(t) = ch_n(t + d_n)`), and all channels are trimmed to the
/// intersection of their valid ranges. A channel whose delay estimation
/// fails (for example a silent channel) is flagged and passed through
/// unshifted.
pub fn synchronize(channels: &[Vec<f64>], q: &[f64], max_lag: usize) -> Result<SyncResult> {
    let m = channels.len();
    if m == 0 || q.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{} weights", m.max(1)),
            got: format!("{}", q.len()),
        });
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples per channel", len),
            got: "ragged channel lengths".into(),
        });
    }
    let reference = argmax_q(q);
    let mut delays = vec![0i64; m];
    let mut peaks = vec![0.0f64; m];
    let mut failed = vec![false; m];
    peaks[reference] = 1.0;
    for n in 0..m {
        if n == reference {
            continue;
        }
        match gcc_phat(&channels[n], &channels[reference], max_lag) {
            Ok(est) => {
                delays[n] = est.delay_samples;
                peaks[n] = est.peak_value;
            }
            Err(_) => {
                failed[n] = true;
            }
        }
    }
    let mut result = align_with_delays(channels, &delays, reference)?;
    result.peaks = peaks;
    result.failed = failed;
    Ok(result)
}

/// Shifts each channel by its known delay and trims everything to the
/// common overlap window. Used by [`synchronize`] and by callers that carry
/// externally-known (for example ground-truth) delays.
pub fn align_with_delays(
    channels: &[Vec<f64>],
    delays: &[i64],
    reference: usize,
) -> Result<SyncResult> {
    let m = channels.len();
    if m == 0 || delays.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{} delays", m.max(1)),
            got: format!("{}", delays.len()),
        });
    }
    if reference >= m {
        return Err(Error::OutOfRange(format!(
            "reference {} outside 0..{}",
            reference, m
        )));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples per channel", len),
            got: "ragged channel lengths".into(),
        });
    }
    // Valid output range for channel n: t + d_n within [0, len).
    let mut lo = 0i64;
    let mut hi = len as i64;
    for n in 0..m {
        lo = lo.max(-delays[n]);
        hi = hi.min(len as i64 - delays[n]);
    }
    if hi <= lo {
        return Err(Error::OutOfRange(format!(
            "no common overlap after shifts (window {}..{})",
            lo, hi
        )));
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let aligned = (0..m)
        .map(|n| {
            let start = (lo as i64 + delays[n]) as usize;
            channels[n][start..start + (hi - lo)].to_vec()
        })
        .collect();
    let mut peaks = vec![0.0f64; m];
    peaks[reference] = 1.0;
    Ok(SyncResult {
        aligned,
        delays: delays.to_vec(),
        peaks,
        reference,
        window_start: lo,
        window_end: hi,
        failed: vec![false; m],
    })
}

/// Per-channel delay report entry for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReportRow {
    pub channel: usize,
    pub estimated_delay_samples: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth_delay_samples: Option<i64>,
    pub peak_value: f64,
    pub failed: bool,
}

/// Builds the delay report, optionally against ground-truth arrivals
/// (device delay plus propagation, differenced against the reference).
pub fn delay_report(sync: &SyncResult, ground_truth_arrivals: Option<&[usize]>) -> Vec<DelayReportRow> {
    (0..sync.delays.len())
        .map(|n| {
            let gt = ground_truth_arrivals.map(|arr| arr[n] as i64 - arr[sync.reference] as i64);
            DelayReportRow {
                channel: n,
                estimated_delay_samples: sync.delays[n],
                ground_truth_delay_samples: gt,
                peak_value: sync.peaks[n],
                failed: sync.failed[n],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::delay_signal;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn pure_shift_is_exact() {
        let r = noise(8000, 1);
        let s = delay_signal(&r, 160);
        let est = gcc_phat(&s, &r, 1000).unwrap();
        assert_eq!(est.delay_samples, 160);
        assert!(est.peak_value > 0.0);
    }

    #[test]
    fn self_delay_is_zero() {
        let r = noise(4000, 2);
        assert_eq!(gcc_phat(&r, &r, 500).unwrap().delay_samples, 0);
    }

    #[test]
    fn antisymmetry_on_shift_pairs() {
        let r = noise(6000, 3);
        for shift in [37usize, 250, 999] {
            let s = delay_signal(&r, shift);
            let fwd = gcc_phat(&s, &r, 1200).unwrap().delay_samples;
            let rev = gcc_phat(&r, &s, 1200).unwrap().delay_samples;
            assert_eq!(fwd, shift as i64);
            assert_eq!(rev, -fwd);
        }
    }

    #[test]
    fn shift_equivariance() {
        let r = noise(6000, 4);
        let base = delay_signal(&r, 100);
        let d0 = gcc_phat(&base, &r, 1500).unwrap().delay_samples;
        for extra in [1usize, 64, 700] {
            let s = delay_signal(&r, 100 + extra);
            let d = gcc_phat(&s, &r, 1500).unwrap().delay_samples;
            assert_eq!(d - d0, extra as i64);
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let r = noise(4000, 5);
        let z = vec![0.0; 4000];
        assert!(matches!(
            gcc_phat(&z, &r, 100),
            Err(Error::ZeroEnergy(_))
        ));
        assert!(matches!(
            gcc_phat(&r, &z, 100),
            Err(Error::ZeroEnergy(_))
        ));
        assert!(matches!(
            gcc_phat(&r[..100], &r, 100),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(gcc_phat(&r, &r, 0).is_err());
    }

    #[test]
    fn noisy_long_shift_within_one_sample() {
        // 3 s of noise at 16 kHz, target shifted 0.3 s with independent
        // noise at equal power (0 dB).
        let fs = 16000usize;
        let clean = noise(3 * fs, 6);
        let mut sig = delay_signal(&clean, 4800);
        let interf = noise(sig.len(), 7);
        let p_sig = sig.iter().map(|v| v * v).sum::<f64>() / sig.len() as f64;
        let p_int = interf.iter().map(|v| v * v).sum::<f64>() / interf.len() as f64;
        let g = (p_sig / p_int).sqrt();
        for (s, i) in sig.iter_mut().zip(&interf) {
            *s += g * i;
        }
        let est = gcc_phat(&sig, &clean, (0.6 * fs as f64) as usize).unwrap();
        assert!(
            (est.delay_samples - 4800).abs() <= 1,
            "estimate {}",
            est.delay_samples
        );
    }

    #[test]
    fn synchronize_single_channel_identity() {
        let c = noise(2000, 8);
        let r = synchronize(&[c.clone()], &[0.7], 400).unwrap();
        assert_eq!(r.reference, 0);
        assert_eq!(r.delays, vec![0]);
        assert_eq!(r.aligned[0], c);
        assert_eq!((r.window_start, r.window_end), (0, 2000));
        assert!(!r.failed[0]);
    }

    #[test]
    fn synchronize_pure_shifts_realigns_exactly() {
        let base = noise(12000, 9);
        let shifts = [0usize, 311, 57, 1999];
        let channels: Vec<Vec<f64>> = shifts.iter().map(|&s| delay_signal(&base, s)).collect();
        let q = [0.9, 0.5, 0.6, 0.2];
        let r = synchronize(&channels, &q, 3000).unwrap();
        assert_eq!(r.reference, 0);
        assert_eq!(r.delays, vec![0, 311, 57, 1999]);
        let len = r.aligned_len();
        assert_eq!(len, 12000 - 1999);
        for n in 1..4 {
            assert_eq!(r.aligned[n], r.aligned[0], "channel {} misaligned", n);
        }
        assert_eq!(len, r.aligned[0].len());
        // Residual pairwise delay after alignment is 0.
        for n in 1..4 {
            let d = gcc_phat(&r.aligned[n], &r.aligned[0], 1000).unwrap();
            assert_eq!(d.delay_samples, 0);
        }
    }

    #[test]
    fn synchronize_reference_is_argmax_and_negative_delays_work() {
        let base = noise(10000, 10);
        // Reference (highest q) is channel 1 and it is itself delayed, so
        // channel 0 has a negative relative delay.
        let channels = vec![delay_signal(&base, 100), delay_signal(&base, 600)];
        let q = [0.3, 0.8];
        let r = synchronize(&channels, &q, 2000).unwrap();
        assert_eq!(r.reference, 1);
        assert_eq!(r.delays, vec![-500, 0]);
        assert_eq!(r.aligned[0], r.aligned[1]);
        assert_eq!(r.window_start, 500);
        assert_eq!(r.window_end, 10000);
    }

    #[test]
    fn synchronize_flags_failed_channels() {
        let base = noise(8000, 11);
        let channels = vec![base.clone(), vec![0.0; 8000], delay_signal(&base, 40)];
        let q = [0.9, 0.4, 0.5];
        let r = synchronize(&channels, &q, 1000).unwrap();
        assert_eq!(r.failed, vec![false, true, false]);
        assert_eq!(r.delays[1], 0);
        // Failed channel passes through trimmed but unshifted.
        assert_eq!(r.aligned[1], vec![0.0; r.aligned_len()]);
        assert_eq!(r.aligned[2], r.aligned[0]);
        let report = delay_report(&r, Some(&[0, 0, 40]));
        assert_eq!(report[2].ground_truth_delay_samples, Some(40));
        assert!(report[1].failed);
    }

    #[test]
    fn synchronize_rejects_ragged_input() {
        let a = noise(1000, 12);
        let b = noise(900, 13);
        assert!(synchronize(&[a, b], &[0.5, 0.5], 100).is_err());
    }
}
