//! Short-time Fourier analysis and synthesis.
//!
//! Frames are extracted with a hop of half the frame length and windowed with
//! a square-root Hann window on both analysis and synthesis, which satisfies
//! the constant-overlap-add condition and gives perfect reconstruction up to
//! floating-point error. Spectrograms are stored as `(bins, frames)` arrays
//! of complex values, one-sided (bins `0..=fft_len/2`).

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One-sided complex spectrogram, shape `(bins, frames)`.
pub type Spectrogram = Array2<Complex64>;

/// Analysis/synthesis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Square-root of a periodic Hann window; used on both sides so the
    /// effective window is Hann and half-overlap adds to one.
    SqrtHann,
    /// All-ones window. Useful for bin-exact analysis of stationary tones.
    Rect,
}

/// Framing parameters for [`stft`] / [`istft`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    /// Frame length in samples.
    pub frame_len: usize,
    /// Hop between successive frames in samples.
    pub hop: usize,
    /// FFT length; frames shorter than this are zero-padded.
    pub fft_len: usize,
    /// Window applied on analysis and synthesis.
    pub window: Window,
}

impl Default for StftConfig {
    /// 32 ms frames with 16 ms hop at 16 kHz: 512/256/512, sqrt-Hann.
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 256,
            fft_len: 512,
            window: Window::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame_len must be at least 2, got {}",
                self.frame_len
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidConfig("hop must be positive".into()));
        }
        if self.fft_len < self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "fft_len {} is shorter than frame_len {}",
                self.fft_len, self.frame_len
            )));
        }
        if self.fft_len % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "fft_len must be even, got {}",
                self.fft_len
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins, `fft_len / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples, or `None`
    /// when the signal is shorter than one frame.
    pub fn n_frames(&self, len: usize) -> Option<usize> {
        if len < self.frame_len {
            None
        } else {
            Some(1 + (len - self.frame_len) / self.hop)
        }
    }

    /// Length in samples of the signal reconstructed from `n_frames` frames.
    pub fn output_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            self.frame_len + (n_frames - 1) * self.hop
        }
    }

    fn window_samples(&self) -> Vec<f64> {
        let n = self.frame_len as f64;
        (0..self.frame_len)
            .map(|i| match self.window {
                Window::Rect => 1.0,
                Window::SqrtHann => {
                    let hann = 0.5 * (1.0 - (2.0 * PI * i as f64 / n).cos());
                    hann.sqrt()
                }
            })
            .collect()
    }

    /// Steady-state overlap-add envelope of the squared window, one hop
    /// period long. Reconstruction divides by this; a (near-)zero entry
    /// means some samples are never observed and synthesis must fail.
    fn cola_envelope(&self) -> Vec<f64> {
        let win = self.window_samples();
        let mut env = vec![0.0; self.hop];
        for (i, w) in win.iter().enumerate() {
            env[i % self.hop] += w * w;
        }
        env
    }
}

/// Forward short-time Fourier transform.
///
/// Only whole frames are analyzed; up to `hop - 1` trailing samples are
/// dropped. Errors if the signal is shorter than one frame.
pub fn stft(x: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n_frames = cfg.n_frames(x.len()).ok_or(Error::SignalTooShort {
        len: x.len(),
        min: cfg.frame_len,
    })?;
    let n_bins = cfg.n_bins();
    let win = cfg.window_samples();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
    let mut spec = Array2::zeros((n_bins, n_frames));
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for i in 0..cfg.frame_len {
            buf[i] = Complex64::new(x[start + i] * win[i], 0.0);
        }
        for b in buf[cfg.frame_len..].iter_mut() {
            *b = Complex64::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            spec[[k, t]] = buf[k];
        }
    }
    Ok(spec)
}

/// Inverse short-time Fourier transform via weighted overlap-add.
///
/// The output has length [`StftConfig::output_len`]; callers reconstructing
/// a known-length signal should truncate or pad as needed. Errors if the
/// window/hop combination does not satisfy constant overlap-add.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    if spec.nrows() != n_bins {
        return Err(Error::ShapeMismatch {
            expected: format!("{} bins", n_bins),
            got: format!("{} bins", spec.nrows()),
        });
    }
    let n_frames = spec.ncols();
    if n_frames == 0 {
        return Err(Error::ShapeMismatch {
            expected: "at least one frame".into(),
            got: "0 frames".into(),
        });
    }
    // The squared window must overlap-add to a constant in steady state;
    // otherwise synthesis after spectral modification is ill-conditioned.
    let env = cfg.cola_envelope();
    let mx = env.iter().cloned().fold(0.0, f64::max);
    let mn = env.iter().cloned().fold(f64::INFINITY, f64::min);
    if mx <= 0.0 || (mx - mn) > 1e-6 * mx {
        return Err(Error::InvalidConfig(format!(
            "window {:?} with hop {} / frame {} violates constant overlap-add",
            cfg.window, cfg.hop, cfg.frame_len
        )));
    }

    let win = cfg.window_samples();
    let out_len = cfg.output_len(n_frames);
    let mut acc = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
    let scale = 1.0 / cfg.fft_len as f64;
    for t in 0..n_frames {
        for k in 0..n_bins {
            buf[k] = spec[[k, t]];
        }
        for k in n_bins..cfg.fft_len {
            buf[k] = spec[[cfg.fft_len - k, t]].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..cfg.frame_len {
            acc[start + i] += buf[i].re * scale * win[i];
            wsum[start + i] += win[i] * win[i];
        }
    }
    for (a, w) in acc.iter_mut().zip(&wsum) {
        if *w > 1e-8 {
            *a /= *w;
        } else {
            *a = 0.0;
        }
    }
    Ok(acc)
}

/// Frequency in Hz of one-sided bin `k` at the given sample rate.
pub fn bin_frequency(k: usize, fft_len: usize, sample_rate: u32) -> f64 {
    k as f64 * sample_rate as f64 / fft_len as f64
}
