//! Deterministic synthetic test signals.
//!
//! No speech corpus ships with the crate, so experiments run on generated
//! material: speech-shaped noise gated into syllable-like bursts with
//! occasional tonal chirps, and seeded noise textures (white, babble-like,
//! factory-like). These capture the properties the pipeline depends on —
//! broadband spectra, amplitude modulation, cross-channel coherence — and
//! are reproducible from a seed.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Noise texture for scene noise sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTexture {
    White,
    /// Sum of several independently modulated speech-shaped streams.
    Babble,
    /// Broadband low-tilted noise plus impulsive ringing events.
    Factory,
}

impl NoiseTexture {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "white" => Some(Self::White),
            "babble" => Some(Self::Babble),
            "factory" => Some(Self::Factory),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::White => "white",
            Self::Babble => "babble",
            Self::Factory => "factory",
        }
    }
}

/// Uniform white noise in [-1, 1).
pub fn white_noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Pure tone, unit amplitude.
pub fn sine(len: usize, sample_rate: u32, freq_hz: f64) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    (0..len)
        .map(|n| (2.0 * PI * freq_hz * n as f64 / fs).sin())
        .collect()
}

/// Scales a signal in place to the requested RMS; silent input is left alone.
pub fn normalize_rms(x: &mut [f64], target_rms: f64) {
    let power: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power > 0.0 {
        let g = target_rms / power.sqrt();
        for v in x {
            *v *= g;
        }
    }
}

/// Long-term speech spectral envelope: high-pass below ~120 Hz, flat through
/// the low kilohertz, then a gentle downward tilt, band-limited under
/// 7.5 kHz. The tilt knee sits at 2.2 kHz so the upper band keeps usable
/// energy; wideband occupancy is what cross-correlation alignment keys on.
fn speech_envelope(freq_hz: f64) -> f64 {
    if freq_hz < 60.0 || freq_hz > 7500.0 {
        return 0.0;
    }
    let hp = (freq_hz / 120.0).powi(2) / (1.0 + (freq_hz / 120.0).powi(2));
    let tilt = 1.0 / (1.0 + (freq_hz / 2200.0).powi(2)).sqrt();
    hp * tilt
}

/// Multiplies the spectrum of `x` by `gain(freq_hz)` via one FFT round trip.
fn shape_spectrum(x: &[f64], sample_rate: u32, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len().next_power_of_two().max(2);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut buf);
    let fs = f64::from(sample_rate);
    for (k, b) in buf.iter_mut().enumerate() {
        // Mirror bins share the gain of their positive-frequency image so
        // the result stays real.
        let f = (k.min(n - k)) as f64 * fs / n as f64;
        *b *= gain(f);
    }
    ifft.process(&mut buf);
    buf[..x.len()].iter().map(|c| c.re / n as f64).collect()
}

/// Raised-cosine on/off envelope with burst and gap durations drawn per
/// event; models syllabic amplitude modulation.
fn burst_envelope(len: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let mut env = vec![0.0; len];
    let mut t = 0usize;
    while t < len {
        let burst = (rng.gen_range(0.15..0.40) * fs) as usize;
        let gap = (rng.gen_range(0.05..0.20) * fs) as usize;
        let ramp = (0.02 * fs) as usize;
        for i in 0..burst {
            let idx = t + i;
            if idx >= len {
                break;
            }
            let up = if i < ramp {
                0.5 * (1.0 - (PI * i as f64 / ramp as f64).cos())
            } else {
                1.0
            };
            let down = if burst - i <= ramp {
                0.5 * (1.0 - (PI * (burst - i) as f64 / ramp as f64).cos())
            } else {
                1.0
            };
            env[idx] = up.min(down);
        }
        t += burst + gap;
    }
    env
}

/// Speech surrogate: bandlimited speech-shaped noise bursts, with roughly a
/// third of the bursts replaced by frequency chirps. RMS-normalized to 0.1.
pub fn speech_like(len: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let shaped = shape_spectrum(&white_noise(len, rng), sample_rate, speech_envelope);
    let env = burst_envelope(len, sample_rate, rng);
    let fs = f64::from(sample_rate);
    let mut out: Vec<f64> = shaped.iter().zip(&env).map(|(s, e)| s * e).collect();

    // Chirped bursts add deterministic tonal structure that exercises
    // frequency-selective processing.
    let n_chirps = (len as f64 / fs / 1.0).ceil() as usize;
    for _ in 0..n_chirps {
        if rng.gen_bool(0.67) {
            continue;
        }
        let start = rng.gen_range(0..len.max(2) - 1);
        let dur = ((0.2 * fs) as usize).min(len - start);
        let f0 = rng.gen_range(300.0..1200.0);
        let f1 = rng.gen_range(2500.0..7000.0);
        for i in 0..dur {
            let frac = i as f64 / dur.max(1) as f64;
            let f = f0 + (f1 - f0) * frac;
            let window = (PI * frac).sin().powi(2);
            out[start + i] += 0.3 * window * (2.0 * PI * f * i as f64 / fs).sin();
        }
    }
    normalize_rms(&mut out, 0.1);
    out
}

/// Seeded noise texture of the requested length, RMS-normalized to 0.1.
pub fn noise_signal(
    kind: NoiseTexture,
    len: usize,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut out = match kind {
        NoiseTexture::White => white_noise(len, rng),
        NoiseTexture::Babble => {
            let mut sum = vec![0.0; len];
            for _ in 0..6 {
                let stream = shape_spectrum(&white_noise(len, rng), sample_rate, speech_envelope);
                let env = burst_envelope(len, sample_rate, rng);
                for ((s, v), e) in sum.iter_mut().zip(&stream).zip(&env) {
                    // Babble voices never fully gate off.
                    *s += v * (0.35 + 0.65 * e);
                }
            }
            sum
        }
        NoiseTexture::Factory => {
            let broadband = shape_spectrum(&white_noise(len, rng), sample_rate, |f| {
                1.0 / (1.0 + (f / 1000.0).powi(2)).sqrt()
            });
            let mut out = broadband;
            let fs = f64::from(sample_rate);
            let n_events = (len as f64 / fs * 2.0).ceil() as usize;
            for _ in 0..n_events {
                let at = rng.gen_range(0..len);
                let ring_hz = rng.gen_range(400.0..4000.0);
                let decay = rng.gen_range(30.0..120.0);
                let dur = ((0.08 * fs) as usize).min(len - at);
                for i in 0..dur {
                    let t = i as f64 / fs;
                    out[at + i] += 2.0 * (-decay * t).exp() * (2.0 * PI * ring_hz * t).sin();
                }
            }
            out
        }
    };
    normalize_rms(&mut out, 0.1);
    out
}
