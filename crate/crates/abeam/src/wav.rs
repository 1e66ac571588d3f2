//! WAV import/export.
//!
//! Supports RIFF PCM with 16-bit integer or 32-bit float samples, mono or
//! multichannel. Samples are exchanged with the rest of the crate as `f64`
//! in nominal [-1, 1]; integer writes saturate out-of-range values and
//! report how many samples were clipped.

use std::path::Path;

use crate::error::{Error, Result};

/// Deinterleaved audio: one sample vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl WavData {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Int16,
    Float32,
}

/// Reads a 16-bit PCM or 32-bit float WAV file.
pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<WavData> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::InvalidConfig("wav file reports zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::InvalidConfig(format!(
                "unsupported wav encoding: {:?} {} bits (expected 16-bit int or 32-bit float)",
                fmt, bits
            )))
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    Ok(WavData {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes channels to a WAV file.
///
/// Returns the number of samples clipped (saturated) on write; always 0 for
/// 32-bit float. All channels must share one length.
pub fn write_wav<P: AsRef<Path>>(
    path: P,
    sample_rate: u32,
    channels: &[Vec<f64>],
    format: SampleFormat,
) -> Result<usize> {
    if channels.is_empty() {
        return Err(Error::InvalidConfig("no channels to write".into()));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch {
            expected: format!("all channels of length {}", len),
            got: channels.iter().map(|c| c.len().to_string()).collect::<Vec<_>>().join(","),
        });
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: match format {
            SampleFormat::Int16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Int16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let mut clipped = 0usize;
    for i in 0..len {
        for ch in channels {
            let v = ch[i];
            match format {
                SampleFormat::Int16 => {
                    let scaled = v * 32768.0;
                    if !(-32768.0..=32767.0).contains(&scaled) {
                        clipped += 1;
                    }
                    writer.write_sample(scaled.round().clamp(-32768.0, 32767.0) as i16)?;
                }
                SampleFormat::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(clipped)
}
