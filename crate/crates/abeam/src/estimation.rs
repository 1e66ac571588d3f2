//! Time–frequency masks and channel-quality weights.
//!
//! Two estimation paths exist. The oracle path computes ideal ratio masks
//! and true channel weights from a scene's stored signal decomposition. The
//! learned path runs small feedforward networks: a mask net mapping a
//! context window of noisy magnitude frames to a per-bin mask, and a weight
//! net mapping pooled (magnitude, mask) features to a scalar quality score
//! in (0,1).

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::acoustics::Scene;
use crate::error::{Error, Result};
use crate::spectral::{stft, Spectrogram, StftConfig};

/// Per-bin real mask in [0,1], shape `(bins, frames)`.
pub type TFMask = Array2<f64>;

/// Absolute floor applied to mask denominators; bins with no energy at all
/// get mask 0 rather than 0/0.
pub const MASK_EPS: f64 = 1e-12;

/// Ideal ratio mask: `|x| / (|x| + |h + n|)` per bin, where `x` is the
/// direct+early speech, `h` the late reverberation, and `n` the noise.
pub fn ideal_ratio_mask(
    direct: &Spectrogram,
    tail: &Spectrogram,
    noise: &Spectrogram,
) -> Result<TFMask> {
    if direct.dim() != tail.dim() || direct.dim() != noise.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", direct.dim()),
            got: format!("{:?} / {:?}", tail.dim(), noise.dim()),
        });
    }
    let mut mask = Array2::zeros(direct.dim());
    for ((idx, m), (d, (t, n))) in mask
        .indexed_iter_mut()
        .zip(direct.iter().zip(tail.iter().zip(noise.iter())))
    {
        let _ = idx;
        let x = d.norm();
        let interference = (t + n).norm();
        *m = x / (x + interference).max(MASK_EPS);
    }
    Ok(mask)
}

/// Channel quality target: `sum|x| / (sum|x| + sum|n|)` over time-domain
/// samples of the direct sound and the additive noise.
pub fn true_channel_weight(direct: &[f64], noise: &[f64]) -> Result<f64> {
    if direct.len() != noise.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples", direct.len()),
            got: format!("{} samples", noise.len()),
        });
    }
    let sx: f64 = direct.iter().map(|v| v.abs()).sum();
    let sn: f64 = noise.iter().map(|v| v.abs()).sum();
    if sx == 0.0 && sn == 0.0 {
        return Err(Error::ZeroEnergy(
            "channel weight undefined: direct and noise both silent".into(),
        ));
    }
    Ok(sx / (sx + sn))
}

/// Average-pooled features for the weight net: per-frequency means of the
/// noisy magnitude spectrogram and of the estimated mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub noisy_pool: Vec<f64>,
    pub mask_pool: Vec<f64>,
}

impl PooledFeature {
    /// Stacked weight-net input `[noisy_pool; mask_pool]`, dimension `2F`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.noisy_pool.len() + self.mask_pool.len(),
            self.noisy_pool.iter().chain(self.mask_pool.iter()).cloned(),
        )
    }
}

/// Average pooling along the frame axis.
pub fn pool_features(noisy_mag: &Array2<f64>, mask: &TFMask) -> Result<PooledFeature> {
    if noisy_mag.dim() != mask.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", noisy_mag.dim()),
            got: format!("{:?}", mask.dim()),
        });
    }
    let (bins, frames) = noisy_mag.dim();
    if frames == 0 {
        return Err(Error::ShapeMismatch {
            expected: "at least one frame".into(),
            got: "0 frames".into(),
        });
    }
    let mean_rows = |a: &Array2<f64>| -> Vec<f64> {
        (0..bins)
            .map(|k| a.row(k).iter().sum::<f64>() / frames as f64)
            .collect()
    };
    Ok(PooledFeature {
        noisy_pool: mean_rows(noisy_mag),
        mask_pool: mean_rows(mask),
    })
}

/// Oracle mask for one channel of a scene: the ideal ratio mask of the
/// device-delay-shifted ground-truth components over `[offset, offset+len)`,
/// so its frames line up with the identically-trimmed observed signal.
pub fn oracle_mask_for_channel(
    scene: &Scene,
    channel: usize,
    offset: usize,
    len: usize,
    cfg: &StftConfig,
) -> Result<TFMask> {
    if channel >= scene.n_channels() || scene.direct[channel].is_empty() {
        return Err(Error::NoGroundTruth(format!(
            "scene has no stored decomposition for channel {}",
            channel
        )));
    }
    let slice = |x: Vec<f64>| -> Result<Vec<f64>> {
        if offset + len > x.len() {
            return Err(Error::OutOfRange(format!(
                "window {}..{} exceeds component length {}",
                offset,
                offset + len,
                x.len()
            )));
        }
        Ok(x[offset..offset + len].to_vec())
    };
    let d = slice(scene.shifted_component(channel, crate::acoustics::Component::Direct))?;
    let t = slice(scene.shifted_component(channel, crate::acoustics::Component::Tail))?;
    let n = slice(scene.shifted_component(channel, crate::acoustics::Component::Noise))?;
    ideal_ratio_mask(&stft(&d, cfg)?, &stft(&t, cfg)?, &stft(&n, cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub act: Activation,
}

/// Small feedforward network: rectifier hidden layers, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Builds a network with the given layer sizes (input first) and random
    /// weights scaled by `1/sqrt(fan_in)`. All hidden layers are rectified
    /// linear; the output layer is sigmoid.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "network needs at least input and output sizes".into(),
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let w = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-scale..scale));
            let b = DVector::zeros(fan_out);
            let act = if i + 2 == sizes.len() {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            layers.push(Dense { w, b, act });
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    /// Deterministic forward pass.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input dim {}", self.input_dim()),
                got: format!("{}", x.len()),
            });
        }
        let mut a = x.clone();
        for layer in &self.layers {
            a = (&layer.w * a + &layer.b).map(|z| layer.act.apply(z));
        }
        Ok(a)
    }

    /// Forward pass keeping every layer's activation (input included).
    fn forward_cached(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let a = (&layer.w * acts.last().unwrap() + &layer.b).map(|z| layer.act.apply(z));
            acts.push(a);
        }
        acts
    }

    /// Mean-squared-error loss of one batch and its gradients, averaged over
    /// the batch and output dimension.
    pub fn loss_and_grads(
        &self,
        xs: &[DVector<f64>],
        ts: &[DVector<f64>],
    ) -> Result<(f64, Vec<(DMatrix<f64>, DVector<f64>)>)> {
        if xs.is_empty() || xs.len() != ts.len() {
            return Err(Error::ShapeMismatch {
                expected: "matching non-empty input/target batches".into(),
                got: format!("{} inputs, {} targets", xs.len(), ts.len()),
            });
        }
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = self
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
            .collect();
        let mut loss = 0.0;
        let out_dim = self.output_dim() as f64;
        let batch = xs.len() as f64;
        for (x, t) in xs.iter().zip(ts) {
            if t.len() != self.output_dim() {
                return Err(Error::ShapeMismatch {
                    expected: format!("target dim {}", self.output_dim()),
                    got: format!("{}", t.len()),
                });
            }
            let acts = self.forward_cached(x);
            let y = acts.last().unwrap();
            let err = y - t;
            loss += err.norm_squared() / out_dim / batch;
            // d loss / d y, then walk the layers backwards.
            let mut delta = err * (2.0 / out_dim / batch);
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let a_out = &acts[li + 1];
                for i in 0..delta.len() {
                    delta[i] *= layer.act.derivative_from_output(a_out[i]);
                }
                grads[li].0 += &delta * acts[li].transpose();
                grads[li].1 += &delta;
                if li > 0 {
                    delta = layer.w.transpose() * delta;
                }
            }
        }
        Ok((loss, grads))
    }
}

/// Training hyperparameters: linear learning-rate ramp, stepped momentum,
/// minibatch SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Epoch index at which momentum switches from early to late.
    pub momentum_switch: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 512,
            lr_start: 0.08,
            lr_end: 0.001,
            momentum_early: 0.5,
            momentum_late: 0.9,
            momentum_switch: 5,
            shuffle_seed: 0,
        }
    }
}

impl TrainHyper {
    /// Learning rate for an epoch: linear from `lr_start` at epoch 0 to
    /// `lr_end` at the final epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        if epoch < self.momentum_switch {
            self.momentum_early
        } else {
            self.momentum_late
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        *self.epoch_losses.first().unwrap_or(&f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&f64::NAN)
    }
}

/// Minibatch SGD with momentum. Aborts with a diagnostic if the loss goes
/// non-finite.
pub fn train(
    mlp: &mut Mlp,
    xs: &[DVector<f64>],
    ts: &[DVector<f64>],
    hyper: &TrainHyper,
) -> Result<TrainReport> {
    if xs.is_empty() || xs.len() != ts.len() {
        return Err(Error::InvalidConfig("training set empty or mismatched".into()));
    }
    if hyper.epochs == 0 || hyper.batch == 0 {
        return Err(Error::InvalidConfig("epochs and batch must be positive".into()));
    }
    let mut velocity: Vec<(DMatrix<f64>, DVector<f64>)> = mlp
        .layers
        .iter()
        .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
        .collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::trial_seed(hyper.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        let lr = hyper.lr_at(epoch);
        let momentum = hyper.momentum_at(epoch);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(hyper.batch) {
            let bx: Vec<DVector<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let bt: Vec<DVector<f64>> = chunk.iter().map(|&i| ts[i].clone()).collect();
            let (loss, grads) = mlp.loss_and_grads(&bx, &bt)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite loss at epoch {} (lr {})",
                    epoch, lr
                )));
            }
            epoch_loss += loss;
            n_batches += 1;
            for (layer, ((vw, vb), (gw, gb))) in
                mlp.layers.iter_mut().zip(velocity.iter_mut().zip(&grads))
            {
                *vw = &*vw * momentum - gw * lr;
                *vb = &*vb * momentum - gb * lr;
                layer.w += &*vw;
                layer.b += &*vb;
            }
        }
        epoch_losses.push(epoch_loss / n_batches as f64);
    }
    Ok(TrainReport { epoch_losses })
}

/// Serialized network: layer sizes plus row-major weight matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Frames of context the mask net consumes (odd); 1 for no context.
    pub context: usize,
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

pub fn save_checkpoint(mlp: &Mlp, context: usize, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: 1,
        context,
        sizes: mlp.layer_sizes(),
        weights: mlp
            .layers
            .iter()
            .map(|l| l.w.transpose().as_slice().to_vec())
            .collect(),
        biases: mlp.layers.iter().map(|l| l.b.as_slice().to_vec()).collect(),
    };
    std::fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Mlp, usize)> {
    let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ckpt.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    if ckpt.sizes.len() < 2
        || ckpt.weights.len() != ckpt.sizes.len() - 1
        || ckpt.biases.len() != ckpt.weights.len()
    {
        return Err(Error::Checkpoint("inconsistent layer counts".into()));
    }
    let mut layers = Vec::with_capacity(ckpt.weights.len());
    for (i, (w, b)) in ckpt.weights.iter().zip(&ckpt.biases).enumerate() {
        let (rows, cols) = (ckpt.sizes[i + 1], ckpt.sizes[i]);
        if w.len() != rows * cols || b.len() != rows {
            return Err(Error::Checkpoint(format!("layer {} has wrong element count", i)));
        }
        layers.push(Dense {
            w: DMatrix::from_row_slice(rows, cols, w),
            b: DVector::from_column_slice(b),
            act: if i + 1 == ckpt.weights.len() {
                Activation::Sigmoid
            } else {
                Activation::Relu
            },
        });
    }
    Ok((Mlp { layers }, ckpt.context))
}

/// Learned mask estimator: a context window of noisy magnitude frames in,
/// one mask column out.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpMaskEstimator {
    pub net: Mlp,
    /// Odd context width in frames.
    pub context: usize,
}

impl MlpMaskEstimator {
    pub fn new(net: Mlp, context: usize) -> Result<Self> {
        if context % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "context window must be odd, got {}",
                context
            )));
        }
        Ok(Self { net, context })
    }

    pub fn estimate(&self, noisy: &Spectrogram) -> Result<TFMask> {
        let (bins, frames) = noisy.dim();
        if self.net.input_dim() != bins * self.context || self.net.output_dim() != bins {
            return Err(Error::ShapeMismatch {
                expected: format!("net {}->{}", bins * self.context, bins),
                got: format!("net {}->{}", self.net.input_dim(), self.net.output_dim()),
            });
        }
        let mag = noisy.map(|c| c.norm());
        let mut mask = Array2::zeros((bins, frames));
        let half = (self.context / 2) as isize;
        let mag_ref = &mag;
        for t in 0..frames as isize {
            let input = DVector::from_iterator(
                bins * self.context,
                (-half..=half).flat_map(|dt| {
                    let tt = (t + dt).clamp(0, frames as isize - 1) as usize;
                    (0..bins).map(move |k| mag_ref[[k, tt]])
                }),
            );
            let out = self.net.forward(&input)?;
            for k in 0..bins {
                mask[[k, t as usize]] = out[k];
            }
        }
        Ok(mask)
    }
}

/// Learned channel-weight estimator over pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeightEstimator {
    pub net: Mlp,
}

impl MlpWeightEstimator {
    pub fn estimate(&self, feat: &PooledFeature) -> Result<f64> {
        let input = feat.stacked();
        if input.len() != self.net.input_dim() || self.net.output_dim() != 1 {
            return Err(Error::ShapeMismatch {
                expected: format!("net {}->1", input.len()),
                got: format!("net {}->{}", self.net.input_dim(), self.net.output_dim()),
            });
        }
        Ok(self.net.forward(&input)?[0])
    }
}
