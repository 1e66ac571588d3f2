//! Experiment orchestration.
//!
//! Runs the full pipeline — scene synthesis, weight estimation, time
//! synchronization, channel selection, beamforming, evaluation — across
//! seeded scene grids, and emits deterministic CSV tables. Also hosts the
//! γ-sweep, the Monte Carlo distance table, and the toy training-data
//! builders for the learned estimators.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::acoustics::{generate_scene, Component, DistanceStats, NoiseField, SceneConfig};
use crate::beamformer::enhance;
use crate::error::{Error, Result};
use crate::estimation::{
    ideal_ratio_mask, load_checkpoint, pool_features, save_checkpoint, train,
    true_channel_weight, Mlp, MlpMaskEstimator, MlpWeightEstimator, TFMask, TrainHyper,
    TrainReport,
};
use crate::metrics::evaluate;
use crate::selection::{
    argmax_q, default_embedding_dim, default_fixed_n, select_1best, select_all, select_auto_n,
    select_fixed_n, select_learning_n, select_soft_n,
};
use crate::signalgen::{self, NoiseTexture};
use crate::spectral::{stft, Spectrogram, StftConfig};
use crate::sync::{align_with_delays, synchronize, SyncResult, DEFAULT_MAX_LAG_S};
use crate::trial_seed;

/// Checkpoint filenames inside a learned-estimator directory.
pub const MASK_NET_FILE: &str = "mask_net.json";
pub const WEIGHT_NET_FILE: &str = "weight_net.json";

/// Channel-selection algorithm choices, plus the single-random-channel
/// baseline used for ordering comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "1best")]
    OneBest,
    #[serde(rename = "all")]
    All,
    #[serde(rename = "fixedN")]
    FixedN,
    #[serde(rename = "autoN")]
    AutoN,
    #[serde(rename = "softN")]
    SoftN,
    #[serde(rename = "learningN")]
    LearningN,
    #[serde(rename = "random1")]
    Random1,
}

impl Algorithm {
    pub const ALL_NAMES: [&'static str; 7] = [
        "1best",
        "all",
        "fixedN",
        "autoN",
        "softN",
        "learningN",
        "random1",
    ];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "1best" => Some(Self::OneBest),
            "all" => Some(Self::All),
            "fixedN" => Some(Self::FixedN),
            "autoN" => Some(Self::AutoN),
            "softN" => Some(Self::SoftN),
            "learningN" => Some(Self::LearningN),
            "random1" => Some(Self::Random1),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::OneBest => "1best",
            Self::All => "all",
            Self::FixedN => "fixedN",
            Self::AutoN => "autoN",
            Self::SoftN => "softN",
            Self::LearningN => "learningN",
            Self::Random1 => "random1",
        }
    }

    /// Whether the algorithm's output depends on γ.
    pub fn gamma_dependent(&self) -> bool {
        matches!(self, Self::AutoN | Self::SoftN | Self::LearningN)
    }
}

/// Synchronization arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Channels used as observed, no alignment.
    None,
    /// Alignment by the scene's true device + propagation offsets.
    GroundTruth,
    /// Alignment by GCC-PHAT estimates.
    Estimated,
}

impl SyncMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::None),
            "ground_truth" => Some(Self::GroundTruth),
            "estimated" => Some(Self::Estimated),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::GroundTruth => "ground_truth",
            Self::Estimated => "estimated",
        }
    }
}

/// Where masks and channel weights come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Ideal masks and true weights from the scene decomposition.
    Oracle,
    /// Learned networks loaded from a checkpoint directory containing
    /// `mask_net.json` and `weight_net.json`.
    Mlp { dir: PathBuf },
}

impl EstimatorMode {
    /// Parses the CLI form: `oracle` or `mlp:<dir>`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "oracle" {
            return Some(Self::Oracle);
        }
        s.strip_prefix("mlp:").map(|dir| Self::Mlp {
            dir: PathBuf::from(dir),
        })
    }
}

fn default_noise_kind() -> NoiseTexture {
    NoiseTexture::White
}
fn default_noise_field() -> NoiseField {
    NoiseField::Diffuse
}
fn default_sync_modes() -> Vec<SyncMode> {
    vec![SyncMode::Estimated]
}
fn default_gamma() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    1.0
}
fn default_estimator() -> EstimatorMode {
    EstimatorMode::Oracle
}
fn default_utterance_s() -> f64 {
    3.0
}

/// Full experiment description. Defaults: γ = 0.5, N = √M, J = M/2, σ = 1,
/// oracle estimators, 3 s utterances, estimated synchronization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_scenes: usize,
    pub m: usize,
    #[serde(default = "default_noise_kind")]
    pub noise_kind: NoiseTexture,
    #[serde(default = "default_noise_field")]
    pub noise_field: NoiseField,
    pub snrato_db: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_sync_modes")]
    pub sync_modes: Vec<SyncMode>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Fixed-N selection size; `None` means `round(√M)`.
    #[serde(default)]
    pub fixed_n: Option<usize>,
    /// Embedding dimension for learning-N; `None` means `M/2`.
    #[serde(default)]
    pub j: Option<usize>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorMode,
    #[serde(default = "default_utterance_s")]
    pub utterance_s: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::InvalidConfig("n_scenes must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.snrato_db.is_empty() {
            return Err(Error::InvalidConfig("snrato_db list is empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("algorithm list is empty".into()));
        }
        if self.sync_modes.is_empty() {
            return Err(Error::InvalidConfig("sync_modes list is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::OutOfRange(format!("gamma {} outside [0,1]", self.gamma)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::OutOfRange(format!("sigma {} must be positive", self.sigma)));
        }
        if self.utterance_s <= 0.0 {
            return Err(Error::InvalidConfig("utterance_s must be positive".into()));
        }
        if let Some(n) = self.fixed_n {
            if n == 0 || n > self.m {
                return Err(Error::OutOfRange(format!("fixed_n {} outside 1..={}", n, self.m)));
            }
        }
        if let Some(j) = self.j {
            if j == 0 || j > self.m {
                return Err(Error::OutOfRange(format!("j {} outside 1..={}", j, self.m)));
            }
        }
        Ok(())
    }

    pub fn effective_fixed_n(&self) -> usize {
        self.fixed_n.unwrap_or_else(|| default_fixed_n(self.m))
    }

    pub fn effective_j(&self) -> usize {
        self.j.unwrap_or_else(|| default_embedding_dim(self.m))
    }
}

/// One evaluated (scene, algorithm, sync arm) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scene: usize,
    pub seed: u64,
    pub snrato_db: f64,
    pub noise_kind: NoiseTexture,
    pub noise_field: NoiseField,
    pub m: usize,
    pub algorithm: Algorithm,
    pub sync_mode: SyncMode,
    pub n_selected: usize,
    pub si_sdr_db: f64,
    pub snr_variant: f64,
}

pub const RESULT_CSV_HEADER: &str =
    "scene,seed,snrato_db,noise_kind,noise_field,m,algorithm,sync_mode,n_selected,si_sdr_db,snr_variant";

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.4},{:.6}",
            self.scene,
            self.seed,
            self.snrato_db,
            self.noise_kind.name(),
            self.noise_field.name(),
            self.m,
            self.algorithm.name(),
            self.sync_mode.name(),
            self.n_selected,
            self.si_sdr_db,
            self.snr_variant
        )
    }
}

/// A recorded per-scene failure; the run continues past these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub scene: usize,
    pub snrato_db: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub csv: String,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureRecord>,
    /// Number of (scene × SNRatO) units attempted.
    pub units: usize,
}

impl ExperimentReport {
    pub fn failure_fraction(&self) -> f64 {
        if self.units == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.units as f64
        }
    }

    /// Mean SI-SDR over rows matching an (algorithm, sync) arm.
    pub fn mean_si_sdr(&self, algorithm: Algorithm, sync_mode: SyncMode) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.sync_mode == sync_mode)
            .map(|r| r.si_sdr_db)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Estimators resolved from the config, loaded once per run.
pub enum LoadedEstimator {
    Oracle,
    Mlp {
        mask: MlpMaskEstimator,
        weight: MlpWeightEstimator,
    },
}

pub fn load_estimators(mode: &EstimatorMode) -> Result<LoadedEstimator> {
    match mode {
        EstimatorMode::Oracle => Ok(LoadedEstimator::Oracle),
        EstimatorMode::Mlp { dir } => {
            let (mask_net, context) = load_checkpoint(&dir.join(MASK_NET_FILE))?;
            let (weight_net, _) = load_checkpoint(&dir.join(WEIGHT_NET_FILE))?;
            Ok(LoadedEstimator::Mlp {
                mask: MlpMaskEstimator::new(mask_net, context)?,
                weight: MlpWeightEstimator { net: weight_net },
            })
        }
    }
}

/// Channel weights for a scene under the chosen estimator: true weights
/// from the decomposition, or the weight net on pooled noisy features.
pub fn channel_weights(
    scene: &crate::acoustics::Scene,
    est: &LoadedEstimator,
    cfg: &StftConfig,
) -> Result<Vec<f64>> {
    match est {
        LoadedEstimator::Oracle => (0..scene.n_channels())
            .map(|i| true_channel_weight(&scene.direct[i], &scene.noise[i]))
            .collect(),
        LoadedEstimator::Mlp { mask, weight } => (0..scene.n_channels())
            .map(|i| {
                let spec = stft(&scene.observed[i], cfg)?;
                let mask_est = mask.estimate(&spec)?;
                let mag = spec.map(|c| c.norm());
                let pooled = pool_features(&mag, &mask_est)?;
                weight.estimate(&pooled)
            })
            .collect(),
    }
}

/// Ground-truth components of channel `n`, sliced to the channel's aligned
/// window, in (direct, tail, noise) order.
fn aligned_components(
    scene: &crate::acoustics::Scene,
    sync: &SyncResult,
    n: usize,
) -> [Vec<f64>; 3] {
    let start = (sync.window_start as i64 + sync.delays[n]) as usize;
    let len = sync.aligned_len();
    let slice = |which: Component| -> Vec<f64> {
        let full = scene.shifted_component(n, which);
        full[start..start + len].to_vec()
    };
    [
        slice(Component::Direct),
        slice(Component::Tail),
        slice(Component::Noise),
    ]
}

/// Single random channel for the baseline arm, drawn from a stream keyed to
/// the scene seed so it is independent of the algorithm list.
pub fn random_baseline_channel(scene_seed: u64, m: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(scene_seed, 7701));
    rng.gen_range(0..m)
}

/// Synchronizes a scene's observed channels under the chosen arm. The
/// reference is the highest-weight channel throughout; ground-truth mode
/// aligns by the scene's true capture offsets, estimated mode by GCC-PHAT.
pub fn sync_scene(
    scene: &crate::acoustics::Scene,
    q: &[f64],
    mode: SyncMode,
) -> Result<SyncResult> {
    let m = scene.n_channels();
    match mode {
        SyncMode::Estimated => {
            let max_lag =
                (DEFAULT_MAX_LAG_S * f64::from(scene.sample_rate)).round() as usize;
            synchronize(&scene.observed, q, max_lag)
        }
        SyncMode::GroundTruth => {
            let reference = argmax_q(q);
            let ref_arrival = scene.ground_truth_arrival(reference) as i64;
            let delays: Vec<i64> = (0..m)
                .map(|n| scene.ground_truth_arrival(n) as i64 - ref_arrival)
                .collect();
            align_with_delays(&scene.observed, &delays, reference)
        }
        SyncMode::None => align_with_delays(&scene.observed, &vec![0i64; m], argmax_q(q)),
    }
}

/// Per-channel masks on the synchronized signals.
pub fn channel_masks(
    scene: &crate::acoustics::Scene,
    sync: &SyncResult,
    est: &LoadedEstimator,
    cfg: &StftConfig,
) -> Result<Vec<TFMask>> {
    match est {
        LoadedEstimator::Oracle => (0..scene.n_channels())
            .map(|n| {
                let [d, t, nz] = aligned_components(scene, sync, n);
                ideal_ratio_mask(&stft(&d, cfg)?, &stft(&t, cfg)?, &stft(&nz, cfg)?)
            })
            .collect(),
        LoadedEstimator::Mlp { mask, .. } => sync
            .aligned
            .iter()
            .map(|ch| mask.estimate(&stft(ch, cfg)?))
            .collect(),
    }
}

fn run_unit(
    cfg: &ExperimentConfig,
    est: &LoadedEstimator,
    scene_idx: usize,
    snr_idx: usize,
) -> Result<Vec<ResultRow>> {
    let unit = (scene_idx * cfg.snrato_db.len() + snr_idx) as u64;
    let seed = trial_seed(cfg.master_seed, unit);
    let snrato_db = cfg.snrato_db[snr_idx];
    let scene_cfg = SceneConfig::new(cfg.m, snrato_db, cfg.noise_field);
    let scene = generate_scene(&scene_cfg, cfg.noise_kind, cfg.utterance_s, seed)?;
    let stft_cfg = StftConfig::default();
    let m = cfg.m;
    let q = channel_weights(&scene, est, &stft_cfg)?;
    let random_channel = random_baseline_channel(seed, m);
    let mut rows = Vec::new();
    for &sync_mode in &cfg.sync_modes {
        let sync = sync_scene(&scene, &q, sync_mode)?;
        let masks = channel_masks(&scene, &sync, est, &stft_cfg)?;
        let mut learning_specs: Option<Vec<Spectrogram>> = None;
        for &algorithm in &cfg.algorithms {
            let p = match algorithm {
                Algorithm::OneBest => select_1best(&q)?,
                Algorithm::All => select_all(m)?,
                Algorithm::FixedN => select_fixed_n(&q, cfg.effective_fixed_n())?,
                Algorithm::AutoN => select_auto_n(&q, cfg.gamma)?,
                Algorithm::SoftN => select_soft_n(&q, cfg.gamma)?,
                Algorithm::LearningN => {
                    if learning_specs.is_none() {
                        learning_specs = Some(
                            sync.aligned
                                .iter()
                                .map(|c| stft(c, &stft_cfg))
                                .collect::<Result<_>>()?,
                        );
                    }
                    select_learning_n(
                        learning_specs.as_ref().unwrap(),
                        &q,
                        cfg.gamma,
                        cfg.sigma,
                        cfg.effective_j(),
                    )?
                    .0
                }
                Algorithm::Random1 => {
                    let mut p = vec![0.0; m];
                    p[random_channel] = 1.0;
                    p
                }
            };
            let out = enhance(&sync.aligned, &masks, &p, &q, &stft_cfg, false)?;
            let ref_start = (sync.window_start as i64 + sync.delays[out.reference]) as usize;
            let reference_direct = {
                let full = scene.shifted_component(out.reference, Component::Direct);
                full[ref_start..ref_start + out.signal.len()].to_vec()
            };
            let ev = evaluate(&reference_direct, &out.signal)?;
            rows.push(ResultRow {
                scene: scene_idx,
                seed,
                snrato_db,
                noise_kind: cfg.noise_kind,
                noise_field: cfg.noise_field,
                m,
                algorithm,
                sync_mode,
                n_selected: p.iter().filter(|&&v| v > 0.0).count(),
                si_sdr_db: ev.si_sdr_db,
                snr_variant: ev.snr_variant,
            });
        }
    }
    Ok(rows)
}

/// Runs the configured grid. Scene units execute in parallel; rows are
/// emitted in deterministic (scene, SNRatO, sync, algorithm) order
/// regardless of scheduling. Per-unit failures are recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let est = load_estimators(&cfg.estimator)?;
    let unit_ids: Vec<(usize, usize)> = (0..cfg.n_scenes)
        .flat_map(|s| (0..cfg.snrato_db.len()).map(move |k| (s, k)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<Vec<ResultRow>>)> = unit_ids
        .par_iter()
        .map(|&(s, k)| (s, k, run_unit(cfg, &est, s, k)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (s, k, outcome) in outcomes {
        match outcome {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => failures.push(FailureRecord {
                scene: s,
                snrato_db: cfg.snrato_db[k],
                message: e.to_string(),
            }),
        }
    }
    let mut csv = String::from(RESULT_CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    let units = unit_ids.len();
    if !failures.is_empty() && failures.len() == units {
        return Err(Error::InvalidConfig(format!(
            "every scene unit failed; first error: {}",
            failures[0].message
        )));
    }
    Ok(ExperimentReport {
        csv,
        rows,
        failures,
        units,
    })
}

/// Aggregate row of a γ sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub algorithm: Algorithm,
    pub units: usize,
    pub mean_n_selected: f64,
    pub mean_si_sdr_db: f64,
}

pub const GAMMA_CSV_HEADER: &str = "gamma,algorithm,units,mean_n_selected,mean_si_sdr_db";

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweepReport {
    pub csv: String,
    pub rows: Vec<GammaRow>,
    /// True when soft-N and auto-N produced identical supports on every
    /// (scene, γ) pair in the sweep (only checked when both are present).
    pub soft_auto_supports_equal: bool,
}

/// Sweeps γ over the γ-dependent algorithms in the config, holding scenes,
/// weights, synchronization, and masks fixed per unit.
pub fn run_gamma_sweep(cfg: &ExperimentConfig, gammas: &[f64]) -> Result<GammaSweepReport> {
    cfg.validate()?;
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("gamma list is empty".into()));
    }
    for &g in gammas {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::OutOfRange(format!("gamma {} outside [0,1]", g)));
        }
    }
    let algorithms: Vec<Algorithm> = cfg
        .algorithms
        .iter()
        .copied()
        .filter(Algorithm::gamma_dependent)
        .collect();
    if algorithms.is_empty() {
        return Err(Error::InvalidConfig(
            "no gamma-dependent algorithms in the config".into(),
        ));
    }
    let est = load_estimators(&cfg.estimator)?;
    let sync_mode = cfg.sync_modes[0];
    let unit_ids: Vec<(usize, usize)> = (0..cfg.n_scenes)
        .flat_map(|s| (0..cfg.snrato_db.len()).map(move |k| (s, k)))
        .collect();
    struct UnitSweep {
        // Indexed [gamma][algorithm].
        n_selected: Vec<Vec<usize>>,
        si_sdr: Vec<Vec<f64>>,
        supports_equal: bool,
    }
    let per_unit: Vec<UnitSweep> = unit_ids
        .par_iter()
        .map(|&(scene_idx, snr_idx)| -> Result<UnitSweep> {
            let unit = (scene_idx * cfg.snrato_db.len() + snr_idx) as u64;
            let seed = trial_seed(cfg.master_seed, unit);
            let scene_cfg = SceneConfig::new(cfg.m, cfg.snrato_db[snr_idx], cfg.noise_field);
            let scene = generate_scene(&scene_cfg, cfg.noise_kind, cfg.utterance_s, seed)?;
            let stft_cfg = StftConfig::default();
            let q = channel_weights(&scene, &est, &stft_cfg)?;
            let sync = sync_scene(&scene, &q, sync_mode)?;
            let masks = channel_masks(&scene, &sync, &est, &stft_cfg)?;
            let specs: Option<Vec<Spectrogram>> =
                if algorithms.contains(&Algorithm::LearningN) {
                    Some(
                        sync.aligned
                            .iter()
                            .map(|c| stft(c, &stft_cfg))
                            .collect::<Result<_>>()?,
                    )
                } else {
                    None
                };
            let mut n_selected = vec![vec![0usize; algorithms.len()]; gammas.len()];
            let mut si_sdr = vec![vec![0.0f64; algorithms.len()]; gammas.len()];
            let mut supports_equal = true;
            for (gi, &gamma) in gammas.iter().enumerate() {
                let mut auto_support: Option<Vec<bool>> = None;
                let mut soft_support: Option<Vec<bool>> = None;
                for (ai, &algorithm) in algorithms.iter().enumerate() {
                    let p = match algorithm {
                        Algorithm::AutoN => select_auto_n(&q, gamma)?,
                        Algorithm::SoftN => select_soft_n(&q, gamma)?,
                        Algorithm::LearningN => {
                            select_learning_n(
                                specs.as_ref().unwrap(),
                                &q,
                                gamma,
                                cfg.sigma,
                                cfg.effective_j(),
                            )?
                            .0
                        }
                        _ => unreachable!("filtered to gamma-dependent algorithms"),
                    };
                    let support: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
                    match algorithm {
                        Algorithm::AutoN => auto_support = Some(support.clone()),
                        Algorithm::SoftN => soft_support = Some(support.clone()),
                        _ => {}
                    }
                    let out = enhance(&sync.aligned, &masks, &p, &q, &stft_cfg, false)?;
                    let ref_start =
                        (sync.window_start as i64 + sync.delays[out.reference]) as usize;
                    let reference_direct = {
                        let full = scene.shifted_component(out.reference, Component::Direct);
                        full[ref_start..ref_start + out.signal.len()].to_vec()
                    };
                    let ev = evaluate(&reference_direct, &out.signal)?;
                    n_selected[gi][ai] = support.iter().filter(|&&s| s).count();
                    si_sdr[gi][ai] = ev.si_sdr_db;
                }
                if let (Some(a), Some(s)) = (&auto_support, &soft_support) {
                    if a != s {
                        supports_equal = false;
                    }
                }
            }
            Ok(UnitSweep {
                n_selected,
                si_sdr,
                supports_equal,
            })
        })
        .collect::<Result<_>>()?;
    let units = per_unit.len();
    let mut rows = Vec::new();
    let mut csv = String::from(GAMMA_CSV_HEADER);
    csv.push('\n');
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (ai, &algorithm) in algorithms.iter().enumerate() {
            let mean_n = per_unit
                .iter()
                .map(|u| u.n_selected[gi][ai] as f64)
                .sum::<f64>()
                / units as f64;
            let mean_si = per_unit.iter().map(|u| u.si_sdr[gi][ai]).sum::<f64>() / units as f64;
            let row = GammaRow {
                gamma,
                algorithm,
                units,
                mean_n_selected: mean_n,
                mean_si_sdr_db: mean_si,
            };
            csv.push_str(&format!(
                "{},{},{},{:.4},{:.4}\n",
                row.gamma,
                row.algorithm.name(),
                row.units,
                row.mean_n_selected,
                row.mean_si_sdr_db
            ));
            rows.push(row);
        }
    }
    let soft_auto_supports_equal = per_unit.iter().all(|u| u.supports_equal);
    Ok(GammaSweepReport {
        csv,
        rows,
        soft_auto_supports_equal,
    })
}

/// Distance-statistics table for the Monte Carlo study: one block per
/// array strategy.
pub fn montecarlo_csv(stats: &[DistanceStats; 3]) -> String {
    let blocks = ["conventional", "adhoc_average", "adhoc_best"];
    let mut csv = String::from("block,metric,value\n");
    for (name, st) in blocks.iter().zip(stats) {
        csv.push_str(&format!("{},mean_m,{:.6}\n", name, st.mean_m));
        csv.push_str(&format!("{},std_m,{:.6}\n", name, st.std_m));
        csv.push_str(&format!("{},frac_above_5m,{:.6}\n", name, st.fraction_above(5.0)));
    }
    csv
}

/// Builds (context-window magnitude, mask-column) training pairs from
/// synthetic noisy utterances.
pub fn build_mask_training_data(
    n_utts: usize,
    texture: NoiseTexture,
    cfg: &StftConfig,
    context: usize,
    sample_rate: u32,
    utterance_s: f64,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if context % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "context window must be odd, got {}",
            context
        )));
    }
    let base = trial_seed(seed, 0xA);
    let len = (utterance_s * f64::from(sample_rate)).round() as usize;
    let bins = cfg.n_bins();
    let half = (context / 2) as isize;
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for u in 0..n_utts {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(base, u as u64));
        let clean = signalgen::speech_like(len, sample_rate, &mut rng);
        let mut noise = signalgen::noise_signal(texture, len, sample_rate, &mut rng);
        let snr_db: f64 = rng.gen_range(-5.0..15.0);
        let p_c = clean.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let p_n = noise.iter().map(|v| v * v).sum::<f64>() / len as f64;
        if p_n <= 0.0 {
            continue;
        }
        let g = (p_c / p_n / 10f64.powf(snr_db / 10.0)).sqrt();
        for v in noise.iter_mut() {
            *v *= g;
        }
        let mix: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
        let spec_mix = stft(&mix, cfg)?;
        let spec_clean = stft(&clean, cfg)?;
        let spec_noise = stft(&noise, cfg)?;
        let zeros = Spectrogram::zeros(spec_clean.dim());
        let mask = ideal_ratio_mask(&spec_clean, &zeros, &spec_noise)?;
        let mag = spec_mix.map(|c| c.norm());
        let mag_ref = &mag;
        let frames = mag.ncols();
        for t in 0..frames as isize {
            let input = DVector::from_iterator(
                bins * context,
                (-half..=half).flat_map(|dt| {
                    let tt = (t + dt).clamp(0, frames as isize - 1) as usize;
                    (0..bins).map(move |k| mag_ref[[k, tt]])
                }),
            );
            let target = DVector::from_iterator(bins, (0..bins).map(|k| mask[[k, t as usize]]));
            xs.push(input);
            ts.push(target);
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidConfig("mask training set came out empty".into()));
    }
    Ok((xs, ts))
}

/// Builds (pooled-feature, true-weight) training pairs from synthetic
/// scenes. The seed stream is disjoint from the mask-net builder's.
pub fn build_weight_training_data(
    n_scenes: usize,
    m: usize,
    texture: NoiseTexture,
    noise_field: NoiseField,
    cfg: &StftConfig,
    utterance_s: f64,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let base = trial_seed(seed, 0xB);
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for i in 0..n_scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(base, i as u64));
        let snrato_db = rng.gen_range(-5.0..15.0);
        let scene_cfg = SceneConfig::new(m, snrato_db, noise_field);
        let scene = generate_scene(&scene_cfg, texture, utterance_s, rng.gen())?;
        for ch in 0..m {
            let spec = stft(&scene.observed[ch], cfg)?;
            let d = stft(&scene.shifted_component(ch, Component::Direct), cfg)?;
            let t = stft(&scene.shifted_component(ch, Component::Tail), cfg)?;
            let n = stft(&scene.shifted_component(ch, Component::Noise), cfg)?;
            let mask = ideal_ratio_mask(&d, &t, &n)?;
            let mag = spec.map(|c| c.norm());
            let pooled = pool_features(&mag, &mask)?;
            let q = true_channel_weight(&scene.direct[ch], &scene.noise[ch])?;
            xs.push(pooled.stacked());
            ts.push(DVector::from_element(1, q));
        }
    }
    Ok((xs, ts))
}

/// Trains the toy mask net and writes its checkpoint.
pub fn train_toy_mask_net(
    xs: &[DVector<f64>],
    ts: &[DVector<f64>],
    context: usize,
    hidden: usize,
    hyper: &TrainHyper,
    out_path: &Path,
    init_seed: u64,
) -> Result<(MlpMaskEstimator, TrainReport)> {
    let input = xs[0].len();
    let output = ts[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut net = Mlp::new(&[input, hidden, hidden, output], &mut rng)?;
    let report = train(&mut net, xs, ts, hyper)?;
    save_checkpoint(&net, context, out_path)?;
    Ok((MlpMaskEstimator::new(net, context)?, report))
}

/// Trains the toy weight net and writes its checkpoint.
pub fn train_toy_weight_net(
    xs: &[DVector<f64>],
    ts: &[DVector<f64>],
    hidden: usize,
    hyper: &TrainHyper,
    out_path: &Path,
    init_seed: u64,
) -> Result<(MlpWeightEstimator, TrainReport)> {
    let input = xs[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut net = Mlp::new(&[input, hidden, 1], &mut rng)?;
    let report = train(&mut net, xs, ts, hyper)?;
    save_checkpoint(&net, 1, out_path)?;
    Ok((MlpWeightEstimator { net }, report))
}
