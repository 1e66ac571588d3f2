//! Command-line driver for ad-hoc microphone array enhancement.
//!
//! Verbs: `simulate` a scene to WAV + manifest, `enhance` a scene directory
//! through the full pipeline, run a batch `experiment` grid from a JSON
//! config, run the `montecarlo` distance study, sweep the selection
//! threshold with `gamma-sweep`, and `train-toy` the learned estimators.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use abeam::acoustics::{
    export_scene, generate_scene, import_scene, monte_carlo_distances, NoiseField, Scene,
    SceneConfig, STUDY_ROOM_SIDE_M,
};
use abeam::estimation::TrainHyper;
use abeam::experiment::{
    build_mask_training_data, build_weight_training_data, channel_masks, channel_weights,
    load_estimators, montecarlo_csv, random_baseline_channel, run_experiment, run_gamma_sweep,
    sync_scene, train_toy_mask_net, train_toy_weight_net, Algorithm, EstimatorMode,
    ExperimentConfig, SyncMode, MASK_NET_FILE, WEIGHT_NET_FILE,
};
use abeam::metrics::evaluate;
use abeam::selection::{
    default_embedding_dim, default_fixed_n, select_1best, select_all, select_auto_n,
    select_fixed_n, select_learning_n, select_soft_n, SelectionResult,
};
use abeam::signalgen::NoiseTexture;
use abeam::spectral::{stft, StftConfig};
use abeam::sync::{delay_report, DelayReportRow};
use abeam::trial_seed;
use abeam::wav::{write_wav, SampleFormat};

#[derive(Parser)]
#[command(
    name = "abeam",
    version,
    about = "Ad-hoc microphone array speech enhancement experiments"
)]
struct Cli {
    /// Worker threads for scene-parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a multichannel scene and write WAVs plus a manifest.
    Simulate {
        /// Number of microphones.
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Scenario SNR at the origin, dB.
        #[arg(long, default_value_t = 10.0)]
        snrato_db: f64,
        /// Noise texture: white | babble | factory.
        #[arg(long, default_value = "white")]
        noise: String,
        /// Noise field: diffuse | point.
        #[arg(long, default_value = "diffuse")]
        field: String,
        /// Utterance length, seconds.
        #[arg(long, default_value_t = 3.0)]
        utterance_s: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Enhance a scene directory written by `simulate`.
    Enhance {
        #[arg(long)]
        scene_dir: PathBuf,
        /// 1best | all | fixedN | autoN | softN | learningN | random1.
        #[arg(long, default_value = "autoN")]
        algorithm: String,
        /// none | ground_truth | estimated.
        #[arg(long, default_value = "estimated")]
        sync: String,
        /// oracle | mlp:<checkpoint dir>.
        #[arg(long, default_value = "oracle")]
        estimator: String,
        /// Selection threshold for autoN / softN / learningN.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Selection size for fixedN (default round(sqrt(M))).
        #[arg(long)]
        fixed_n: Option<usize>,
        /// Embedding dimension for learningN (default M/2).
        #[arg(long)]
        j: Option<usize>,
        /// Affinity kernel width for learningN.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Seed for the random1 baseline when the manifest has none.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the synchronized per-channel WAVs.
        #[arg(long)]
        dump: bool,
    },
    /// Run a batch experiment grid described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also export every generated scene (WAVs + manifests).
        #[arg(long)]
        dump: bool,
    },
    /// Monte Carlo study of speaker-to-array distances.
    Montecarlo {
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Square room side, metres (default: 20 m maximum distance).
        #[arg(long)]
        side_m: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write per-trial distances.
        #[arg(long)]
        dump: bool,
    },
    /// Sweep the selection threshold over the gamma-dependent algorithms.
    GammaSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
        gammas: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the toy mask and weight networks on synthetic data.
    TrainToy {
        /// Noisy utterances for the mask net.
        #[arg(long, default_value_t = 6)]
        utts: usize,
        /// Scenes for the weight net.
        #[arg(long, default_value_t = 6)]
        scenes: usize,
        /// Microphones per weight-net scene.
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value = "white")]
        noise: String,
        #[arg(long, default_value = "diffuse")]
        field: String,
        /// Odd context width, frames.
        #[arg(long, default_value_t = 3)]
        context: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        utterance_s: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignore failure: the pool may already be initialized in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            m,
            snrato_db,
            noise,
            field,
            utterance_s,
            seed,
            out_dir,
        } => cmd_simulate(m, snrato_db, &noise, &field, utterance_s, seed, &out_dir),
        Command::Enhance {
            scene_dir,
            algorithm,
            sync,
            estimator,
            gamma,
            fixed_n,
            j,
            sigma,
            seed,
            out_dir,
            dump,
        } => cmd_enhance(EnhanceArgs {
            scene_dir,
            algorithm,
            sync,
            estimator,
            gamma,
            fixed_n,
            j,
            sigma,
            seed,
            out_dir,
            dump,
        }),
        Command::Experiment {
            config,
            out_dir,
            dump,
        } => cmd_experiment(&config, &out_dir, dump),
        Command::Montecarlo {
            m,
            trials,
            seed,
            side_m,
            out_dir,
            dump,
        } => cmd_montecarlo(m, trials, seed, side_m, &out_dir, dump),
        Command::GammaSweep {
            config,
            gammas,
            out_dir,
        } => cmd_gamma_sweep(&config, &gammas, &out_dir),
        Command::TrainToy {
            utts,
            scenes,
            m,
            noise,
            field,
            context,
            hidden,
            epochs,
            utterance_s,
            seed,
            out_dir,
        } => cmd_train_toy(TrainToyArgs {
            utts,
            scenes,
            m,
            noise,
            field,
            context,
            hidden,
            epochs,
            utterance_s,
            seed,
            out_dir,
        }),
    }
}

fn parse_noise(name: &str) -> Result<NoiseTexture> {
    NoiseTexture::parse(name)
        .ok_or_else(|| anyhow!("unknown noise texture '{name}' (white | babble | factory)"))
}

fn parse_field(name: &str) -> Result<NoiseField> {
    NoiseField::parse(name).ok_or_else(|| anyhow!("unknown noise field '{name}' (diffuse | point)"))
}

fn cmd_simulate(
    m: usize,
    snrato_db: f64,
    noise: &str,
    field: &str,
    utterance_s: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let texture = parse_noise(noise)?;
    let field = parse_field(field)?;
    let cfg = SceneConfig::new(m, snrato_db, field);
    let scene = generate_scene(&cfg, texture, utterance_s, seed)
        .with_context(|| "scene synthesis failed")?;
    export_scene(&scene, out_dir).with_context(|| format!("writing {}", out_dir.display()))?;
    println!(
        "wrote scene: {} channels, {} samples at {} Hz, seed {} -> {}",
        scene.n_channels(),
        scene.len(),
        scene.sample_rate,
        seed,
        out_dir.display()
    );
    Ok(())
}

struct EnhanceArgs {
    scene_dir: PathBuf,
    algorithm: String,
    sync: String,
    estimator: String,
    gamma: f64,
    fixed_n: Option<usize>,
    j: Option<usize>,
    sigma: f64,
    seed: u64,
    out_dir: PathBuf,
    dump: bool,
}

#[derive(serde::Serialize)]
struct EnhanceMetrics {
    si_sdr_db: f64,
    snr_variant: f64,
}

#[derive(serde::Serialize)]
struct EnhanceReport {
    algorithm: String,
    sync_mode: String,
    estimator: String,
    selection: SelectionResult,
    reference: usize,
    n_selected: usize,
    bypass_single: bool,
    degenerate_bins: usize,
    low_confidence_bins: usize,
    window_start: usize,
    window_end: usize,
    delays: Vec<DelayReportRow>,
    metrics: EnhanceMetrics,
}

fn cmd_enhance(args: EnhanceArgs) -> Result<()> {
    let scene = import_scene(&args.scene_dir)
        .with_context(|| format!("reading scene {}", args.scene_dir.display()))?;
    let m = scene.n_channels();
    let algorithm = Algorithm::parse(&args.algorithm)
        .ok_or_else(|| anyhow!("unknown algorithm '{}'", args.algorithm))?;
    let sync_mode = SyncMode::parse(&args.sync)
        .ok_or_else(|| anyhow!("unknown sync mode '{}'", args.sync))?;
    let est_mode = EstimatorMode::parse(&args.estimator)
        .ok_or_else(|| anyhow!("unknown estimator '{}' (oracle | mlp:<dir>)", args.estimator))?;
    let est = load_estimators(&est_mode).context("loading estimators")?;
    let stft_cfg = StftConfig::default();

    let q = channel_weights(&scene, &est, &stft_cfg)?;
    let sync = sync_scene(&scene, &q, sync_mode)?;
    let masks = channel_masks(&scene, &sync, &est, &stft_cfg)?;

    let mut selection = SelectionResult {
        algorithm: algorithm.name().to_string(),
        gamma: algorithm.gamma_dependent().then_some(args.gamma),
        n: None,
        q: q.clone(),
        p: Vec::new(),
        clusters: None,
    };
    let p = match algorithm {
        Algorithm::OneBest => select_1best(&q)?,
        Algorithm::All => select_all(m)?,
        Algorithm::FixedN => {
            let n = args.fixed_n.unwrap_or_else(|| default_fixed_n(m));
            selection.n = Some(n);
            select_fixed_n(&q, n)?
        }
        Algorithm::AutoN => select_auto_n(&q, args.gamma)?,
        Algorithm::SoftN => select_soft_n(&q, args.gamma)?,
        Algorithm::LearningN => {
            let specs = sync
                .aligned
                .iter()
                .map(|c| stft(c, &stft_cfg))
                .collect::<abeam::error::Result<Vec<_>>>()?;
            let jdim = args.j.unwrap_or_else(|| default_embedding_dim(m));
            let (p, clustering) = select_learning_n(&specs, &q, args.gamma, args.sigma, jdim)?;
            selection.clusters = Some(clustering.assignment);
            p
        }
        Algorithm::Random1 => {
            let mut p = vec![0.0; m];
            p[random_baseline_channel(scene.seed.unwrap_or(args.seed), m)] = 1.0;
            p
        }
    };
    selection.p = p.clone();

    let out = abeam::beamformer::enhance(&sync.aligned, &masks, &p, &q, &stft_cfg, false)?;
    let metrics = eval_against_reference(&scene, &sync, &out)?;

    fs::create_dir_all(&args.out_dir)?;
    write_wav(
        args.out_dir.join("enhanced.wav"),
        scene.sample_rate,
        std::slice::from_ref(&out.signal),
        SampleFormat::Float32,
    )?;
    if args.dump {
        for (n, ch) in sync.aligned.iter().enumerate() {
            write_wav(
                args.out_dir.join(format!("aligned_{n:02}.wav")),
                scene.sample_rate,
                std::slice::from_ref(ch),
                SampleFormat::Float32,
            )?;
        }
    }
    let arrivals: Vec<usize> = (0..m).map(|n| scene.ground_truth_arrival(n)).collect();
    let report = EnhanceReport {
        algorithm: algorithm.name().to_string(),
        sync_mode: sync_mode.name().to_string(),
        estimator: args.estimator.clone(),
        selection,
        reference: out.reference,
        n_selected: out.n_selected,
        bypass_single: out.bypass_single,
        degenerate_bins: out.degenerate_bins,
        low_confidence_bins: out.low_confidence_bins,
        window_start: sync.window_start,
        window_end: sync.window_end,
        delays: delay_report(&sync, Some(&arrivals)),
        metrics,
    };
    fs::write(
        args.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "enhanced with {} (+{} sync): n_selected={} reference={} si_sdr_db={:.2} -> {}",
        report.algorithm,
        report.sync_mode,
        report.n_selected,
        report.reference,
        report.metrics.si_sdr_db,
        args.out_dir.display()
    );
    Ok(())
}

/// Scores the enhanced signal against the direct+early component of the
/// reference channel over the synchronized window.
fn eval_against_reference(
    scene: &Scene,
    sync: &abeam::sync::SyncResult,
    out: &abeam::beamformer::EnhanceOutput,
) -> Result<EnhanceMetrics> {
    let start = (sync.window_start as i64 + sync.delays[out.reference]) as usize;
    let full = scene.shifted_component(out.reference, abeam::acoustics::Component::Direct);
    let reference = &full[start..start + out.signal.len()];
    let ev = evaluate(reference, &out.signal)?;
    Ok(EnhanceMetrics {
        si_sdr_db: ev.si_sdr_db,
        snr_variant: ev.snr_variant,
    })
}

fn cmd_experiment(config: &Path, out_dir: &Path, dump: bool) -> Result<()> {
    let cfg: ExperimentConfig = serde_json::from_str(
        &fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?,
    )
    .context("parsing experiment config")?;
    let report = run_experiment(&cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), &report.csv)?;
    fs::write(
        out_dir.join("failures.json"),
        serde_json::to_string_pretty(&report.failures)?,
    )?;
    fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    if dump {
        dump_scenes(&cfg, out_dir)?;
    }
    println!(
        "wrote {} result rows ({} of {} scene units failed) -> {}",
        report.rows.len(),
        report.failures.len(),
        report.units,
        out_dir.display()
    );
    if report.failure_fraction() > 0.10 {
        bail!(
            "{} of {} scene units failed (> 10%)",
            report.failures.len(),
            report.units
        );
    }
    Ok(())
}

/// Regenerates each unit's scene (deterministic in the master seed) and
/// exports the audio artifacts.
fn dump_scenes(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    for s in 0..cfg.n_scenes {
        for (k, &snrato_db) in cfg.snrato_db.iter().enumerate() {
            let unit = (s * cfg.snrato_db.len() + k) as u64;
            let seed = trial_seed(cfg.master_seed, unit);
            let scene_cfg = SceneConfig::new(cfg.m, snrato_db, cfg.noise_field);
            let scene = generate_scene(&scene_cfg, cfg.noise_kind, cfg.utterance_s, seed)?;
            let dir = out_dir.join(format!("scenes/scene{s:04}_cond{k}"));
            export_scene(&scene, &dir)?;
        }
    }
    Ok(())
}

fn cmd_montecarlo(
    m: usize,
    trials: usize,
    seed: u64,
    side_m: Option<f64>,
    out_dir: &Path,
    dump: bool,
) -> Result<()> {
    let side = side_m.unwrap_or(STUDY_ROOM_SIDE_M);
    let (rows, stats) = monte_carlo_distances(side, m, trials, seed)?;
    fs::create_dir_all(out_dir)?;
    let csv = montecarlo_csv(&stats);
    fs::write(out_dir.join("montecarlo.csv"), &csv)?;
    if dump {
        let mut trials_csv = String::from("trial,d_conventional,d_adhoc_avg,d_adhoc_best\n");
        for r in &rows {
            trials_csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.trial, r.d_conventional, r.d_adhoc_avg, r.d_adhoc_best
            ));
        }
        fs::write(out_dir.join("trials.csv"), trials_csv)?;
    }
    print!("{csv}");
    println!(
        "{} trials, {} mics, {:.2} m square -> {}",
        trials,
        m,
        side,
        out_dir.display()
    );
    Ok(())
}

fn cmd_gamma_sweep(config: &Path, gammas: &[f64], out_dir: &Path) -> Result<()> {
    let cfg: ExperimentConfig = serde_json::from_str(
        &fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?,
    )
    .context("parsing experiment config")?;
    let report = run_gamma_sweep(&cfg, gammas)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("gamma_sweep.csv"), &report.csv)?;
    print!("{}", report.csv);
    println!(
        "soft-N and auto-N supports identical on every scene: {}",
        report.soft_auto_supports_equal
    );
    Ok(())
}

struct TrainToyArgs {
    utts: usize,
    scenes: usize,
    m: usize,
    noise: String,
    field: String,
    context: usize,
    hidden: usize,
    epochs: usize,
    utterance_s: f64,
    seed: u64,
    out_dir: PathBuf,
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<()> {
    let texture = parse_noise(&args.noise)?;
    let field = parse_field(&args.field)?;
    let stft_cfg = StftConfig::default();
    fs::create_dir_all(&args.out_dir)?;
    let hyper = TrainHyper {
        epochs: args.epochs,
        batch: 64,
        lr_start: 0.08,
        lr_end: 0.005,
        ..TrainHyper::default()
    };

    let (xs, ts) = build_mask_training_data(
        args.utts,
        texture,
        &stft_cfg,
        args.context,
        16_000,
        args.utterance_s,
        trial_seed(args.seed, 1),
    )?;
    let mask_path = args.out_dir.join(MASK_NET_FILE);
    let (_, mask_report) = train_toy_mask_net(
        &xs,
        &ts,
        args.context,
        args.hidden,
        &hyper,
        &mask_path,
        trial_seed(args.seed, 2),
    )?;
    println!(
        "mask net: {} examples, loss {:.5} -> {:.5}, saved {}",
        xs.len(),
        mask_report.initial_loss(),
        mask_report.final_loss(),
        mask_path.display()
    );

    let (wx, wt) = build_weight_training_data(
        args.scenes,
        args.m,
        texture,
        field,
        &stft_cfg,
        args.utterance_s,
        trial_seed(args.seed, 3),
    )?;
    let weight_path = args.out_dir.join(WEIGHT_NET_FILE);
    let weight_hyper = TrainHyper {
        batch: 8,
        ..hyper
    };
    let (_, weight_report) = train_toy_weight_net(
        &wx,
        &wt,
        args.hidden,
        &weight_hyper,
        &weight_path,
        trial_seed(args.seed, 4),
    )?;
    println!(
        "weight net: {} examples, loss {:.5} -> {:.5}, saved {}",
        wx.len(),
        weight_report.initial_loss(),
        weight_report.final_loss(),
        weight_path.display()
    );
    Ok(())
}
