//! Acceptance gate: eight numbered criteria covering the distance study,
//! the selection-threshold equivalence, MVDR optimality, synchronization
//! accuracy, end-to-end enhancement ordering, core DSP unit properties,
//! the γ sweep, and determinism. Each test prints a single PASS/FAIL line
//! with its measured values (visible under `--nocapture`; failures carry
//! the same detail in the panic message).

use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, DVector};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use abeam::acoustics::{
    generate_scene, monte_carlo_distances, NoiseField, SceneConfig, STUDY_ROOM_SIDE_M,
};
use abeam::beamformer::{enhance, mvdr_weights, weighted_covariance};
use abeam::estimation::{ideal_ratio_mask, Mlp};
use abeam::experiment::{
    channel_weights, run_experiment, run_gamma_sweep, sync_scene, Algorithm, EstimatorMode,
    ExperimentConfig, LoadedEstimator, SyncMode,
};
use abeam::selection::select_auto_n;
use abeam::signalgen::{speech_like, NoiseTexture};
use abeam::spectral::{istft, stft, Spectrogram, StftConfig};
use abeam::sync::gcc_phat;
use abeam::trial_seed;

type C64 = Complex<f64>;

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion} ({name}): {status} [{detail}]");
    assert!(pass, "ACCEPTANCE {criterion} ({name}): FAIL [{detail}]");
}

// --- 1: Monte Carlo distance statistics --------------------------------

const CONV_MEAN_TARGET_M: f64 = 7.28;
const BEST_MEAN_TARGET_M: f64 = 1.92;
const MEAN_REL_TOL: f64 = 0.15;
const BEST_TAIL_LIMIT: f64 = 0.05;

#[test]
fn criterion_1_distance_study_statistics() {
    let t0 = Instant::now();
    let (_, stats) = monte_carlo_distances(STUDY_ROOM_SIDE_M, 16, 100_000, 20_260_814).unwrap();
    let elapsed = t0.elapsed();
    let [conv, avg, best] = stats;
    let conv_ok = (conv.mean_m - CONV_MEAN_TARGET_M).abs() <= MEAN_REL_TOL * CONV_MEAN_TARGET_M;
    let std_ok = avg.std_m < conv.std_m;
    let best_ok = (best.mean_m - BEST_MEAN_TARGET_M).abs() <= MEAN_REL_TOL * BEST_MEAN_TARGET_M;
    let tail = best.fraction_above(5.0);
    let tail_ok = tail <= BEST_TAIL_LIMIT;
    let time_ok = elapsed < Duration::from_secs(60);
    report(
        1,
        "distance study",
        conv_ok && std_ok && best_ok && tail_ok && time_ok,
        &format!(
            "conv mean {:.3} m (target {:.2}±15%), avg std {:.3} < conv std {:.3}: {}, best mean {:.3} m (target {:.2}±15%), P(best>5m) {:.4} <= {:.2}, {:.1} s < 60 s",
            conv.mean_m, CONV_MEAN_TARGET_M, avg.std_m, conv.std_m, std_ok,
            best.mean_m, BEST_MEAN_TARGET_M, tail, BEST_TAIL_LIMIT,
            elapsed.as_secs_f64()
        ),
    );
}

// --- 2: threshold-selection equivalence --------------------------------

#[test]
fn criterion_2_threshold_rule_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gammas = [0.1, 0.5, 0.9];
    let mut draws = 0usize;
    let mut mismatches = 0usize;
    while draws < 10_000 {
        let m = rng.gen_range(2..=12);
        let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..10.0)).collect();
        let n_star: f64 = rng.gen_range(0.05..10.0);
        let x_star = xs.iter().cloned().fold(f64::MIN, f64::max);
        // Exclude boundary-adjacent draws so strict-inequality semantics
        // are unambiguous.
        if gammas
            .iter()
            .any(|g| xs.iter().any(|&x| (x - g * x_star).abs() < 1e-9 * x_star))
        {
            continue;
        }
        draws += 1;
        let q: Vec<f64> = xs.iter().map(|&x| x / (x + n_star)).collect();
        for &gamma in &gammas {
            let p = select_auto_n(&q, gamma).unwrap();
            let brute: Vec<f64> = xs
                .iter()
                .map(|&x| if x > gamma * x_star { 1.0 } else { 0.0 })
                .collect();
            if p != brute {
                mismatches += 1;
            }
        }
    }
    report(
        2,
        "threshold equivalence",
        mismatches == 0,
        &format!("{draws} draws x 3 gammas, {mismatches} mismatches"),
    );
}

// --- 3: MVDR properties -------------------------------------------------

fn random_psd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let a = DMatrix::<C64>::from_fn(m, m, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    a.adjoint() * &a / C64::new(m as f64, 0.0)
        + DMatrix::<C64>::identity(m, m) * C64::new(1e-3, 0.0)
}

fn quad(phi: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    let m = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            acc += v[i].conj() * phi[(i, j)] * v[j];
        }
    }
    acc.re
}

#[test]
fn criterion_3_mvdr_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_distortion: f64 = 0.0;
    let mut suboptimal = 0usize;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=6);
        let phi = random_psd(m, &mut rng);
        let c = DVector::<C64>::from_fn(m, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let w = mvdr_weights(&phi, &c).unwrap();
        let response = w.dotc(&c);
        max_distortion = max_distortion.max((response - C64::new(1.0, 0.0)).norm());
        let p_w = quad(&phi, &w);
        let mut tried = 0usize;
        while tried < 10_000 {
            let v_raw = DVector::<C64>::from_fn(m, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let d = v_raw.dotc(&c);
            if d.norm() < 1e-3 {
                continue;
            }
            tried += 1;
            // Rescale so the combiner has exactly unit response toward c.
            let v = v_raw / d.conj();
            let p_v = quad(&phi, &v);
            if p_w > p_v * (1.0 + 1e-9) + 1e-15 {
                suboptimal += 1;
            }
        }
    }
    let distortionless_ok = max_distortion < 1e-8;
    let optimal_ok = suboptimal == 0;

    // Noise-free rank-1 scene: identical source under per-channel gains
    // must come back as the reference channel's signal.
    let cfg = StftConfig::default();
    let mut srng = ChaCha8Rng::seed_from_u64(33);
    let s = speech_like(32_000, 16_000, &mut srng);
    let gains = [0.6, 1.4, 0.9, 1.1, 0.8];
    let channels: Vec<Vec<f64>> = gains
        .iter()
        .map(|&g| s.iter().map(|&v| g * v).collect())
        .collect();
    let bins = cfg.n_bins();
    let frames = cfg.n_frames(s.len()).unwrap();
    let masks = vec![Array2::from_elem((bins, frames), 1.0); gains.len()];
    let q = [0.3, 0.9, 0.4, 0.5, 0.2];
    let out = enhance(&channels, &masks, &[1.0; 5], &q, &cfg, false).unwrap();
    let reference = &channels[1];
    let lo = cfg.frame_len;
    let hi = out.signal.len() - cfg.frame_len;
    let (mut num, mut den) = (0.0, 0.0);
    for i in lo..hi {
        num += (out.signal[i] - reference[i]).powi(2);
        den += reference[i].powi(2);
    }
    let rank1_rel = (num / den).sqrt();
    let rank1_ok = rank1_rel < 1e-6;

    report(
        3,
        "mvdr",
        distortionless_ok && optimal_ok && rank1_ok,
        &format!(
            "max |w^H c - 1| = {:.2e} < 1e-8, {} of 10^7 combiners beat the solution, rank-1 relative error {:.2e} < 1e-6",
            max_distortion, suboptimal, rank1_rel
        ),
    );
}

// --- 4: synchronization accuracy ----------------------------------------

#[test]
fn criterion_4_synchronization_accuracy() {
    // Pure integer shifts of a noise-free signal must be recovered exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = speech_like(40_000, 16_000, &mut rng);
    let mut exact = 0usize;
    let shifts = 20usize;
    for _ in 0..shifts {
        let d = rng.gen_range(-800i64..=800);
        let k = 1000usize;
        let n = 30_000usize;
        let reference = base[k..k + n].to_vec();
        let sig = base[(k as i64 - d) as usize..(k as i64 - d) as usize + n].to_vec();
        let est = gcc_phat(&sig, &reference, 1600).unwrap();
        if est.delay_samples == d {
            exact += 1;
        }
    }
    let pure_ok = exact == shifts;

    // Reverberant noisy scenes: at least 90% of channels within ±2 samples.
    let mut total = 0usize;
    let mut within = 0usize;
    for s in 0..100u64 {
        let cfg = SceneConfig::new(8, 10.0, NoiseField::Diffuse);
        let scene =
            generate_scene(&cfg, NoiseTexture::White, 3.0, trial_seed(40_000, s)).unwrap();
        let q = channel_weights(&scene, &LoadedEstimator::Oracle, &StftConfig::default()).unwrap();
        let sync = sync_scene(&scene, &q, SyncMode::Estimated).unwrap();
        let ref_arrival = scene.ground_truth_arrival(sync.reference) as i64;
        for n in 0..8 {
            let gt = scene.ground_truth_arrival(n) as i64 - ref_arrival;
            total += 1;
            if (sync.delays[n] - gt).abs() <= 2 {
                within += 1;
            }
        }
    }
    let frac = within as f64 / total as f64;
    let scene_ok = frac >= 0.90;

    report(
        4,
        "synchronization",
        pure_ok && scene_ok,
        &format!(
            "pure shifts exact {exact}/{shifts}, scene channels within ±2 samples: {within}/{total} = {:.1}%",
            100.0 * frac
        ),
    );
}

// --- 5: end-to-end enhancement ordering ---------------------------------

#[test]
fn criterion_5_end_to_end_ordering() {
    let t0 = Instant::now();
    let base = ExperimentConfig {
        master_seed: 50,
        n_scenes: 50,
        m: 8,
        noise_kind: NoiseTexture::White,
        noise_field: NoiseField::Diffuse,
        snrato_db: vec![10.0],
        algorithms: vec![
            Algorithm::OneBest,
            Algorithm::All,
            Algorithm::AutoN,
            Algorithm::Random1,
        ],
        sync_modes: vec![SyncMode::None, SyncMode::GroundTruth, SyncMode::Estimated],
        gamma: 0.5,
        fixed_n: None,
        j: None,
        sigma: 1.0,
        estimator: EstimatorMode::Oracle,
        utterance_s: 3.0,
    };
    let mut point = base.clone();
    point.master_seed = 51;
    point.noise_field = NoiseField::Point;
    point.snrato_db = vec![-5.0];

    let mut all_ok = true;
    let mut details = Vec::new();
    for (label, cfg) in [("diffuse 10 dB", &base), ("point -5 dB", &point)] {
        let rep = run_experiment(cfg).unwrap();
        assert!(
            rep.failure_fraction() <= 0.10,
            "{label}: {} of {} units failed",
            rep.failures.len(),
            rep.units
        );
        let auto_est = rep.mean_si_sdr(Algorithm::AutoN, SyncMode::Estimated).unwrap();
        let all_none = rep.mean_si_sdr(Algorithm::All, SyncMode::None).unwrap();
        let auto_gt = rep
            .mean_si_sdr(Algorithm::AutoN, SyncMode::GroundTruth)
            .unwrap();
        let one_best = rep
            .mean_si_sdr(Algorithm::OneBest, SyncMode::Estimated)
            .unwrap();
        let random1 = rep
            .mean_si_sdr(Algorithm::Random1, SyncMode::Estimated)
            .unwrap();
        let ok = auto_est > all_none && (auto_gt - auto_est).abs() <= 1.0 && one_best > random1;
        all_ok &= ok;
        details.push(format!(
            "{label}: autoN+est {auto_est:.2} > all+none {all_none:.2}, |autoN gt-est| {:.3} <= 1.0, 1best {one_best:.2} > random1 {random1:.2}",
            (auto_gt - auto_est).abs()
        ));
    }
    let elapsed = t0.elapsed();
    let time_ok = elapsed < Duration::from_secs(600);
    details.push(format!("{:.0} s < 600 s", elapsed.as_secs_f64()));
    report(5, "end-to-end ordering", all_ok && time_ok, &details.join("; "));
}

// --- 6: core DSP unit properties ----------------------------------------

#[test]
fn criterion_6_unit_properties() {
    // STFT round trip.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = StftConfig::default();
    let x: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
    let mut stft_err: f64 = 0.0;
    for i in 1..x.len().min(y.len()) {
        stft_err = stft_err.max((y[i] - x[i]).abs());
    }
    let stft_ok = stft_err < 1e-6;

    // GCC-PHAT pure-shift exactness.
    let base = speech_like(20_000, 16_000, &mut rng);
    let est = gcc_phat(&base[700..15_700], &base[1000..16_000], 800).unwrap();
    let gcc_ok = est.delay_samples == 300;

    // IRM formula and bounds.
    let one = |v: f64| Spectrogram::from_elem((1, 1), Complex::new(v, 0.0));
    let mask = ideal_ratio_mask(&one(3.0), &one(1.0), &one(1.0)).unwrap();
    let irm_formula_ok = (mask[[0, 0]] - 0.6).abs() < 1e-12;
    let rand_spec = |rng: &mut ChaCha8Rng| {
        Spectrogram::from_shape_fn((4, 6), |_| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    };
    let m = ideal_ratio_mask(
        &rand_spec(&mut rng),
        &rand_spec(&mut rng),
        &rand_spec(&mut rng),
    )
    .unwrap();
    let irm_bounds_ok = m.iter().all(|&v| (0.0..=1.0).contains(&v));

    // Weighted covariance against a naive per-bin loop.
    let specs: Vec<Spectrogram> = (0..3).map(|_| rand_spec(&mut rng)).collect();
    let w = Array2::from_shape_fn((4, 6), |_| rng.gen_range(0.0..1.0));
    let (cov, degenerate) = weighted_covariance(&specs, &w).unwrap();
    let mut cov_err: f64 = 0.0;
    for f in 0..4 {
        assert!(!degenerate[f]);
        let wsum: f64 = (0..6).map(|t| w[[f, t]]).sum();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Complex::new(0.0, 0.0);
                for t in 0..6 {
                    acc += specs[i][[f, t]] * specs[j][[f, t]].conj() * w[[f, t]];
                }
                cov_err = cov_err.max((cov[f][(i, j)] - acc / wsum).norm());
            }
        }
    }
    let cov_ok = cov_err < 1e-12;

    // Toy MLP gradients against central differences.
    let mut net = Mlp::new(&[5, 4, 3], &mut rng).unwrap();
    for l in &mut net.layers {
        l.b.apply(|b| *b += 0.05);
    }
    let xs: Vec<DVector<f64>> = (0..3)
        .map(|_| DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let ts: Vec<DVector<f64>> = (0..3)
        .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(0.1..0.9)))
        .collect();
    let (_, grads) = net.loss_and_grads(&xs, &ts).unwrap();
    let h = 1e-5;
    let mut grad_err: f64 = 0.0;
    for li in 0..net.layers.len() {
        for r in 0..net.layers[li].w.nrows() {
            for c in 0..net.layers[li].w.ncols() {
                let orig = net.layers[li].w[(r, c)];
                net.layers[li].w[(r, c)] = orig + h;
                let (lp, _) = net.loss_and_grads(&xs, &ts).unwrap();
                net.layers[li].w[(r, c)] = orig - h;
                let (lm, _) = net.loss_and_grads(&xs, &ts).unwrap();
                net.layers[li].w[(r, c)] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let rel = (numeric - grads[li].0[(r, c)]).abs() / numeric.abs().max(1e-6);
                grad_err = grad_err.max(rel);
            }
        }
    }
    let grad_ok = grad_err < 1e-4;

    report(
        6,
        "unit properties",
        stft_ok && gcc_ok && irm_formula_ok && irm_bounds_ok && cov_ok && grad_ok,
        &format!(
            "stft round trip {:.2e} < 1e-6, gcc shift {} (=300), irm 3/(3+2)=0.6 and bounds {}, covariance vs naive {:.2e} < 1e-12, gradient rel err {:.2e} < 1e-4",
            stft_err, est.delay_samples, irm_bounds_ok, cov_err, grad_err
        ),
    );
}

// --- 7: gamma sweep behavior --------------------------------------------

#[test]
fn criterion_7_gamma_sweep_behavior() {
    // Zero threshold keeps every channel.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q: Vec<f64> = (0..9).map(|_| rng.gen_range(0.05..0.95)).collect();
    let zero_ok = select_auto_n(&q, 0.0).unwrap().iter().all(|&v| v == 1.0);

    let cfg = ExperimentConfig {
        master_seed: 70,
        n_scenes: 10,
        m: 6,
        noise_kind: NoiseTexture::White,
        noise_field: NoiseField::Diffuse,
        snrato_db: vec![10.0],
        algorithms: vec![Algorithm::AutoN, Algorithm::SoftN, Algorithm::LearningN],
        sync_modes: vec![SyncMode::Estimated],
        gamma: 0.5,
        fixed_n: None,
        j: None,
        sigma: 1.0,
        estimator: EstimatorMode::Oracle,
        utterance_s: 1.5,
    };
    let gammas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let sweep = run_gamma_sweep(&cfg, &gammas).unwrap();
    let mut monotone = true;
    for algorithm in [Algorithm::AutoN, Algorithm::SoftN, Algorithm::LearningN] {
        let means: Vec<f64> = sweep
            .rows
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .map(|r| r.mean_n_selected)
            .collect();
        assert_eq!(means.len(), gammas.len());
        monotone &= means.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    report(
        7,
        "gamma sweep",
        zero_ok && monotone && sweep.soft_auto_supports_equal,
        &format!(
            "gamma=0 selects all: {zero_ok}, mean n_selected nonincreasing over {:?}: {monotone}, soft/auto supports identical: {}",
            gammas, sweep.soft_auto_supports_equal
        ),
    );
}

// --- 8: determinism -------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let cfg = ExperimentConfig {
        master_seed: 80,
        n_scenes: 3,
        m: 4,
        noise_kind: NoiseTexture::White,
        noise_field: NoiseField::Diffuse,
        snrato_db: vec![10.0, 0.0],
        algorithms: vec![Algorithm::AutoN, Algorithm::All],
        sync_modes: vec![SyncMode::Estimated, SyncMode::None],
        gamma: 0.5,
        fixed_n: None,
        j: None,
        sigma: 1.0,
        estimator: EstimatorMode::Oracle,
        utterance_s: 1.0,
    };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap();
    let c = pool.install(|| run_experiment(&cfg)).unwrap();
    let repeat_ok = a.csv == b.csv;
    let parallel_ok = a.csv == c.csv;
    report(
        8,
        "determinism",
        repeat_ok && parallel_ok && !a.rows.is_empty(),
        &format!(
            "{} rows; repeat run byte-identical: {repeat_ok}; 2-thread pool byte-identical: {parallel_ok}",
            a.rows.len()
        ),
    );
}
