//! Acceptance suite.
//!
//! Each test covers one criterion and prints a single line
//! `criterion N <name>: PASS|FAIL|SKIP (<details>)`. Criteria 5 and 6 train
//! networks for tens of minutes on one core; they run only when
//! `PMRI_ACCEPTANCE_FULL=1` is set and print SKIP otherwise.
//!
//! Run with `cargo test -p pmri-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use pmri_cli::manifest::{read_manifest, Manifest};
use pmri_core::cg::conjugate_gradient;
use pmri_core::clear::{
    clear_reconstruct, extract_patches, null_space_filters, patch_adjoint, ClearConfig, PatchConfig, PatchMatrix,
};
use pmri_core::fourier::{apply_adjoint, apply_forward, dc_solve, fft2c, ForwardOp};
use pmri_core::linalg::{svd, CMatrix};
use pmri_core::metrics::{dice, snr_db, ssim, tissue_dice};
use pmri_core::net::Group;
use pmri_core::phantom::{
    block_constant_sensitivities, generate_dataset, make_coil_sensitivities, make_phantom, make_vd_mask,
    simulate_acquisition, AcquisitionConfig, PhantomSpec,
};
use pmri_core::train::{train, TrainConfig};
use pmri_core::unrolled::{build_cascade, infer, loss_and_grads, loss_value, Mode, UnrolledModel};
use pmri_core::{ComplexImage, Dataset, KSpaceData, LabelMap, MultiCoilImage, RunConfig, SamplingMask, NUM_CLASSES};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, details: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {name}: {word} ({details})");
    assert!(pass, "criterion {n} {name} failed: {details}");
}

fn full_run(n: u32, name: &str) -> bool {
    let on = std::env::var("PMRI_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    if !on {
        println!("criterion {n} {name}: SKIP (set PMRI_ACCEPTANCE_FULL=1 to train)");
    }
    on
}

/// CPU seconds consumed by the calling thread (training is single-threaded).
fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0);
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

fn datasets(size: usize, seeds: std::ops::Range<u64>) -> Vec<Dataset> {
    let spec = PhantomSpec::new(size, size);
    let acq = AcquisitionConfig { accel: 6.0, ..AcquisitionConfig::default() };
    seeds.map(|s| generate_dataset(&spec, &acq, s).unwrap()).collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn sos_snr(ds: &Dataset, sos: &[f64]) -> f64 {
    snr_db(sos, &ds.reference.magnitude()).unwrap()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn random_coils(rng: &mut ChaCha8Rng, coils: usize, h: usize, w: usize) -> MultiCoilImage {
    MultiCoilImage::new(coils, h, w, random_values(rng, coils * h * w)).unwrap()
}

fn random_kspace(rng: &mut ChaCha8Rng, coils: usize, mask: &SamplingMask) -> KSpaceData {
    let n = mask.height * mask.width;
    let mut data = random_values(rng, coils * n);
    for (i, z) in data.iter_mut().enumerate() {
        if !mask.is_sampled(i % n) {
            *z = c(0.0, 0.0);
        }
    }
    KSpaceData::new(coils, mask.height, mask.width, data, mask).unwrap()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

fn coil_images(image: &ComplexImage, sens: &MultiCoilImage) -> MultiCoilImage {
    let n = image.data.len();
    let data = (0..sens.coils)
        .flat_map(|i| (0..n).map(move |p| (i, p)))
        .map(|(i, p)| image.data[p] * sens.data[i * n + p])
        .collect();
    MultiCoilImage::new(sens.coils, image.height, image.width, data).unwrap()
}

fn multi_coil_snr(truth: &MultiCoilImage, est: &MultiCoilImage) -> f64 {
    let err: Vec<Complex64> = truth.data.iter().zip(&est.data).map(|(a, b)| a - b).collect();
    20.0 * (truth.norm() / norm(&err)).log10()
}

// ------------------------------------------------------------ criterion 1

const PARSEVAL_TOL: f64 = 1e-12;
const ADJOINT_TOL: f64 = 1e-10;
const DC_VS_CG_TOL: f64 = 1e-8;
const OPERATOR_BUDGET_S: f64 = 10.0;

#[test]
fn criterion_1_operator_algebra() {
    let cpu = thread_cpu_seconds();
    let (coils, h, w) = (4, 32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut parseval: f64 = 0.0;
    let mut adj_a: f64 = 0.0;
    let mut adj_p: f64 = 0.0;
    let mut dc: f64 = 0.0;
    for trial in 0..3u64 {
        let x = ComplexImage::new(h, w, random_values(&mut rng, h * w)).unwrap();
        parseval = parseval.max((fft2c(&x).norm() - x.norm()).abs() / x.norm());

        let mask = make_vd_mask(h, w, 6.0, 0.04, 2.0, trial).unwrap();
        let gamma = random_coils(&mut rng, coils, h, w);
        let b = random_kspace(&mut rng, coils, &mask);
        let lhs = inner(&apply_forward(&gamma, &mask).unwrap().data, &b.data);
        let rhs = gamma.dot(&apply_adjoint(&b, &mask).unwrap());
        adj_a = adj_a.max(rel(lhs, rhs));

        let cfg = PatchConfig::new(8, 4);
        let shape = extract_patches(&gamma, &cfg).unwrap();
        let q: Vec<PatchMatrix> = shape
            .iter()
            .map(|p| PatchMatrix {
                center: p.center,
                matrix: CMatrix::from_fn(p.matrix.rows, p.matrix.cols, |_, _| {
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                }),
            })
            .collect();
        let lhs: Complex64 = shape.iter().zip(&q).map(|(a, b)| inner(&a.matrix.data, &b.matrix.data)).sum();
        let rhs = gamma.dot(&patch_adjoint(&q, &cfg, coils, h, w).unwrap());
        adj_p = adj_p.max(rel(lhs, rhs));

        let lambda = 0.05;
        let z = random_coils(&mut rng, coils, h, w);
        let closed = dc_solve(&z, &b, &mask, lambda).unwrap();
        let op = ForwardOp::new(&mask, coils);
        let atb = apply_adjoint(&b, &mask).unwrap();
        let rhs: Vec<Complex64> = atb.data.iter().zip(&z.data).map(|(a, z)| a + z * lambda).collect();
        let out = conjugate_gradient(
            |v| {
                let x = MultiCoilImage::new(coils, h, w, v.to_vec()).unwrap();
                let n = op.normal(&x).unwrap();
                n.data.iter().zip(v).map(|(a, x)| a + x * lambda).collect()
            },
            &rhs,
            vec![c(0.0, 0.0); rhs.len()],
            1e-13,
            500,
        );
        let diff: Vec<Complex64> = out.x.iter().zip(&closed.data).map(|(a, b)| a - b).collect();
        dc = dc.max(norm(&diff) / norm(&closed.data));
    }
    let elapsed = thread_cpu_seconds() - cpu;
    verdict(
        1,
        "operator algebra",
        parseval < PARSEVAL_TOL && adj_a < ADJOINT_TOL && adj_p < ADJOINT_TOL && dc < DC_VS_CG_TOL && elapsed < OPERATOR_BUDGET_S,
        &format!(
            "Parseval {parseval:.1e}, A adjoint {adj_a:.1e}, P adjoint {adj_p:.1e}, dc vs CG {dc:.1e}, {elapsed:.2} CPU s"
        ),
    );
}

// ------------------------------------------------------------ criterion 2

const RANK_ONE_RATIO_TOL: f64 = 1e-10;
const ANNIHILATION_TOL: f64 = 1e-10;
const MONOTONE_TOL: f64 = 1e-9;
const STRUCTURE_BUDGET_S: f64 = 120.0;

#[test]
fn criterion_2_clear_structure() {
    let cpu = thread_cpu_seconds();
    let (image, _) = make_phantom(&PhantomSpec::new(64, 64), 3).unwrap();
    let sens = block_constant_sensitivities(64, 64, 4, 8, 3).unwrap();
    let g = coil_images(&image, &sens);
    let mut ratio: f64 = 0.0;
    let mut annihilation: f64 = 0.0;
    let mut patches = 0;
    for p in extract_patches(&g, &PatchConfig::new(8, 8)).unwrap() {
        let s = svd(&p.matrix).unwrap().s;
        if s[0] == 0.0 {
            continue;
        }
        patches += 1;
        ratio = ratio.max(s[1] / s[0]);
        let basis = null_space_filters(&p, 1e-3).unwrap();
        for j in 0..basis.right.len() {
            // the relations evaluated as spatial filters at the patch centre
            let responses: Vec<Complex64> = basis.filters(j).iter().map(|f| f.response_at(&g, p.center)).collect();
            annihilation = annihilation.max(norm(&responses) / s[0]);
        }
    }

    let ds = generate_dataset(&PhantomSpec::new(64, 64), &AcquisitionConfig::default(), 2).unwrap();
    let run = RunConfig::default();
    let (_, state) =
        clear_reconstruct(&ds.kspace, &ds.mask, run.clear_lambda, &ClearConfig::from_run(&run), 15).unwrap();
    let worst_increase = state
        .history
        .iter()
        .map(|r| (r.objective_after - r.objective_before) / r.objective_before)
        .fold(f64::MIN, f64::max);
    let elapsed = thread_cpu_seconds() - cpu;
    verdict(
        2,
        "CLEAR structure",
        patches > 0
            && ratio < RANK_ONE_RATIO_TOL
            && annihilation < ANNIHILATION_TOL
            && state.history.len() == 15
            && worst_increase <= MONOTONE_TOL
            && elapsed < STRUCTURE_BUDGET_S,
        &format!(
            "{patches} patches, max s2/s1 {ratio:.1e}, annihilation {annihilation:.1e}, \
             worst relative objective change {worst_increase:.1e} over {} iterations, {elapsed:.1} CPU s",
            state.history.len()
        ),
    );
}

// ------------------------------------------------------------ criterion 3

const FULLY_SAMPLED_MIN_DB: f64 = 60.0;
const RANK_ONE_MIN_DB: f64 = 30.0;
/// SNR of the 50-iteration, `cg_tol = 1e-10` run on the rank-one 2x case.
const RANK_ONE_2X_GOLDEN_DB: f64 = 33.625974;
/// Fifteen iterations may fall short of the long run by this much, never exceed it by more than the slack.
const RANK_ONE_GOLDEN_BELOW_DB: f64 = 3.0;
const RANK_ONE_GOLDEN_ABOVE_DB: f64 = 0.5;
const RECOVERY_BUDGET_S: f64 = 300.0;

#[test]
fn criterion_3_clear_recovery() {
    let cpu = thread_cpu_seconds();
    let (image, _) = make_phantom(&PhantomSpec::new(32, 32), 4).unwrap();
    let sens = make_coil_sensitivities(32, 32, 4, 4).unwrap();
    let mask = SamplingMask::full(32, 32);
    let ds = simulate_acquisition(&image, &sens, &mask, 0.0, None, 4).unwrap();
    let (g, _) = clear_reconstruct(&ds.kspace, &mask, 1e-4, &ClearConfig::default(), 2).unwrap();
    let full = multi_coil_snr(&coil_images(&image, &sens), &g);

    let (mut image, _) = make_phantom(&PhantomSpec::new(64, 64), 0).unwrap();
    image.data.iter_mut().for_each(|z| *z *= 1e4);
    let sens = block_constant_sensitivities(64, 64, 4, 8, 0).unwrap();
    let mask = make_vd_mask(64, 64, 2.0, 0.04, 2.0, 0).unwrap();
    let ds = simulate_acquisition(&image, &sens, &mask, 0.0, None, 0).unwrap();
    let cfg = ClearConfig { patch: PatchConfig::new(8, 8), ..ClearConfig::default() };
    let (g, _) = clear_reconstruct(&ds.kspace, &mask, 100.0, &cfg, 15).unwrap();
    let rank_one = multi_coil_snr(&coil_images(&image, &sens), &g);
    let elapsed = thread_cpu_seconds() - cpu;
    verdict(
        3,
        "CLEAR recovery",
        full > FULLY_SAMPLED_MIN_DB
            && rank_one > RANK_ONE_MIN_DB
            && rank_one > RANK_ONE_2X_GOLDEN_DB - RANK_ONE_GOLDEN_BELOW_DB
            && rank_one < RANK_ONE_2X_GOLDEN_DB + RANK_ONE_GOLDEN_ABOVE_DB
            && elapsed < RECOVERY_BUDGET_S,
        &format!(
            "fully sampled {full:.1} dB, rank-one 2x {rank_one:.2} dB (golden {RANK_ONE_2X_GOLDEN_DB}), {elapsed:.1} CPU s"
        ),
    );
}

// ------------------------------------------------------------ criterion 4

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const FD_SAMPLES: usize = 50;
/// Gradients below this fraction of the group's largest entry are compared on that scale.
const FD_SCALE_FLOOR: f64 = 1e-3;
/// Samples that miss at `FD_STEP` but agree at `FD_STEP / 10` straddle a ReLU
/// or max-pool switch; at most this many are tolerated per group.
const FD_MAX_KINKS: usize = 2;
const AUTODIFF_BUDGET_S: f64 = 300.0;

#[test]
fn criterion_4_autodiff() {
    let cpu = thread_cpu_seconds();
    let acq = AcquisitionConfig { coils: 2, accel: 3.0, center_fraction: 0.1, ..AcquisitionConfig::default() };
    let ds = generate_dataset(&PhantomSpec::new(16, 16), &acq, 3).unwrap();
    let model = UnrolledModel::<f64>::new(Mode::Joint, 2, NUM_CLASSES, [4, 6, 8], 3, 100.0, 7).unwrap();
    let alpha = 0.5;
    let (_, grads) = loss_and_grads(&model, &ds, alpha, true).unwrap();
    let mut summary = Vec::new();
    let mut pass = true;
    for (k, group) in [Group::Theta, Group::Phi, Group::Psi].into_iter().enumerate() {
        let analytic = grads.net.group_values(group);
        let floor = FD_SCALE_FLOOR * analytic.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let fd = |i: usize, h: f64| {
            let mut p = model.clone();
            *p.params.param_mut(group, i).unwrap() += h;
            let mut m = model.clone();
            *m.params.param_mut(group, i).unwrap() -= h;
            (loss_value(&p, &ds, alpha, true).unwrap() - loss_value(&m, &ds, alpha, true).unwrap()) / (2.0 * h)
        };
        let err = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(floor);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let (mut worst, mut kinks): (f64, usize) = (0.0, 0);
        for i in sample(&mut rng, analytic.len(), FD_SAMPLES) {
            let e = err(fd(i, FD_STEP), analytic[i]);
            if e >= FD_TOL && err(fd(i, FD_STEP / 10.0), analytic[i]) < FD_TOL {
                kinks += 1;
            } else {
                worst = worst.max(e);
            }
        }
        pass &= worst < FD_TOL && kinks <= FD_MAX_KINKS;
        summary.push(format!("{} {worst:.1e} ({kinks} kinks)", group.name()));
    }
    let elapsed = thread_cpu_seconds() - cpu;
    verdict(
        4,
        "autodiff",
        pass && elapsed < AUTODIFF_BUDGET_S,
        &format!("{FD_SAMPLES} samples per group, K=3: {}, {elapsed:.1} CPU s", summary.join(", ")),
    );
}

// ------------------------------------------------------------ criterion 5

const TREND_SIZE: usize = 64;
const TREND_TRAIN: std::ops::Range<u64> = 0..20;
const TREND_TEST: std::ops::Range<u64> = 1000..1006;
const TREND_EPOCHS: usize = 300;
const TREND_LR: f64 = 3e-4;
const TREND_IDSLR_MARGIN_DB: f64 = 3.0;
const TREND_CLEAR_MARGIN_DB: f64 = 1.0;
const TREND_JOINT_SLACK_DB: f64 = 0.2;
const TREND_BUDGET_S: f64 = 45.0 * 60.0;

#[test]
fn criterion_5_end_to_end_trend() {
    if !full_run(5, "end-to-end trend") {
        return;
    }
    let cpu = thread_cpu_seconds();
    let run = RunConfig::default();
    let train_set = datasets(TREND_SIZE, TREND_TRAIN);
    let test_set = datasets(TREND_SIZE, TREND_TEST);
    let coils = train_set[0].kspace.coils;
    let cfg = TrainConfig { epochs: TREND_EPOCHS, learning_rate: TREND_LR, ..TrainConfig::from_run(&run) };

    let fit = |mode: Mode| {
        let mut model =
            UnrolledModel::<f32>::new(mode, coils, NUM_CLASSES, run.widths, run.unroll, run.lambda, run.seed).unwrap();
        let t = Instant::now();
        train(&train_set, &mut model, &cfg, |s| {
            if (s.epoch + 1) % 50 == 0 {
                eprintln!("  {} epoch {} loss {:.4} ({:.0?})", mode.name(), s.epoch + 1, s.loss, t.elapsed());
            }
        })
        .unwrap();
        mean(test_set.iter().map(|ds| sos_snr(ds, &infer(&model, ds).unwrap().0.sos())))
    };
    let zf = mean(test_set.iter().map(|ds| sos_snr(ds, &apply_adjoint(&ds.kspace, &ds.mask).unwrap().sos())));
    let clear_cfg = ClearConfig::from_run(&run);
    let clear = mean(test_set.iter().map(|ds| {
        let (g, _) = clear_reconstruct(&ds.kspace, &ds.mask, run.clear_lambda, &clear_cfg, run.irls_iters).unwrap();
        sos_snr(ds, &g.sos())
    }));
    let recon_only = fit(Mode::ReconOnly);
    let joint = fit(Mode::Joint);
    let elapsed = thread_cpu_seconds() - cpu;

    let pass = recon_only >= zf + TREND_IDSLR_MARGIN_DB
        && clear >= zf + TREND_CLEAR_MARGIN_DB
        && joint >= recon_only - TREND_JOINT_SLACK_DB
        && elapsed < TREND_BUDGET_S;
    verdict(
        5,
        "end-to-end trend",
        pass,
        &format!(
            "zero-filled {zf:.2} dB, clear {clear:.2} dB, idslr {recon_only:.2} dB, joint {joint:.2} dB, {:.1} CPU min",
            elapsed / 60.0
        ),
    );
}

// ------------------------------------------------------------ criterion 6

const FEW_SHOT_SIZE: usize = 32;
const FEW_SHOT_TRAIN: std::ops::Range<u64> = 0..20;
const FEW_SHOT_TEST: std::ops::Range<u64> = 1000..1006;
const FEW_SHOT_EPOCHS: usize = 300;
const FEW_SHOT_FRACTION: f64 = 0.1;
const FEW_SHOT_SEEDS: [u64; 3] = [0, 1, 2];
const FEW_SHOT_BUDGET_S: f64 = 2.0 * 3600.0;

#[test]
fn criterion_6_few_shot_trend() {
    if !full_run(6, "few-shot trend") {
        return;
    }
    let start = Instant::now();
    let cpu = thread_cpu_seconds();
    let run = RunConfig::default();
    let train_set = datasets(FEW_SHOT_SIZE, FEW_SHOT_TRAIN);
    let test_set = datasets(FEW_SHOT_SIZE, FEW_SHOT_TEST);
    let coils = train_set[0].kspace.coils;

    // mean test Dice over datasets and the three tissue classes
    let dice = |mode: Mode, fraction: f64, seed: u64| {
        let mut model = match mode {
            Mode::Cascade => build_cascade::<f32>(coils, NUM_CLASSES, run.widths, run.unroll, run.lambda, seed).unwrap(),
            _ => UnrolledModel::<f32>::new(mode, coils, NUM_CLASSES, run.widths, run.unroll, run.lambda, seed).unwrap(),
        };
        let cfg = TrainConfig {
            epochs: FEW_SHOT_EPOCHS,
            learning_rate: TREND_LR,
            labelled_fraction: fraction,
            seed,
            ..TrainConfig::from_run(&run)
        };
        train(&train_set, &mut model, &cfg, |_| {}).unwrap();
        let d = mean(test_set.iter().flat_map(|ds| {
            let probs = infer(&model, ds).unwrap().1.unwrap();
            tissue_dice(&probs.argmax(), ds.labels.as_ref().unwrap()).unwrap()
        }));
        eprintln!("  {} fraction {fraction} seed {seed}: dice {d:.4} ({:.0?})", mode.name(), start.elapsed());
        d
    };
    let degradation = |mode: Mode| {
        mean(FEW_SHOT_SEEDS.iter().map(|&s| dice(mode, 1.0, s) - dice(mode, FEW_SHOT_FRACTION, s)))
    };
    let shared = degradation(Mode::Joint);
    let cascade = degradation(Mode::Cascade);
    let elapsed = thread_cpu_seconds() - cpu;
    verdict(
        6,
        "few-shot trend",
        shared <= cascade && elapsed < FEW_SHOT_BUDGET_S,
        &format!(
            "Dice degradation shared {shared:.4}, cascade {cascade:.4}, {:.1} CPU min",
            elapsed / 60.0
        ),
    );
}

// ------------------------------------------------------------ criterion 7

fn pmri(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_pmri")).args(args).output().expect("binary runs");
    assert!(out.status.success(), "pmri {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn golden(name: &str) -> Vec<u8> {
    fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn criterion_7_determinism() {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = |n: &str| tmp.path().join(n);

    // generate, then replay from the manifest alone
    pmri(&["generate", "--out", p(&dir("data")), "--count", "2", "--seed", "3", "--size", "32"]);
    let Manifest::Generate(g) = read_manifest(&dir("data")).unwrap() else { panic!("not a data manifest") };
    let a = &g.args;
    pmri(&[
        "generate", "--out", p(&dir("data-replay")), "--count", &a.count.to_string(), "--accel", &a.accel.to_string(),
        "--coils", &a.coils.to_string(), "--noise", &a.noise.to_string(), "--seed", &a.seed.to_string(), "--size",
        &a.size.to_string(), "--center-fraction", &a.center_fraction.to_string(),
    ]);
    let generate_ok = tree(&dir("data")) == tree(&dir("data-replay"));

    // single-threaded training, replayed from its manifest
    let cfg = dir("tiny.json");
    fs::write(&cfg, r#"{"epochs": 2, "unroll": 1, "widths": [4, 8, 8], "learning_rate": 1e-3}"#).unwrap();
    pmri(&["--deterministic", "train", "--config", p(&cfg), "--data", p(&dir("data")), "--out", p(&dir("model"))]);
    let Manifest::Train(t) = read_manifest(&dir("model")).unwrap() else { panic!("not a train manifest") };
    let ta = &t.args;
    let mut replay = vec![
        "--deterministic".to_string(), "train".into(), "--mode".into(), t.mode.clone(), "--data".into(),
        p(&ta.data).into(), "--out".into(), p(&dir("model-replay")).into(),
    ];
    for (flag, value) in [
        ("--config", ta.config.as_ref().map(|c| p(c).to_string())),
        ("--labelled-fraction", ta.labelled_fraction.map(|f| f.to_string())),
        ("--epochs", ta.epochs.map(|e| e.to_string())),
        ("--seed", ta.seed.map(|s| s.to_string())),
    ] {
        if let Some(v) = value {
            replay.push(flag.into());
            replay.push(v);
        }
    }
    pmri(&replay.iter().map(String::as_str).collect::<Vec<_>>());
    let train_ok = tree(&dir("model")) == tree(&dir("model-replay"));

    // committed golden files from the seeded toy run
    pmri(&["--deterministic", "reconstruct", "--method", "zero-filled", "--data", p(&dir("data")), "--out", p(&dir("zf"))]);
    pmri(&["--deterministic", "evaluate", "--recon", p(&dir("zf")), "--data", p(&dir("data")), "--out", p(&dir("eval"))]);
    let goldens = [
        (golden("zero_filled_report.csv"), fs::read(dir("eval").join("report.csv")).unwrap()),
        (golden("ds000003_zero_filled_sos.pmri"), fs::read(dir("zf").join("ds000003/sos.pmri")).unwrap()),
        (golden("tiny_joint_loss.csv"), fs::read(dir("model").join("loss.csv")).unwrap()),
    ];
    let golden_ok = goldens.iter().filter(|(g, a)| g == a).count();
    verdict(
        7,
        "determinism",
        generate_ok && train_ok && golden_ok == goldens.len(),
        &format!(
            "generate replay {}, train replay {}, golden files {golden_ok}/{} identical",
            if generate_ok { "identical" } else { "differs" },
            if train_ok { "identical" } else { "differs" },
            goldens.len()
        ),
    );
}

// ------------------------------------------------------------ criterion 8

#[test]
fn criterion_8_metric_units() {
    let mut checks = Vec::new();

    let a = LabelMap::new(2, 2, vec![1, 1, 0, 0]).unwrap();
    let b = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
    let disjoint = LabelMap::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    checks.push(("dice half overlap = 0.5", dice(&a, &b, 1).unwrap() == 0.5));
    checks.push(("dice identical = 1", dice(&a, &a, 1).unwrap() == 1.0));
    checks.push(("dice disjoint = 0", dice(&a, &disjoint, 1).unwrap() == 0.0));

    // error norm exactly a tenth of the reference norm
    let org = vec![6.0, 8.0];
    let rec = vec![6.0, 9.0];
    checks.push(("snr 10% error = 20 dB", snr_db(&rec, &org).unwrap() == 20.0));
    checks.push(("snr zero image = 0 dB", snr_db(&[0.0, 0.0], &org).unwrap() == 0.0));
    checks.push(("snr exact = inf", snr_db(&org, &org).unwrap() == f64::INFINITY));

    let x: Vec<f64> = (0..16 * 16).map(|i| ((i as f64) * 0.37).sin().abs() + 0.1).collect();
    checks.push(("ssim identical = 1", ssim(&x, &x, 16, 16).unwrap() == 1.0));
    let board: Vec<f64> = (0..16 * 16).map(|q| if (q / 16 + q % 16) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let negated: Vec<f64> = board.iter().map(|v| -v).collect();
    checks.push(("ssim negated zero-mean < 0", ssim(&negated, &board, 16, 16).unwrap() < 0.0));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        8,
        "metric units",
        failed.is_empty(),
        &if failed.is_empty() { format!("{} examples", checks.len()) } else { format!("failed: {}", failed.join("; ")) },
    );
}
