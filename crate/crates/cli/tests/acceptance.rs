//! Acceptance suite: each test pins one criterion at its stated tolerance
//! and prints a `criterion N: PASS` line (visible with `--nocapture`).

use affine_interior_core::dimension::g_t;
use affine_interior_core::fourier::{
    decay_integral_ratio, fourier_mc, singular_integral_ratio, slice_integral_ratio,
    truncated_energy, verify_gradient_bound,
};
use affine_interior_core::geometry::{
    chaos_sample, detect_interior, dust_control_system, measure_lower_evidence,
    perturbed_grid25_system, unit_square_system, DensityVerdict, InteriorVerdict, PointCloud,
    SymbolSource,
};
use affine_interior_core::linalg::{MapTuple, Matrix, Word};
use affine_interior_core::rng::RngCore;
use affine_interior_core::splitting::{build_split, find_certified_block, verify_split};
use affine_interior_core::{quad, rng};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_affine-interior")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn criterion_01_conformal_t_value_oracle() {
    let started = Instant::now();
    let cfg = config("grid25.json");
    let out = run(&["tvalue", "--config", cfg.to_str().unwrap(), "--depth", "6"]);
    let elapsed = started.elapsed();
    assert_eq!(out.status.code(), Some(0), "tvalue must certify");
    let v = stdout_json(&out);
    let cert = &v["report"]["certificate"];
    assert_eq!(cert["status"], "CertifiedAboveD");
    assert_eq!(cert["witness_depth"], 1);
    let witness = cert["witness_sum"].as_f64().unwrap();
    assert!((witness - 1.02515625).abs() < 1e-9, "witness sum {witness}");
    assert!(witness > 1.0);
    let closed_form = 25f64.ln() / (1.0f64 / 0.45).ln() - 2.0;
    let lower = cert["lower_bound"].as_f64().unwrap();
    assert!(
        (lower - closed_form).abs() < 0.05,
        "lower bound {lower} vs closed form {closed_form}"
    );
    assert!(
        lower <= closed_form + 1e-9,
        "lower bound must not overshoot"
    );
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?}");
    println!(
        "criterion 1: PASS - witness {witness:.8} at depth 1, lower bound {lower:.5} vs {closed_form:.5}, {elapsed:?}"
    );
}

#[test]
fn criterion_02_word_weight_supermultiplicativity() {
    let mut rng = rng::seeded(0xC2);
    let mut tuples: Vec<MapTuple> = Vec::new();
    while tuples.len() < 25 {
        let dim = 1 + tuples.len() % 3;
        let maps = 2 + (tuples.len() % 2);
        let candidates: Vec<Matrix> = (0..maps)
            .map(|_| loop {
                let data: Vec<f64> = (0..dim * dim)
                    .map(|_| rng::uniform_in(&mut rng, -1.0, 1.0))
                    .collect();
                let m = Matrix::new(dim, data).unwrap();
                let svs = affine_interior_core::linalg::singular_values(&m);
                if svs[dim - 1] * 3.0 >= svs[0] {
                    break m.scaled(rng::uniform_in(&mut rng, 0.3, 0.6) / svs[0]);
                }
            })
            .collect();
        if let Ok(t) = MapTuple::new(candidates) {
            tuples.push(t);
        }
    }
    let mut failures = 0usize;
    for trial in 0..10_000usize {
        let t = &tuples[trial % tuples.len()];
        let t_val = rng::uniform_in(&mut rng, 0.0, 4.0);
        let draw = |rng: &mut rng::ChaCha8Rng, len: usize| {
            Word::new(
                (0..len)
                    .map(|_| (rng::uniform_index(rng, t.len()) + 1) as u8)
                    .collect(),
            )
            .unwrap()
        };
        let li = 1 + (rng.next_u64() % 4) as usize;
        let i = draw(&mut rng, li);
        let lj = 1 + (rng.next_u64() % 4) as usize;
        let j = draw(&mut rng, lj);
        let gi = g_t(t_val, t, &i).unwrap();
        let gj = g_t(t_val, t, &j).unwrap();
        let gij = g_t(t_val, t, &i.concat(&j)).unwrap();
        if gij < gi * gj * (1.0 - 1e-10) {
            failures += 1;
        }
    }
    assert_eq!(failures, 0, "{failures} supermultiplicativity failures");
    println!("criterion 2: PASS - 10000 samples, zero violations at relative slack 1e-10");
}

#[test]
fn criterion_03_block_measure_cylinder_bound_depth_six() {
    let cfg = config("grid25.json");
    let out = run(&[
        "measure",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "2.01",
        "--depth",
        "6",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    let check = &v["report"]["bound_check"];
    assert_eq!(check["holds"], Value::Bool(true));
    let max_ratio = check["max_ratio"].as_f64().unwrap();
    assert!(max_ratio <= 1.0, "max ratio {max_ratio}");
    // Exhaustive: every word to depth 6 (all have positive mass here).
    let expected: u64 = (1..=6).map(|n| 25u64.pow(n)).sum();
    assert_eq!(check["words_checked"].as_u64().unwrap(), expected);
    let lambda = v["report"]["certificate"]["lambda"].as_f64().unwrap();
    assert!((lambda - 25.0 * 0.45f64.powf(4.01)).abs() < 1e-9);
    println!(
        "criterion 3: PASS - {expected} words checked exhaustively, max ratio {max_ratio:.6} <= 1"
    );
}

#[test]
fn criterion_04_gradient_lower_bound() {
    for (k, delta) in [0.30f64, 0.45, 0.49].into_iter().enumerate() {
        // Seeded random tuple with every operator norm equal to delta.
        let mut stream = rng::seeded(0xC4 + k as u64);
        let maps: Vec<Matrix> = (0..3)
            .map(|_| loop {
                let data: Vec<f64> = (0..4)
                    .map(|_| rng::uniform_in(&mut stream, -1.0, 1.0))
                    .collect();
                let m = Matrix::new(2, data).unwrap();
                if m.det().abs() > 1e-3 {
                    break m.scaled(delta / m.op_norm());
                }
            })
            .collect();
        let tuple = MapTuple::new(maps).unwrap();
        assert!((tuple.delta() - delta).abs() < 1e-12);
        let mut trial_rng = rng::substream(0xC4, 40 + k as u64);
        let report = verify_gradient_bound(&tuple, 10_000, 40, &mut trial_rng).unwrap();
        let expected_bound = (1.0 - 2.0 * delta) / (1.0 - delta);
        let expected_trunc = 2.0 * delta.powi(41) / (1.0 - delta);
        assert!((report.lower_bound - expected_bound).abs() < 1e-12);
        assert!((report.truncation_error - expected_trunc).abs() < 1e-15);
        assert_eq!(report.failures, 0, "delta {delta}: {report:?}");
        assert!(
            report.fd_max_error <= 1e-6,
            "delta {delta}: fd error {}",
            report.fd_max_error
        );
    }
    println!("criterion 4: PASS - 10000 trials at each delta in {{0.30, 0.45, 0.49}}, zero failures, FD cross-checks within 1e-6");
}

#[test]
fn criterion_05_decay_integral_normalizations() {
    // First family: ratio = LHS * a_d(T)^t |det T| with t = 2.5, N = 6.
    let (t, n_exp) = (2.5, 6.0);
    let closed = 2.0 * quad::beta(t + 1.0, n_exp - t - 1.0);
    for alpha in [1e-3, 1e-1, 1.0] {
        let r = decay_integral_ratio(&Matrix::diagonal(&[alpha]), t, n_exp, 0).unwrap();
        let dev = (r.normalized - closed).abs() / closed;
        assert!(dev <= 0.01, "alpha {alpha}: dev {dev}");
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for alpha in [1e-3, 1e-1, 1.0] {
        for kappa in [1.0, 10.0, 100.0, 1000.0] {
            let m = Matrix::diagonal(&[alpha, alpha * kappa]);
            let r = decay_integral_ratio(&m, t, n_exp, 0).unwrap();
            lo = lo.min(r.normalized);
            hi = hi.max(r.normalized);
        }
    }
    let spread_decay = hi / lo;
    assert!(spread_decay <= 50.0, "decay spread {spread_decay}");

    // Second family: ratio = LHS * phi^t(T) with t = 1.5, N = 4.
    let (t2, n2) = (1.5, 4.0);
    let closed_half = 2.0 * quad::beta(0.5, n2 - 0.5);
    for alpha in [1e-3, 1e-1, 1.0] {
        let r = singular_integral_ratio(&Matrix::diagonal(&[alpha]), 0.5, n2, 0).unwrap();
        let dev = (r.normalized - closed_half).abs() / closed_half;
        assert!(dev <= 0.01, "alpha {alpha}: dev {dev}");
    }
    let mut lo2 = f64::INFINITY;
    let mut hi2 = 0.0f64;
    for alpha in [1e-3, 1e-1, 1.0] {
        for kappa in [1.0, 10.0, 100.0, 1000.0] {
            let m = Matrix::diagonal(&[alpha, alpha * kappa]);
            let r = singular_integral_ratio(&m, t2, n2, 0).unwrap();
            lo2 = lo2.min(r.normalized);
            hi2 = hi2.max(r.normalized);
        }
    }
    let spread_singular = hi2 / lo2;
    assert!(spread_singular <= 50.0, "singular spread {spread_singular}");
    println!(
        "criterion 5: PASS - spreads {spread_decay:.2} and {spread_singular:.2} (<= 50), scalar closed forms within 1%"
    );
}

#[test]
fn criterion_06_slice_integral() {
    let base = slice_integral_ratio(&[1.0], 2.0).unwrap();
    let pi_dev = (base.integral - std::f64::consts::PI).abs() / std::f64::consts::PI;
    assert!(pi_dev <= 1e-3, "pi deviation {pi_dev}");
    let reference = slice_integral_ratio(&[1.0, 0.5], 2.0).unwrap();
    let mut worst: f64 = 0.0;
    for lambda in [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3] {
        let scaled = slice_integral_ratio(&[lambda, 0.5 * lambda], 2.0).unwrap();
        worst = worst.max((scaled.ratio / reference.ratio - 1.0).abs());
    }
    assert!(worst <= 1e-6, "scaling deviation {worst}");
    println!(
        "criterion 6: PASS - pi reproduced to {pi_dev:.2e}, scaling invariance to {worst:.2e}"
    );
}

#[test]
fn criterion_07_sumset_split() {
    let cfg = config("five_maps_line.json");
    let out = run(&[
        "split",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "10000",
        "--seed",
        "11",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    let block = &v["report"]["certificate"]["block"];
    assert_eq!(block["n"], 1);
    let score = block["score"].as_f64().unwrap();
    assert!((score - 1.00445).abs() < 1e-3, "score {score}");
    let verify = &v["report"]["verification"];
    assert_eq!(verify["pairs"], 10_000);
    let h1 = verify["hausdorff_f_to_ae"].as_f64().unwrap();
    let h2 = verify["hausdorff_ae_to_f"].as_f64().unwrap();
    assert!(h1 <= 1e-3 && h2 <= 1e-3, "hausdorff {h1} {h2}");
    let nn = verify["max_nn_deviation"].as_f64().unwrap();
    assert!(nn <= 1e-3, "nn deviation {nn}");
    assert_eq!(verify["pass"], Value::Bool(true));

    // Fault injection: a corrupted fixed vector must fail with deviation
    // close to the injected offset.
    let tuple = MapTuple::uniform_scalar(1, 5, 0.45).unwrap();
    let ifs = affine_interior_core::geometry::IfsInstance::new(
        tuple,
        vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
    )
    .unwrap();
    let class = find_certified_block(ifs.tuple(), &[2.01], 3, 1e-10).unwrap();
    let mut cert = build_split(&ifs, &class, None).unwrap();
    cert.v[0] += 0.1;
    let mut stream = rng::seeded(23);
    let report = verify_split(&ifs, &cert, 2000, 1e-3, 400_000, &mut stream).unwrap();
    assert!(!report.pass, "corrupted certificate must fail");
    assert!(
        (report.max_identity_deviation - 0.1).abs() < 2e-3,
        "deviation {} should be about the injected 0.1",
        report.max_identity_deviation
    );
    println!(
        "criterion 7: PASS - score {score:.5}, hausdorff ({h1:.2e}, {h2:.2e}), 10^4 sums within 1e-3; fault injection detected at {:.4}",
        report.max_identity_deviation
    );
}

#[test]
fn criterion_08_fourier_and_energy_oracles() {
    let ifs = unit_square_system();
    let cloud = chaos_sample(
        &ifs,
        SymbolSource::UniformLetters,
        100_000,
        1e-5,
        &mut rng::seeded(0xC8),
    )
    .unwrap();
    // Exact total mass at frequency zero.
    let at_zero = fourier_mc(&cloud, &[0.0, 0.0]).unwrap();
    assert_eq!(at_zero.re, 1.0);
    assert_eq!(at_zero.im, 0.0);
    // Vanishing at the full period.
    let tau = std::f64::consts::TAU;
    let at_tau = fourier_mc(&cloud, &[tau, tau]).unwrap();
    assert!(
        at_tau.modulus() <= 4.0 * at_tau.stderr,
        "|mu-hat| {} vs 4 stderr {}",
        at_tau.modulus(),
        4.0 * at_tau.stderr
    );
    // Truncated energy against the sinc-product quadrature oracle.
    let s = 1.5;
    let r_cut = 64.0;
    let est = truncated_energy(&cloud, s, r_cut, 256, 0xC8F).unwrap();
    let oracle = square_energy_oracle(s, r_cut);
    assert!(
        (est.value - oracle).abs() <= 3.0 * est.stderr,
        "energy {} vs oracle {oracle} (stderr {})",
        est.value,
        est.stderr
    );
    // Point-mass truncated energy: |mu-hat| = 1, integral is surface * R^s / s.
    for (d, surface) in [(1usize, 2.0f64), (2, tau)] {
        let mut point_cloud = PointCloud::new(d);
        for _ in 0..64 {
            point_cloud.push(&vec![0.3; d]);
        }
        let pm = truncated_energy(&point_cloud, s, 16.0, 2000, 0xC80 + d as u64).unwrap();
        let exact = surface * 16.0f64.powf(s) / s;
        assert!(
            (pm.value - exact).abs() <= 3.0 * pm.stderr,
            "d={d}: {} vs {exact} (stderr {})",
            pm.value,
            pm.stderr
        );
    }
    println!(
        "criterion 8: PASS - mu-hat(0) exact, mu-hat(2pi,2pi) within 4 stderr, energies within 3 stderr of oracles ({:.3} vs {:.3})",
        est.value, oracle
    );
}

/// Deterministic sinc-product quadrature for the truncated energy of
/// Lebesgue measure on the unit square.
fn square_energy_oracle(s: f64, r_cut: f64) -> f64 {
    let f = |u: f64| -> f64 {
        if u.abs() < 1e-9 {
            1.0 - u * u / 12.0
        } else {
            let h = (0.5 * u).sin() / (0.5 * u);
            h * h
        }
    };
    let (nr, nt) = (8192usize, 256usize);
    let hr = r_cut / nr as f64;
    let ht = std::f64::consts::FRAC_PI_2 / nt as f64;
    let mut total = 0.0;
    for i in 0..=nr {
        let wr = if i == 0 || i == nr {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let r = i as f64 * hr;
        let mut inner = 0.0;
        for j in 0..=nt {
            let wt = if j == 0 || j == nt {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let theta = j as f64 * ht;
            inner += wt * f(r * theta.cos()) * f(r * theta.sin());
        }
        total += wr * (inner * ht / 3.0) * r.powf(s - 1.0);
    }
    4.0 * total * hr / 3.0
}

#[test]
fn criterion_09_interior_evidence_and_control() {
    // Perturbed 5x5 grid demo: certified hypotheses upstream, and the
    // sampled interior disk must be stable from 512^2 to 1024^2.
    let ifs = perturbed_grid25_system(0.05, 2026);
    let report = detect_interior(&ifs, &[512, 1024], 4_000_000, 0xC9).unwrap();
    assert_eq!(report.verdict, InteriorVerdict::StableDisk, "{report:?}");
    let ratio = report.radius_ratios[0];
    assert!(ratio >= 0.8, "radius ratio {ratio}");
    assert!(!report.certified);

    // Control: two maps with |det| sum 0.18 < 1; occupied volume must decay
    // by at least half per refinement.
    let dust = dust_control_system();
    let control = measure_lower_evidence(
        &dust,
        SymbolSource::UniformLetters,
        &[256, 512, 1024],
        200_000,
        0xC9,
    )
    .unwrap();
    assert_eq!(control.verdict, DensityVerdict::ConsistentWithMeasureZero);
    for r in &control.volume_ratios {
        assert!(*r <= 0.5, "volume ratio {r}");
    }
    println!(
        "criterion 9: PASS - stable disk (radius ratio {ratio:.3} >= 0.8); control volume ratios {:?} all <= 0.5",
        control.volume_ratios
    );
}

#[test]
fn criterion_10_seeded_reruns_are_byte_identical() {
    let square = config("unit_square.json");
    let five = config("five_maps_line.json");
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let runs: Vec<Vec<String>> = vec![
        vec![
            "interior".into(),
            "--config".into(),
            square.display().to_string(),
            "--resolution".into(),
            "64,128".into(),
            "--budget".into(),
            "150000".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out_dir.display().to_string(),
        ],
        vec![
            "sobolev".into(),
            "--config".into(),
            square.display().to_string(),
            "--budget".into(),
            "20000".into(),
            "--resolution".into(),
            "8,16".into(),
            "--seed".into(),
            "5".into(),
            "--format".into(),
            "csv".into(),
            "--out".into(),
            out_dir.display().to_string(),
        ],
        vec![
            "verify".into(),
            "--suite".into(),
            "gradient".into(),
            "--trials".into(),
            "1000".into(),
            "--seed".into(),
            "7".into(),
        ],
        vec![
            "split".into(),
            "--config".into(),
            five.display().to_string(),
            "--trials".into(),
            "500".into(),
            "--budget".into(),
            "400000".into(),
            "--seed".into(),
            "9".into(),
        ],
        vec![
            "render".into(),
            "--config".into(),
            square.display().to_string(),
            "--depth".into(),
            "5".into(),
            "--resolution".into(),
            "128".into(),
            "--out".into(),
            out_dir.display().to_string(),
        ],
    ];
    for args in &runs {
        let argv: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        let first = run(&argv);
        let first_artifacts = snapshot_dir(&out_dir);
        if out_dir.exists() {
            std::fs::remove_dir_all(&out_dir).unwrap();
        }
        let second = run(&argv);
        let second_artifacts = snapshot_dir(&out_dir);
        assert_eq!(
            first.status.code(),
            second.status.code(),
            "{args:?} exit codes differ"
        );
        assert_eq!(first.stdout, second.stdout, "{args:?} stdout differs");
        assert_eq!(
            first_artifacts, second_artifacts,
            "{args:?} artifacts differ"
        );
        if out_dir.exists() {
            std::fs::remove_dir_all(&out_dir).unwrap();
        }
    }
    println!(
        "criterion 10: PASS - 5 randomized commands rerun byte-identically (stdout and artifacts)"
    );
}

fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries = Vec::new();
    if !dir.exists() {
        return entries;
    }
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for path in names {
        entries.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).unwrap(),
        ));
    }
    entries
}
