//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one `PASS`/`FAIL` line; exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orientdist::bingham::{fit_to_samples, iso_log_norm_const, iso_log_norm_const_grad, BinghamDist};
use orientdist::config::RunConfig;
use orientdist::data::synth::{synth_dataset, viewpoint_split, NoiseModel, SynthConfig};
use orientdist::data::Dataset;
use orientdist::eval::metrics::{add_error, add_s_error, auc, Pose};
use orientdist::eval::{evaluate_dataset, filter_by_likelihood, Evaluator, CHANCE_DENSITY};
use orientdist::grid::S3Grid;
use orientdist::histogram::{nll_loss, GriddedHistogram};
use orientdist::learners::fit::fit_method;
use orientdist::learners::mlp::{Activation, Mlp, MlpSpec};
use orientdist::learners::TrainConfig;
use orientdist::symmetry::{symmetric_angular_error, SymmetrySpec};
use orientdist::UnitQuaternion;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- helpers

fn dataset(objects: Vec<(&str, SymmetrySpec)>, n: usize, noise: NoiseModel, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        objects: objects.into_iter().map(|(id, s)| (id.to_string(), s)).collect(),
        records_per_object: n,
        noise,
        ..Default::default()
    };
    synth_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).expect("synthetic dataset")
}

fn constant_noise(deg: f64) -> NoiseModel {
    NoiseModel { sigma_min_deg: deg, sigma_max_deg: deg, ..Default::default() }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Held-out mean log likelihood of `method` fitted on `train`.
fn held_out(method: &str, train: &Dataset, test: &Dataset, grid: &Arc<S3Grid>, cfg: &RunConfig) -> f64 {
    let fit = fit_method(method, train, grid.clone(), cfg).expect("fit");
    let ev = Evaluator::from_checkpoint(fit.checkpoint, grid.clone(), cfg.stage_seed("eval")).expect("bind");
    mean(evaluate_dataset(test, &ev).expect("evaluate").iter().map(|e| e.log_likelihood))
}

fn run_config(level: u32, hidden: usize, epochs: usize) -> RunConfig {
    RunConfig {
        grid_level: level,
        seed: 3,
        train: TrainConfig { hidden: vec![hidden, hidden], epochs, lr: 1e-3, dropout: 0.0, batch_size: 16 },
        ..Default::default()
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

// --------------------------------------------------------------- criteria

fn grid_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g2 = S3Grid::build(2).expect("level 2");
    let c2 = g2.coverage_stats(100_000, &mut rng).expect("coverage");
    let g1 = S3Grid::build(1).expect("level 1");
    let c1 = g1.coverage_stats(100_000, &mut rng).expect("coverage");
    let secs = start.elapsed().as_secs_f64();
    let count_ok = g2.len() == 3885;
    let fine_ok = c2.max_deg <= 12.0;
    let coarse_ok = (c1.max_deg - 26.0).abs() <= 4.0;
    outcome(
        count_ok && fine_ok && coarse_ok && secs < 60.0,
        format!(
            "level-2 vertices {} (want 3885), max coverage {:.2} deg (want <= 12), level-1 max {:.2} deg (want 26 +/- 4), {secs:.1} s",
            g2.len(),
            c2.max_deg,
            c1.max_deg
        ),
    )
}

fn uniform_reference() -> Outcome {
    let mut worst: f64 = 0.0;
    for (seed, sym) in [(11, SymmetrySpec::None), (12, SymmetrySpec::cyclic(4, [0.0, 0.0, 1.0]).unwrap())] {
        let ds = dataset(vec![("o", sym)], 200, NoiseModel::default(), seed);
        let ll = mean(evaluate_dataset(&ds, &Evaluator::Uniform).unwrap().iter().map(|e| e.log_likelihood));
        worst = worst.max((ll + 2.2895).abs());
    }
    let chance_ok = (CHANCE_DENSITY - 0.1013).abs() <= 5e-4;
    outcome(
        worst <= 1e-3 && chance_ok,
        format!("max |mean ll + 2.2895| = {worst:.2e}, chance density {CHANCE_DENSITY:.5}"),
    )
}

/// Composite Simpson rule for `∫₀^π 4π sin²θ e^{-λ sin²θ} dθ`, the
/// isotropic normalizer written in the angle between `q` and the mode.
fn iso_normalizer_quadrature(lambda: f64) -> f64 {
    let n = 200_000;
    let h = PI / n as f64;
    let f = |t: f64| {
        let s2 = t.sin().powi(2);
        4.0 * PI * s2 * (-lambda * s2).exp()
    };
    let mut acc = f(0.0) + f(PI);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // (a) random histogram over the level-2 grid, uniform samples over the
    // half sphere of area π².
    let grid = Arc::new(S3Grid::build(2).unwrap());
    let values: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>().powi(4)).collect();
    let hist = GriddedHistogram::new(grid, values, 4).unwrap();
    let n = 1_000_000;
    let hist_integral = PI * PI * mean((0..n).map(|_| hist.pdf_at(&UnitQuaternion::random_uniform(&mut rng))));
    let a = (hist_integral - 1.0).abs() <= 0.01;

    // (b) closed form against quadrature.
    let mut worst_b: f64 = 0.0;
    for lambda in [0.1, 1.0, 10.0, 100.0, 500.0] {
        let closed = iso_log_norm_const(lambda).unwrap().exp();
        worst_b = worst_b.max(rel_err(closed, iso_normalizer_quadrature(lambda), 0.0));
    }
    let b = worst_b <= 1e-6;

    // (c) random full Bingham parameters.
    let mut worst_c: f64 = 0.0;
    for _ in 0..5 {
        let z = [0.0, -rng.random_range(0.0..10.0), -rng.random_range(0.0..10.0), -rng.random_range(0.0..10.0)];
        let d = BinghamDist::new(
            UnitQuaternion::random_uniform(&mut rng),
            UnitQuaternion::random_uniform(&mut rng),
            UnitQuaternion::IDENTITY,
            z,
        )
        .unwrap();
        let integral = PI * PI * mean((0..200_000).map(|_| d.pdf(&UnitQuaternion::random_uniform(&mut rng))));
        worst_c = worst_c.max((integral - 1.0).abs());
    }
    let c = worst_c <= 0.01;
    outcome(
        a && b && c,
        format!(
            "(a) histogram integral {hist_integral:.4}; (b) max rel err {worst_b:.2e}; (c) max |bingham integral - 1| {worst_c:.4}"
        ),
    )
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = S3Grid::build(1).unwrap();
    let tol = 1e-4;

    // (a) histogram loss w.r.t. unnormalized scores, along random directions.
    let mut worst_a: f64 = 0.0;
    for _ in 0..10 {
        let scores: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.1..1.0)).collect();
        let q = UnitQuaternion::random_uniform(&mut rng);
        let loss = nll_loss(&grid, &scores, &q, 4).unwrap();
        let dir = random_direction(scores.len(), &mut rng);
        let analytic: f64 = loss.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let h = 1e-5;
        let at = |t: f64| {
            let s: Vec<f64> = scores.iter().zip(&dir).map(|(s, d)| s + t * d).collect();
            nll_loss(&grid, &s, &q, 4).unwrap().value
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        worst_a = worst_a.max(rel_err(analytic, fd, 1e-3));
    }

    // (b) MLP parameters for a random linear functional of the output.
    let mut worst_b: f64 = 0.0;
    for _ in 0..10 {
        let spec = MlpSpec {
            widths: vec![5, 7, 6, 3],
            hidden: Activation::Softplus,
            output: Activation::Sigmoid,
            dropout: vec![],
        };
        let mut net = Mlp::new(&spec, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let cache = net.forward::<ChaCha8Rng>(x.view(), None).unwrap();
        let grads = net.backward(&cache, c.view()).unwrap();
        let n_params: usize = net.layers().iter().map(|l| l.weights.len() + l.bias.len()).sum();
        let dir = random_direction(n_params, &mut rng);
        let analytic: f64 = grads
            .layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .zip(&dir)
            .map(|(g, d)| g * d)
            .sum();
        let shift = |net: &mut Mlp, t: f64| {
            let mut i = 0;
            for l in net.layers_mut() {
                for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                    *w += t * dir[i];
                    i += 1;
                }
            }
        };
        let h = 1e-5;
        let objective = |net: &Mlp| (net.predict(x.view()).unwrap() * &c).sum();
        shift(&mut net, h);
        let up = objective(&net);
        shift(&mut net, -2.0 * h);
        let down = objective(&net);
        worst_b = worst_b.max(rel_err(analytic, (up - down) / (2.0 * h), 1e-3));
    }

    // (c) isotropic Bingham log likelihood w.r.t. λ.
    let mut worst_c: f64 = 0.0;
    for _ in 0..10 {
        let lambda = rng.random_range(0.1f64..500.0);
        let gap = rng.random_range(0.0..0.5);
        let ll = |l: f64| std::f64::consts::LN_2 - l * gap - iso_log_norm_const(l).unwrap();
        let analytic = -gap - iso_log_norm_const_grad(lambda).unwrap();
        let h = 1e-5 * lambda.max(1.0);
        let fd = (ll(lambda + h) - ll(lambda - h)) / (2.0 * h);
        worst_c = worst_c.max(rel_err(analytic, fd, 1e-3));
    }
    outcome(
        worst_a <= tol && worst_b <= tol && worst_c <= tol,
        format!("max rel err: (a) scores {worst_a:.2e}, (b) mlp {worst_b:.2e}, (c) lambda {worst_c:.2e}; 10 instances each"),
    )
}

fn fitting_round_trip() -> Outcome {
    const Z: [f64; 4] = [0.0, -2.0, -10.0, -10.0];
    let start = Instant::now();
    let mut good = 0;
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let truth = BinghamDist::new(
            UnitQuaternion::random_uniform(&mut rng),
            UnitQuaternion::random_uniform(&mut rng),
            UnitQuaternion::IDENTITY,
            Z,
        )
        .unwrap();
        let fit = fit_to_samples(&truth.sample(10_000, &mut rng)).unwrap();
        let mut z = fit.dist.z();
        z.sort_by(|a, b| b.total_cmp(a));
        let conc_ok = (1..4).all(|i| (z[i] - Z[i]).abs() <= 0.10 * Z[i].abs());
        if fit.dist.mode().angle_deg_to(&truth.mode()) <= 2.0 && conc_ok {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(good >= 18 && secs < 300.0, format!("{good}/20 trials within tolerance (want >= 18), {secs:.1} s"))
}

fn synthetic_comparisons() -> Outcome {
    let grid = Arc::new(S3Grid::build(2).unwrap());
    let mut parts = Vec::new();
    let mut pass = true;

    // (a) C4 object: histogram against the best isotropic Bingham.
    let start = Instant::now();
    let c4 = SymmetrySpec::cyclic(4, [0.0, 0.0, 1.0]).unwrap();
    let train = dataset(vec![("c4", c4.clone())], 300, constant_noise(5.0), 1);
    let test = dataset(vec![("c4", c4)], 200, constant_noise(5.0), 2);
    let comparison = held_out("comparison", &train, &test, &grid, &run_config(2, 64, 3));
    let fixed = held_out("fixed-bingham", &train, &test, &grid, &run_config(2, 64, 3));
    let head = held_out("bingham-head", &train, &test, &grid, &run_config(2, 64, 30));
    let best = fixed.max(head);
    let ok_a = comparison >= best + 1.0;
    pass &= ok_a && start.elapsed().as_secs() < 900;
    parts.push(format!(
        "(a) comparison {comparison:.3} vs best bingham {best:.3} [{}]",
        if ok_a { "ok" } else { "short" }
    ));

    // (b) non-symmetric object: head against comparison.
    let start = Instant::now();
    let train = dataset(vec![("o", SymmetrySpec::None)], 600, NoiseModel::default(), 1);
    let test = dataset(vec![("o", SymmetrySpec::None)], 200, NoiseModel::default(), 2);
    let head = held_out("bingham-head", &train, &test, &grid, &run_config(2, 64, 40));
    let comparison = held_out("comparison", &train, &test, &grid, &run_config(2, 64, 4));
    let ok_b = head >= comparison - 0.3;
    pass &= ok_b && start.elapsed().as_secs() < 900;
    parts.push(format!(
        "(b) head {head:.3} vs comparison {comparison:.3} [{}]",
        if ok_b { "ok" } else { "short" }
    ));

    // (c) held-out viewpoints: comparison against direct regression.
    let start = Instant::now();
    let all = dataset(vec![("o", SymmetrySpec::None)], 1200, NoiseModel::default(), 1);
    let (outside, inside) = viewpoint_split(&all.records, [1.0, 0.0, 0.0], 50.0);
    let (train, test) = (all.with_records(outside), all.with_records(inside));
    let comparison = held_out("comparison", &train, &test, &grid, &run_config(2, 64, 3));
    let direct = held_out("direct-histogram", &train, &test, &grid, &run_config(2, 64, 30));
    let ok_c = comparison > direct;
    pass &= ok_c && start.elapsed().as_secs() < 900;
    parts.push(format!(
        "(c) comparison {comparison:.3} vs direct {direct:.3} on {} held-out records [{}]",
        test.records.len(),
        if ok_c { "ok" } else { "short" }
    ));
    outcome(pass, parts.join("; "))
}

fn confidence_filtering() -> Outcome {
    let grid = Arc::new(S3Grid::build(2).unwrap());
    let train = dataset(vec![("o", SymmetrySpec::None)], 600, NoiseModel::default(), 21);
    let test = dataset(vec![("o", SymmetrySpec::None)], 600, NoiseModel::default(), 22);
    let cfg = run_config(2, 64, 40);
    let fit = fit_method("bingham-head", &train, grid.clone(), &cfg).unwrap();
    let ev = Evaluator::from_checkpoint(fit.checkpoint, grid, 0).unwrap();
    let evals = evaluate_dataset(&test, &ev).unwrap();
    let rows = filter_by_likelihood(&evals, &[0.0, 1.0, 10.0, 50.0, 100.0]).unwrap();
    let reject_ok = rows.windows(2).all(|w| w[1].reject_pct >= w[0].reject_pct);
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.mean_angle_deg).collect();
    let inversions: Vec<f64> = errors.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let error_ok = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.5);
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "x{}: {:.1}% rejected, {}",
                r.multiplier,
                r.reject_pct,
                r.mean_angle_deg.map_or("n/a".into(), |e| format!("{e:.2} deg"))
            )
        })
        .collect();
    outcome(reject_ok && error_ok, table.join(", "))
}

fn metric_examples() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let id = UnitQuaternion::IDENTITY;
    let about_z = |deg: f64| UnitQuaternion::from_axis_angle([0.0, 0.0, 1.0], deg.to_radians()).unwrap();
    let c4 = SymmetrySpec::cyclic(4, [0.0, 0.0, 1.0]).unwrap();
    let e = symmetric_angular_error(&id, &about_z(89.0), &c4).unwrap();
    check("c4 89 deg", (e - 1.0).abs() <= 1e-6);
    let cont = SymmetrySpec::Continuous { axis: [0.0, 0.0, 1.0] };
    let q = UnitQuaternion::normalize([0.3, -0.2, 0.5, 0.7]).unwrap();
    let e = symmetric_angular_error(&q, &q.multiply(&about_z(137.0)), &cont).unwrap();
    check("continuous axis", e.abs() <= 1e-6);
    let tilt = UnitQuaternion::from_axis_angle([1.0, 2.0, -0.5], 10f64.to_radians()).unwrap();
    let e = symmetric_angular_error(&q, &q.multiply(&tilt), &SymmetrySpec::None).unwrap();
    check("no symmetry 10 deg", (e - 10.0).abs() <= 1e-6);

    let points = [[0.1, 0.0, 0.0], [0.0, 0.05, 0.02], [-0.03, 0.01, 0.08]];
    let pose = Pose::new(q, Some([0.2, 0.1, 0.5]));
    check("identical ADD", add_error(&points, &pose, &pose).unwrap().abs() <= 1e-12);
    check("identical ADD-S", add_s_error(&points, &pose, &pose).unwrap().abs() <= 1e-12);
    let shifted = Pose::new(q, Some([0.23, 0.14, 0.5]));
    check("translation ADD", (add_error(&points, &pose, &shifted).unwrap() - 0.05).abs() <= 1e-9);

    check("auc zero errors", auc(&[0.0, 0.0, 0.0], 0.1).unwrap() == 1.0);
    check("auc saturated", auc(&[0.1, 0.3], 0.1).unwrap() == 0.0);
    check("auc half", (auc(&[0.05], 0.1).unwrap() - 0.5).abs() <= 1e-12);
    outcome(
        failures.is_empty(),
        if failures.is_empty() { "9 examples exact".into() } else { format!("failed: {}", failures.join(", ")) },
    )
}

fn cli(dir: &Path, args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_orientdist"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run orientdist");
    (out.status.success(), out.stdout)
}

/// Every command, twice, in fresh directories; stdout and written files
/// must match byte for byte.
fn determinism() -> Outcome {
    let common = ["--grid-level", "1", "--seed", "7", "--hidden", "16,16", "--epochs", "2"];
    let steps: [&[&str]; 12] = [
        &["grid", "--samples", "10000"],
        &["synth", "--out", "d.jsonl", "--object", "a=none", "--object", "b=c4:z", "--records", "40"],
        &["tune", "--data", "d.jsonl", "--out", "fb.json"],
        &["tune", "--data", "d.jsonl", "--method", "mixture", "--out", "mx.json"],
        &["train", "--data", "d.jsonl", "--method", "comparison", "--out", "cmp.json"],
        &["train", "--data", "d.jsonl", "--method", "bingham-head", "--out", "bh.json"],
        &["train", "--data", "d.jsonl", "--method", "mc-dropout", "--out", "mc.json"],
        &[
            "eval", "--data", "d.jsonl", "--method", "uniform", "--method", "fixed-bingham=fb.json", "--method",
            "mixture=mx.json", "--method", "comparison=cmp.json", "--method", "mc-dropout=mc.json", "--out",
            "eval.txt",
        ],
        &["filter", "--data", "d.jsonl", "--method", "bingham-head=bh.json", "--csv", "--out", "filter.csv"],
        &["report", "--data", "d.jsonl", "--method", "bingham-head=bh.json", "--method", "cosine", "--out", "rep"],
        &["heatmap", "--data", "d.jsonl", "--record", "3", "--method", "comparison=cmp.json", "--out", "h.csv"],
        &["eval", "--data", "d.jsonl", "--method", "direct-histogram=missing.json"],
    ];
    let run_all = |dir: &Path| -> Vec<(bool, Vec<u8>)> {
        steps
            .iter()
            .map(|s| {
                let args: Vec<&str> = common.iter().chain(s.iter()).copied().collect();
                cli(dir, &args)
            })
            .collect()
    };
    let files = [
        "d.jsonl", "fb.json", "mx.json", "cmp.json", "bh.json", "mc.json", "eval.txt", "filter.csv", "h.csv",
        "rep/likelihood.txt", "rep/likelihood.csv", "rep/auc.txt", "rep/auc.csv", "rep/filter.txt", "rep/filter.csv",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_all(a.path());
    let rb = run_all(b.path());
    let mut problems = Vec::new();
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        // the last step must fail, every other must succeed
        let expect_ok = i + 1 < steps.len();
        if x.0 != expect_ok || y.0 != expect_ok {
            problems.push(format!("step {} `{}` exit status", i + 1, steps[i][0]));
        }
        if x.1 != y.1 {
            problems.push(format!("step {} `{}` stdout differs", i + 1, steps[i][0]));
        }
    }
    for f in files {
        match (std::fs::read(a.path().join(f)), std::fs::read(b.path().join(f))) {
            (Ok(x), Ok(y)) if x == y => {}
            (Ok(_), Ok(_)) => problems.push(format!("{f} differs")),
            _ => problems.push(format!("{f} missing")),
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} commands and {} output files identical across two runs", steps.len(), files.len())
        } else {
            problems.join(", ")
        },
    )
}

fn main() {
    // `cargo test -- --list` and filtering probes expect harness-like output.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("grid fidelity", grid_fidelity),
        ("uniform reference", uniform_reference),
        ("normalization", normalization),
        ("gradient correctness", gradients),
        ("fitting round trip", fitting_round_trip),
        ("synthetic method comparisons", synthetic_comparisons),
        ("confidence filtering", confidence_filtering),
        ("metric examples", metric_examples),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({}) [{:.1} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
