//! Acceptance suite: one PASS/FAIL line per criterion, synthetic fixtures only.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use oodbound::boundary::{closed_form_radius, criterion_f, search_radius, BoundaryParams, Criterion};
use oodbound::data::{synth_blobs, BlobSpec, OOD_LABEL};
use oodbound::evaluation::{confusion_and_f1, run_protocol, RunConfig};
use oodbound::metric::{run_gradcheck, GradcheckConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        out.passed &= elapsed < limit;
        out.detail = format!("{}; {:.3}s (limit {}s)", out.detail, elapsed.as_secs_f64(), limit.as_secs());
    }
    out
}

fn radius_oracle() -> Outcome {
    let params = BoundaryParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ind: Vec<f64> = (0..rng.random_range(1..80)).map(|_| rng.random_range(0.0..1.5)).collect();
        let ood: Vec<f64> = (0..rng.random_range(1..400)).map(|_| rng.random_range(0.0..2.0)).collect();
        let beta = rng.random_range(0.1..=200.0);
        let fit = search_radius(&Criterion::new(&ind, &ood, beta).unwrap(), &params);
        let a = ood.iter().sum::<f64>() / ood.len() as f64;
        let b = ind.iter().sum::<f64>() / ind.len() as f64;
        worst = worst.max((fit.radius - closed_form_radius(a, b, beta)).abs());
    }
    Outcome { passed: worst <= params.step, detail: format!("max |fit - closed form| = {worst:.2e} (tol {})", params.step) }
}

fn gradients() -> Outcome {
    let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
    Outcome {
        passed: report.trials == 20 && report.passed(),
        detail: format!(
            "{} trials, worst relative error lmcl {:.2e}, triplet {:.2e} (tol {:.0e})",
            report.trials, report.worst_lmcl, report.worst_triplet, report.tolerance
        ),
    }
}

fn synthetic_end_to_end() -> Outcome {
    let (train, test) = synth_blobs(&BlobSpec { classes: 8, dim: 32, per_class: 50, sigma: 0.05, seed: 0 }).unwrap();
    let rc = RunConfig { ratios: vec![0.5], runs: 5, seed: 0, train_fraction: 1.0 };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let report = pool
        .install(|| run_protocol(&train, &test, &rc, &TrainConfig::default(), &BoundaryParams::default()))
        .unwrap();
    let r = &report.results[0];
    let known = r.per_run[0].known_labels.len();
    Outcome {
        passed: known == 4 && r.mean.accuracy >= 0.95 && r.mean.f1_ood >= 0.95,
        detail: format!("{known} known, accuracy {:.4}, f1_ood {:.4} over {} runs", r.mean.accuracy, r.mean.f1_ood, r.runs),
    }
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let known: Vec<String> = (0..rng.random_range(1..=5)).map(|i| format!("c{i}")).collect();
        let mut pool = known.clone();
        pool.push(OOD_LABEL.into());
        let n = rng.random_range(1..=50);
        let mut draw = || -> Vec<String> { (0..n).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect() };
        let (pred, gold) = (draw(), draw());
        let m = confusion_and_f1(&pred, &gold, &known).unwrap();
        let o = common::confusion_oracle(&pred, &gold, &known);
        let diffs = [m.accuracy - o.accuracy, m.macro_f1 - o.macro_f1, m.f1_ood - o.f1_ood, m.f1_ind - o.f1_ind];
        let per_class = m.per_class.iter().zip(&o.per_class).map(|(s, f)| s.f1 - f);
        worst = diffs.into_iter().chain(per_class).fold(worst, |w, d| w.max(d.abs()));
    }
    Outcome { passed: worst <= 1e-12, detail: format!("200 lists, max deviation {worst:.2e}") }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (train, test) = (path("train.jsonl"), path("test.jsonl"));
    let synth = ["oodbound", "synth", "--classes", "6", "--dim", "16", "--per-class", "20", "--sigma", "0.05"];
    let mut args: Vec<String> = synth.iter().map(|s| s.to_string()).collect();
    args.extend(["--out-train".into(), train.clone(), "--out-test".into(), test.clone(), "--seed".into(), "5".into(), "--quiet".into()]);
    if oodbound::cli::run(&args) != 0 {
        return Outcome { passed: false, detail: "synth failed".into() };
    }
    let mut files = Vec::new();
    for attempt in 0..2 {
        let model = path(&format!("model{attempt}.json"));
        let report = path(&format!("report{attempt}.json"));
        let fit = ["oodbound", "fit", "--train", &train, "--out", &model, "--seed", "3", "--quiet"];
        let eval = [
            "oodbound", "eval", "--train", &train, "--test", &test, "--ratios", "0.5,0.75", "--runs", "3",
            "--report", &report, "--seed", "3", "--quiet",
        ];
        if oodbound::cli::run(fit) != 0 || oodbound::cli::run(eval) != 0 {
            return Outcome { passed: false, detail: "fit or eval failed".into() };
        }
        files.push((fs::read(&model).unwrap(), fs::read(&report).unwrap()));
    }
    let same_model = files[0].0 == files[1].0;
    let same_report = files[0].1 == files[1].1;
    Outcome {
        passed: same_model && same_report,
        detail: format!("model identical: {same_model}, report identical: {same_report}"),
    }
}

fn criterion_spot_values() -> Outcome {
    let (a, b, beta) = (1.0, 0.2, 4.0);
    let ind = vec![b; 7];
    let ood = vec![a; 11];
    let f0 = criterion_f(&ind, &ood, 0.0, beta).unwrap();
    let r_star = closed_form_radius(a, b, beta);
    let f_star = criterion_f(&ind, &ood, r_star, beta).unwrap();
    let e0 = (f0 - (a + beta * b)).abs();
    let er = (r_star - 0.36).abs();
    let ef = f_star.abs();
    Outcome {
        passed: e0 <= 1e-12 && er <= 1e-12 && ef <= 1e-12,
        detail: format!("F(0) = {f0}, r* = {r_star}, F(r*) = {f_star:.2e}"),
    }
}

fn main() -> ExitCode {
    type Check = (&'static str, Option<u64>, fn() -> Outcome);
    let checks: [Check; 6] = [
        ("radius-oracle equivalence", Some(5), radius_oracle),
        ("gradient verification", Some(10), gradients),
        ("synthetic end-to-end", Some(60), synthetic_end_to_end),
        ("metric oracle", None, metric_oracle),
        ("determinism", None, determinism),
        ("criterion spot values", None, criterion_spot_values),
    ];
    let mut failures = 0;
    for (name, limit, check) in checks {
        let out = timed(limit.map(Duration::from_secs), check);
        println!("{} {name}: {}", if out.passed { "PASS" } else { "FAIL" }, out.detail);
        failures += usize::from(!out.passed);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
