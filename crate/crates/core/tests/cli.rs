use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodbound::data::{load_dataset, Format};
use oodbound::detector::{load_model, Prediction};

fn oodbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodbound")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    oodbound(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    train: PathBuf,
    test: PathBuf,
}

fn synth(classes: usize, seed: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    let args = [
        "synth", "--classes", &classes.to_string(), "--dim", "8", "--per-class", "10", "--sigma", "0.05",
        "--out-train", p(&train), "--out-test", p(&test), "--seed", seed, "--quiet",
    ];
    assert_eq!(code(&args), 0);
    Fixture { dir, train, test }
}

#[test]
fn synth_writes_balanced_files_deterministically() {
    let a = synth(4, "3");
    let b = synth(4, "3");
    let train = load_dataset(&a.train, Format::Jsonl).unwrap();
    assert_eq!(train.len(), 40);
    assert_eq!(train.class_counts(), vec![10; 4]);
    assert_eq!(train.dim(), 8);
    assert_eq!(fs::read(&a.train).unwrap(), fs::read(&b.train).unwrap());
    assert_eq!(fs::read(&a.test).unwrap(), fs::read(&b.test).unwrap());
    let c = synth(4, "4");
    assert_ne!(fs::read(&a.train).unwrap(), fs::read(&c.train).unwrap());
}

#[test]
fn fit_then_predict_on_centroid_probes() {
    let f = synth(3, "1");
    let model_path = f.dir.path().join("model.json");
    assert_eq!(code(&["fit", "--train", p(&f.train), "--out", p(&model_path), "--epochs", "10", "--quiet"]), 0);
    let model = load_model(&model_path).unwrap();
    assert_eq!(model.labels(), vec!["class_0", "class_1", "class_2"]);

    let test = load_dataset(&f.test, Format::Jsonl).unwrap();
    let preds_path = f.dir.path().join("preds.jsonl");
    assert_eq!(code(&["predict", "--model", p(&model_path), "--input", p(&f.test), "--out", p(&preds_path)]), 0);
    let preds: Vec<Prediction> =
        fs::read_to_string(&preds_path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(preds.len(), test.len());
    let correct = preds.iter().zip(test.items()).filter(|(p, t)| p.label == t.label).count();
    assert!(correct * 10 >= test.len() * 9, "{correct}/{}", test.len());
}

#[test]
fn usage_and_data_errors() {
    let f = synth(3, "2");
    let out = f.dir.path().join("m.json");
    assert_eq!(code(&["fit", "--out", p(&out)]), 1);
    assert_eq!(code(&["fit", "--train", p(&f.train), "--out", p(&out), "--epochs", "0"]), 1);
    assert_eq!(code(&["fit", "--train", "/nonexistent/train.jsonl", "--out", p(&out)]), 2);

    let one_class = f.dir.path().join("one.jsonl");
    fs::write(&one_class, "{\"label\": \"a\", \"vector\": [1.0, 0.0]}\n{\"label\": \"a\", \"vector\": [0.9, 0.1]}\n").unwrap();
    assert_eq!(code(&["fit", "--train", p(&one_class), "--out", p(&out)]), 2);
    assert!(!out.exists());

    let bad = f.dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"label\": \"a\", \"vector\": [1.0, 0.0]}\n{\"label\": \"b\", \"vector\": [1.0]}\n").unwrap();
    let output = oodbound(&["fit", "--train", p(&bad), "--out", p(&out)]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));
    assert!(!out.exists());
}

#[test]
fn predict_edge_cases() {
    let f = synth(3, "5");
    let model_path = f.dir.path().join("model.json");
    assert_eq!(code(&["fit", "--train", p(&f.train), "--out", p(&model_path), "--epochs", "2", "--quiet"]), 0);

    let empty = f.dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = f.dir.path().join("out.jsonl");
    assert_eq!(code(&["predict", "--model", p(&model_path), "--input", p(&empty), "--out", p(&out)]), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), "");

    let wrong_dim = f.dir.path().join("wrong.jsonl");
    fs::write(&wrong_dim, "{\"vector\": [1.0, 2.0]}\n").unwrap();
    let out2 = f.dir.path().join("out2.jsonl");
    assert_eq!(code(&["predict", "--model", p(&model_path), "--input", p(&wrong_dim), "--out", p(&out2)]), 2);
    assert!(!out2.exists());

    let broken = f.dir.path().join("broken.json");
    fs::write(&broken, "{\"version\": \"oodbound/1\"").unwrap();
    assert_eq!(code(&["predict", "--model", p(&broken), "--input", p(&f.test), "--out", p(&out2)]), 2);
}

#[test]
fn eval_reports() {
    let f = synth(4, "7");
    let report = f.dir.path().join("report.json");
    let args = |path: &Path| {
        vec![
            "eval".to_string(), "--train".into(), p(&f.train).into(), "--test".into(), p(&f.test).into(),
            "--ratios".into(), "0.5,0.75".into(), "--runs".into(), "2".into(), "--epochs".into(), "3".into(),
            "--report".into(), p(path).into(), "--seed".into(), "9".into(), "--quiet".into(),
        ]
    };
    let run = |path: &Path| {
        let a = args(path);
        code(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_eq!(run(&report), 0);
    let first = fs::read(&report).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(value["results"].as_array().unwrap().len(), 2);
    assert!(value["results"][0]["std"]["accuracy"].is_number());
    assert_eq!(run(&report), 0);
    assert_eq!(fs::read(&report).unwrap(), first);

    let md = f.dir.path().join("report.md");
    assert_eq!(run(&md), 0);
    assert_eq!(fs::read_to_string(&md).unwrap().lines().count(), 4);

    let two = synth(2, "1");
    let r2 = two.dir.path().join("r.json");
    let c = code(&[
        "eval", "--train", p(&two.train), "--test", p(&two.test), "--ratios", "0.25", "--runs", "1", "--report", p(&r2),
    ]);
    assert_eq!(c, 2);
    assert!(!r2.exists());
    assert_eq!(code(&["eval", "--train", p(&two.train), "--test", p(&two.test), "--ratios", "1.5", "--report", p(&r2)]), 1);
}

#[test]
fn gradcheck_exit_codes() {
    assert_eq!(code(&["gradcheck", "--quiet"]), 0);
    assert_eq!(code(&["gradcheck", "--corrupt-gradient", "--quiet"]), 3);
    assert_eq!(code(&["gradcheck", "--trials", "0"]), 1);
}
