use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use btn_core::architecture::{save_weights, WeightContainer};
use btn_core::tensor::max_abs_rel_diff;
use btn_core::{load_tensor, save_tensor, Model, ModelSpec, Rng, Tensor};
use serde_json::Value;

fn btn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btn"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = btn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    btn(args).status.code().unwrap()
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(format!("{name}.schema.json"))
}

fn json(args: &[&str], schema: &str) -> Value {
    let mut full = args.to_vec();
    full.extend(["--format", "json"]);
    let v: Value = serde_json::from_str(&ok(&full)).unwrap();
    let s: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path(schema)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&s).unwrap();
    let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
    v
}

/// Data rows of CSV output, header comments dropped.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn summarize_matches_schema_and_is_deterministic() {
    let v = json(
        &["summarize", "--alpha", "1.0", "--res", "224"],
        "summarize",
    );
    let madds = v["totals"]["madds"].as_u64().unwrap();
    assert!((madds as f64 / 300e6 - 1.0).abs() < 0.03);
    let a = ok(&["summarize", "--format", "csv"]);
    let b = ok(&["summarize", "--format", "csv"]);
    assert_eq!(a, b);
    assert!(!a.contains('\r'));
    assert!(a.starts_with("# command=summarize\n"));
    let rows = csv_rows(&a);
    assert_eq!(rows.last().unwrap()[0], "total");
    assert_eq!(rows.last().unwrap()[4], madds.to_string());
}

#[test]
fn usage_errors_exit_two() {
    let out = btn(&["summarize", "--alpha", "0", "--res", "224"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert_eq!(code(&["summarize", "--res", "0"]), 2);
    assert_eq!(code(&["summarize", "--bogus"]), 2);
    assert_eq!(code(&["memory-plan", "--act-bits", "8"]), 2);
    assert_eq!(code(&["theory", "collapse", "--n", "4", "--m", "3"]), 2);
    assert_eq!(code(&["theory", "spiral", "--dims", "1,2"]), 2);
    assert_eq!(code(&["infer", "--res", "32"]), 2);
}

#[test]
fn memory_plan_rows_and_options() {
    let v = json(
        &["memory-plan", "--alpha", "1.0", "--res", "224"],
        "memory-plan",
    );
    assert_eq!(v["max_row_bytes"], 200_704);
    let rows16 = v["rows"].as_array().unwrap().clone();
    let v32 = json(&["memory-plan", "--act-bits", "32"], "memory-plan");
    for (a, b) in rows16.iter().zip(v32["rows"].as_array().unwrap()) {
        if let Some(x) = a["bytes"].as_u64() {
            assert_eq!(b["bytes"].as_u64().unwrap(), 2 * x);
        }
    }
    let first = |split: &str| {
        json(&["memory-plan", "--split", split], "memory-plan")["blocks"][0]["peak_bytes"]
            .as_u64()
            .unwrap()
    };
    assert!(first("5") < first("1"));

    let no_trick = json(&["memory-plan", "--no-first-layer-trick"], "memory-plan");
    assert!(no_trick["max_row_bytes"].as_u64().unwrap() > 200_704);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    ok(&["memory-plan", "--graph-out", path.to_str().unwrap()]);
    let lines: Vec<Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.iter().filter(|l| l["kind"] == "op").count(), 21);
    assert!(lines.iter().any(|l| l["kind"] == "tensor"));
}

#[test]
fn infer_is_stable_and_split_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let base = [
        "infer",
        "--random-weights",
        "--seed",
        "1",
        "--input-seed",
        "2",
        "--alpha",
        "0.5",
        "--res",
        "96",
    ];
    let run = |extra: &[&str], file: &str| {
        let mut args = base.to_vec();
        let o = out(file);
        args.extend(["--output", &o]);
        args.extend(extra);
        let text = ok(&[&args[..], &["--format", "csv"]].concat());
        (csv_rows(&text), load_tensor(&o).unwrap())
    };
    let (top_a, logits_a) = run(&[], "a.bten");
    let (top_b, logits_b) = run(&[], "b.bten");
    assert_eq!(top_a, top_b);
    assert_eq!(logits_a, logits_b);
    assert_eq!(logits_a.shape().dims(), [1, 1, 1, 1000]);
    let (_, split) = run(&["--split", "4"], "c.bten");
    assert!(max_abs_rel_diff(&logits_a, &split).unwrap() <= 1e-5);
    let (_, first) = run(&["--split", "4", "--first-block-only"], "d.bten");
    assert!(max_abs_rel_diff(&logits_a, &first).unwrap() <= 1e-5);

    let o = out("e.bten");
    let v = json(&[&base[..], &["--output", &o]].concat(), "infer");
    assert_eq!(v["top5"].as_array().unwrap().len(), 5);
}

#[test]
fn infer_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let small = Tensor::random_gaussian([1, 32, 32, 3], &mut Rng::new(1), 0.0, 1.0).unwrap();
    save_tensor(p("x32.bten"), &small).unwrap();
    let args = [
        "infer",
        "--random-weights",
        "--alpha",
        "0.35",
        "--res",
        "64",
        "--output",
    ];
    assert_eq!(
        code(&[&args[..], &[&p("o.bten"), "--input", &p("x32.bten")]].concat()),
        2
    );

    std::fs::write(p("junk.bten"), b"not a tensor").unwrap();
    assert_eq!(
        code(&[&args[..], &[&p("o.bten"), "--input", &p("junk.bten")]].concat()),
        3
    );

    let spec = ModelSpec::mobilenet_v2(0.35, 32).with_classes(10);
    save_weights(&Model::random(&spec, 3).unwrap(), p("w.bwgt")).unwrap();
    let w = [
        "infer",
        "--weights",
        &p("w.bwgt"),
        "--alpha",
        "0.35",
        "--res",
        "32",
        "--classes",
    ];
    ok(&[&w[..], &["10", "--output", &p("ok.bten")]].concat());
    assert_eq!(
        code(&[&w[..], &["11", "--output", &p("o.bten")]].concat()),
        3
    );

    let mut bytes = Vec::new();
    WeightContainer::load(p("w.bwgt"))
        .unwrap()
        .write(&mut bytes)
        .unwrap();
    bytes.truncate(bytes.len() - 4);
    std::fs::write(p("short.bwgt"), &bytes).unwrap();
    let s = [
        "infer",
        "--weights",
        &p("short.bwgt"),
        "--alpha",
        "0.35",
        "--res",
        "32",
        "--classes",
        "10",
    ];
    assert_eq!(code(&[&s[..], &["--output", &p("o.bten")]].concat()), 3);
}

#[test]
fn theory_commands() {
    let v = json(
        &[
            "theory", "collapse", "--n", "2", "--m", "4", "--trials", "100000", "--seed", "3",
        ],
        "theory-collapse",
    );
    assert!((v["preserved_fraction"].as_f64().unwrap() - 0.6875).abs() <= 0.01);
    assert_eq!(v["seed"], 3);

    let csv = ok(&[
        "theory", "spiral", "--dims", "2,30", "--seed", "9", "--out", "csv",
    ]);
    assert!(csv.contains("# seed=9\n"));
    let rows = csv_rows(&csv);
    let err = |i: usize| rows[i][1].parse::<f64>().unwrap();
    assert!(err(0) >= 10.0 * err(1));
    json(
        &["theory", "spiral", "--dims", "2,3,15,30"],
        "theory-spiral",
    );

    let v = json(
        &[
            "theory",
            "activations",
            "--alpha",
            "0.35",
            "--res",
            "64",
            "--batch",
            "4",
            "--classes",
            "10",
        ],
        "theory-activations",
    );
    assert_eq!(v["layers"].as_array().unwrap().len(), 35);
    let v = json(
        &[
            "theory",
            "activations",
            "--alpha",
            "0.35",
            "--res",
            "32",
            "--batch",
            "2",
            "--aggregation",
            "per-feature-map",
        ],
        "theory-activations",
    );
    assert_eq!(v["aggregation"], "per_feature_map");
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_btn"))
            .env("BTN_THREADS", threads)
            .args([
                "theory",
                "activations",
                "--alpha",
                "0.5",
                "--res",
                "48",
                "--batch",
                "3",
                "--format",
                "csv",
            ])
            .output()
            .unwrap();
        (out.status.code(), out.stdout)
    };
    let (c1, one) = run("1");
    let (c3, three) = run("3");
    assert_eq!((c1, c3), (Some(0), Some(0)));
    assert_eq!(one, three);
    assert_eq!(run("0").0, Some(2));
    assert_eq!(run("many").0, Some(2));
}
