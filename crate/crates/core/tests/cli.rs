use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairset::manifest::{save_embeddings, EmbeddingTable};
use fairset::ood::{GaussianClassModel, OodModel};
use serde_json::Value;
use tempfile::TempDir;

fn fairset(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairset"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fairset(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failing(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = fairset(dir, args);
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    (out.status.code().unwrap(), err)
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn record(id: &str, source: &str, age: u32, gender: &str) -> String {
    format!(r#"{{"id":"{id}","source":"{source}","age":{age},"features":{{"gender":"{gender}"}}}}"#)
}

fn write_lines(path: PathBuf, lines: &[String]) -> PathBuf {
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn two_pools(dir: &Path) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for age in 20..23u32 {
        for i in 0..4 {
            a.push(record(&format!("a{age}m{i}"), "A", age, "m"));
            b.push(record(&format!("b{age}m{i}"), "B", age, "m"));
        }
        for i in 0..(age - 18) {
            a.push(record(&format!("a{age}f{i}"), "A", age, "f"));
            b.push(record(&format!("b{age}f{i}"), "B", age, "f"));
        }
    }
    write_lines(dir.join("a.jsonl"), &a);
    write_lines(dir.join("b.jsonl"), &b);
}

#[test]
fn curate_writes_manifest_audit_and_meta() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    two_pools(dir);
    let args = [
        "curate",
        "--pool",
        "a.jsonl",
        "b.jsonl",
        "--out",
        "cur.jsonl",
        "--feature-priority",
        "gender",
        "--seed",
        "5",
    ];
    ok(dir, &args);
    let audit = json(dir.join("cur.jsonl.audit.json"));
    assert_eq!(audit["meta"]["toolkit"], "fairset");
    assert_eq!(audit["meta"]["config"]["seed"], 5);
    assert_eq!(audit["data"]["feature"], "gender");
    let meta = json(dir.join("cur.jsonl.meta.json"));
    assert_eq!(meta["command"], "curate");

    // per age: each state gets the age's threshold, or all it has when short
    let lines = fs::read_to_string(dir.join("cur.jsonl")).unwrap();
    let recs: Vec<Value> = lines
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for t in &audit["data"]["thresholds"].as_array().unwrap()[..] {
        let age = t["age"].as_u64().unwrap();
        let threshold = t["threshold"].as_u64().unwrap() as usize;
        for (g, available) in [("m", 8), ("f", 2 * (age as usize - 18))] {
            let n = recs
                .iter()
                .filter(|r| r["age"] == age && r["features"]["gender"] == g)
                .count();
            assert_eq!(n, threshold.min(available), "age {age} state {g}");
        }
    }

    let first = fs::read(dir.join("cur.jsonl")).unwrap();
    let first_audit = fs::read(dir.join("cur.jsonl.audit.json")).unwrap();
    ok(dir, &args);
    assert_eq!(fs::read(dir.join("cur.jsonl")).unwrap(), first);
    assert_eq!(
        fs::read(dir.join("cur.jsonl.audit.json")).unwrap(),
        first_audit
    );
}

#[test]
fn inverted_quantiles_are_a_config_error() {
    let tmp = TempDir::new().unwrap();
    two_pools(tmp.path());
    let (code, err) = failing(
        tmp.path(),
        &[
            "curate", "--pool", "a.jsonl", "--out", "x.jsonl", "--q-low", "0.9", "--q-high", "0.2",
        ],
    );
    assert_eq!(code, 2);
    assert_eq!(err["error"]["kind"], "config");
    assert!(!tmp.path().join("x.jsonl").exists());
}

#[test]
fn data_and_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let (code, err) = failing(
        dir,
        &["curate", "--pool", "missing.jsonl", "--out", "x.jsonl"],
    );
    assert_eq!((code, err["error"]["kind"].as_str()), (3, Some("data")));

    write_lines(
        dir.join("bad.jsonl"),
        &[record("a", "s", 20, "m"), record("b", "s", 150, "f")],
    );
    let (code, err) = failing(dir, &["curate", "--pool", "bad.jsonl", "--out", "x.jsonl"]);
    assert_eq!(code, 3);
    assert!(err["error"]["message"].as_str().unwrap().contains("line 2"));

    let (code, _) = failing(dir, &["curate", "--bogus"]);
    assert_eq!(code, 2);
    let (code, _) = failing(
        dir,
        &[
            "--config",
            "nope.json",
            "evaluate",
            "--predictions",
            "p",
            "--out",
            "o",
        ],
    );
    assert_eq!(code, 2);
}

fn four_point_fixture(dir: &Path) {
    let rows = [
        ("p0", [0.0, 0.0]),
        ("p1", [2.0, 0.0]),
        ("p2", [0.0, 2.0]),
        ("p3", [2.0, 2.0]),
        ("q0", [10.0, 10.0]),
        ("q1", [12.0, 10.0]),
        ("q2", [10.0, 12.0]),
        ("q3", [12.0, 12.0]),
    ];
    let table = EmbeddingTable::from_rows(
        rows.iter().map(|(id, _)| id.to_string()).collect(),
        &rows.iter().map(|(_, v)| v.to_vec()).collect::<Vec<_>>(),
    )
    .unwrap();
    save_embeddings(&table, dir.join("emb.femb"), dir.join("emb.ids")).unwrap();
    let manifest: Vec<String> = rows
        .iter()
        .map(|(id, _)| record(id, "s", if id.starts_with('p') { 1 } else { 2 }, "m"))
        .collect();
    write_lines(dir.join("labels.jsonl"), &manifest);
}

#[test]
fn ood_fit_score_and_quantile() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    four_point_fixture(dir);
    ok(
        dir,
        &[
            "ood",
            "fit",
            "--embeddings",
            "emb.femb",
            "--ids",
            "emb.ids",
            "--labels-from",
            "labels.jsonl",
            "--model",
            "model.json",
            "--shrinkage",
            "0",
        ],
    );
    let model = json(dir.join("model.json"));
    assert_eq!(model["classes"][0]["mu"], serde_json::json!([1.0, 1.0]));
    assert_eq!(model["k"], 1);
    assert_eq!(model["meta"]["command"], "ood fit");
    let sigma: Vec<f64> =
        serde_json::from_value(model["classes"][0]["sigma_lower"].clone()).unwrap();
    assert!((sigma[0] - 1.0).abs() < 1e-5 && sigma[1] == 0.0 && (sigma[2] - 1.0).abs() < 1e-5);

    ok(
        dir,
        &[
            "ood",
            "score",
            "--model",
            "model.json",
            "--embeddings",
            "emb.femb",
            "--ids",
            "emb.ids",
            "--out",
            "s.csv",
        ],
    );
    let train: Vec<f64> = serde_json::from_value(model["train_llr"].clone()).unwrap();
    let scored = fairset::ood::load_scores(dir.join("s.csv")).unwrap();
    assert_eq!(scored.len(), train.len());
    for (s, t) in scored.iter().zip(&train) {
        assert!((s.llr - t).abs() < 1e-9);
    }
    let stdout = ok(
        dir,
        &[
            "ood",
            "score",
            "--model",
            "model.json",
            "--embeddings",
            "emb.femb",
            "--ids",
            "emb.ids",
        ],
    );
    assert_eq!(stdout, fs::read_to_string(dir.join("s.csv")).unwrap());

    let (code, _) = failing(
        dir,
        &[
            "ood",
            "fit",
            "--embeddings",
            "emb.femb",
            "--ids",
            "emb.ids",
            "--labels-from",
            "labels.jsonl",
            "--model",
            "m2.json",
            "--k",
            "2",
        ],
    );
    assert_eq!(code, 2);
}

fn model_with_train(dir: &Path, train: Vec<f64>) {
    let c = |id, m| GaussianClassModel::new(id, vec![m], vec![1.0], 2).unwrap();
    let model = OodModel::from_classes(vec![c(0, 0.0), c(1, 5.0)], 1, 0.0, train).unwrap();
    model.save(dir.join("train100.json"), None).unwrap();
}

#[test]
fn quantile_prints_nearest_rank() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    model_with_train(dir, (1..=100).map(f64::from).collect());
    assert_eq!(
        ok(
            dir,
            &["ood", "quantile", "--model", "train100.json", "--q", "0.05"]
        ),
        "5\n"
    );
    assert_eq!(
        ok(
            dir,
            &["ood", "quantile", "--model", "train100.json", "--q", "0"]
        ),
        "1\n"
    );
    assert_eq!(
        ok(
            dir,
            &["ood", "quantile", "--model", "train100.json", "--q", "1"]
        ),
        "100\n"
    );
    let (code, _) = failing(
        dir,
        &["ood", "quantile", "--model", "train100.json", "--q", "1.5"],
    );
    assert_eq!(code, 2);
}

#[test]
fn broken_covariance_is_a_numeric_error() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    model_with_train(dir, vec![1.0]);
    let text = fs::read_to_string(dir.join("train100.json")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["classes"][0]["sigma_lower"] = serde_json::json!([-1.0]);
    fs::write(dir.join("bad.json"), doc.to_string()).unwrap();
    let (code, err) = failing(
        dir,
        &["ood", "quantile", "--model", "bad.json", "--q", "0.5"],
    );
    assert_eq!((code, err["error"]["kind"].as_str()), (4, Some("numeric")));
}

/// Two classes by two states, ten records per cell, with images.
fn grid_fixture(dir: &Path) {
    fs::create_dir_all(dir.join("img")).unwrap();
    let mut lines = Vec::new();
    for age in [30u32, 40] {
        for g in ["f", "m"] {
            for i in 0..10 {
                let id = format!("{age}{g}{i}");
                let img = image::RgbImage::from_fn(4, 3, |x, y| {
                    image::Rgb([(x * 40) as u8, (y * 60) as u8, i * 20])
                });
                img.save(dir.join(format!("img/{id}.png"))).unwrap();
                lines.push(format!(
                    r#"{{"id":"{id}","source":"S","age":{age},"features":{{"gender":"{g}"}},"path":"img/{id}.png"}}"#
                ));
            }
        }
    }
    write_lines(dir.join("grid.jsonl"), &lines);
}

#[test]
fn augment_plan_filter_sample() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    grid_fixture(dir);
    ok(
        dir,
        &[
            "augment",
            "plan",
            "--manifest",
            "grid.jsonl",
            "--out",
            "plan.jsonl",
            "--feature",
            "gender",
        ],
    );
    let ratios = json(dir.join("plan.jsonl.ratios.json"));
    for cell in ratios["data"]["ratios"]["cells"].as_array().unwrap() {
        assert_eq!(cell["ratio"], 1);
    }
    let plan = fs::read_to_string(dir.join("plan.jsonl")).unwrap();
    assert_eq!(plan.lines().count(), 40);

    ok(
        dir,
        &[
            "augment",
            "apply",
            "--plan",
            "plan.jsonl",
            "--manifest",
            "grid.jsonl",
            "--out-dir",
            "aug",
        ],
    );
    assert_eq!(
        fs::read_dir(dir.join("aug"))
            .unwrap()
            .filter(|e| e
                .as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png"))
            .count(),
        40
    );

    // scores 1..=40 against a training distribution of 1..=100
    model_with_train(dir, (1..=100).map(f64::from).collect());
    let mut scores = String::from("id,llr,predicted_class\n");
    for (i, l) in plan.lines().enumerate() {
        let spec: Value = serde_json::from_str(l).unwrap();
        scores.push_str(&format!(
            "{},{},0\n",
            spec["aug_id"].as_str().unwrap(),
            i + 1
        ));
    }
    fs::write(dir.join("scores.csv"), scores).unwrap();
    ok(
        dir,
        &[
            "augment",
            "filter",
            "--model",
            "train100.json",
            "--scores",
            "scores.csv",
            "--range",
            "0.00:1.00",
            "--out",
            "all.csv",
        ],
    );
    let all = fs::read_to_string(dir.join("all.csv")).unwrap();
    assert_eq!(all.lines().filter(|l| l.ends_with(",true")).count(), 40);
    let cutoffs = json(dir.join("all.csv.cutoffs.json"));
    assert_eq!(cutoffs["data"]["cutoffs"][0]["lo"], "-inf");
    assert_eq!(cutoffs["data"]["cutoffs"][0]["hi"], "inf");

    ok(
        dir,
        &[
            "augment",
            "filter",
            "--model",
            "train100.json",
            "--scores",
            "scores.csv",
            "--range",
            "0.05:1.00",
            "--out",
            "cut.csv",
        ],
    );
    let cut = fs::read_to_string(dir.join("cut.csv")).unwrap();
    assert_eq!(cut.lines().filter(|l| l.ends_with(",true")).count(), 36);

    ok(
        dir,
        &[
            "augment",
            "sample",
            "--plan",
            "plan.jsonl",
            "--filter",
            "all.csv",
            "--manifest",
            "grid.jsonl",
            "--budget",
            "8",
            "--feature",
            "gender",
            "--image-prefix",
            "aug/",
            "--out",
            "final.jsonl",
        ],
    );
    let fin = fs::read_to_string(dir.join("final.jsonl")).unwrap();
    let recs: Vec<Value> = fin
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 8);
    for age in [30, 40] {
        for g in ["f", "m"] {
            let n = recs
                .iter()
                .filter(|r| r["age"] == age && r["features"]["gender"] == g)
                .count();
            assert_eq!(n, 2);
        }
    }
    let path = recs[0]["path"].as_str().unwrap();
    assert!(path.starts_with("aug/") && dir.join(path).exists());
}

#[test]
fn evaluate_and_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("pred.csv"),
        "id,actual_age,predicted_age,gender\n1,20,20.0,m\n2,20,21.0,f\n3,30,30.0,m\n4,30,32.0,f\n",
    )
    .unwrap();
    let stdout = ok(
        dir,
        &[
            "evaluate",
            "--predictions",
            "pred.csv",
            "--features",
            "gender",
            "--out",
            "eval.json",
        ],
    );
    assert_eq!(stdout, "mae 0.75\nfairness gender 0.5 (1 of 2 ages)\n");
    let eval = json(dir.join("eval.json"));
    assert_eq!(eval["data"]["mae"], 0.75);
    assert_eq!(eval["data"]["fairness"][0]["score"], 0.5);
    assert_eq!(eval["meta"]["config"]["metrics"]["t"], 3.0);
    assert_eq!(
        fs::read_to_string(dir.join("eval.gender.csv")).unwrap(),
        "age,mean_f,mean_m,max_distance,fair\n20,21,20,1,1\n30,32,30,2,0\n"
    );
    assert!(dir.join("eval.gender.csv.meta.json").exists());

    let (code, _) = failing(
        dir,
        &[
            "evaluate",
            "--predictions",
            "pred.csv",
            "--features",
            "gender",
            "--t",
            "0",
            "--out",
            "e.json",
        ],
    );
    assert_eq!(code, 2);

    grid_fixture(dir);
    ok(
        dir,
        &[
            "report",
            "--manifest",
            "grid.jsonl",
            "--feature",
            "gender",
            "--out-svg",
            "ages.svg",
        ],
    );
    let svg = fs::read_to_string(dir.join("ages.svg")).unwrap();
    assert_eq!(svg.matches(r#"<g class="bar""#).count(), 2);
    assert!(svg.contains("<metadata>"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("pred.csv"),
        "id,actual_age,predicted_age,gender\n1,20,20.0,m\n2,20,21.0,f\n3,30,30.0,m\n4,30,32.0,f\n",
    )
    .unwrap();
    fs::write(
        dir.join("cfg.json"),
        r#"{"seed": 9, "metrics": {"t": 10, "features": ["gender"]}}"#,
    )
    .unwrap();
    let stdout = ok(
        dir,
        &[
            "--config",
            "cfg.json",
            "evaluate",
            "--predictions",
            "pred.csv",
            "--out",
            "e.json",
        ],
    );
    assert!(stdout.contains("fairness gender 1 "));
    let stdout = ok(
        dir,
        &[
            "--config",
            "cfg.json",
            "evaluate",
            "--predictions",
            "pred.csv",
            "--t",
            "3",
            "--out",
            "e.json",
        ],
    );
    assert!(stdout.contains("fairness gender 0.5 "));
    assert_eq!(json(dir.join("e.json"))["meta"]["config"]["seed"], 9);
}
