use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oddgrid_core::evalkit::{read_predictions, PredictionLine};
use oddgrid_core::gridsynth::{read_metadata, read_sequences, read_summary};
use serde_json::Value;

fn oddgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oddgrid"))
        .current_dir(dir)
        .env_remove("ODDGRID_DATA_DIR")
        .env_remove("ODDGRID_API_KEY_VAR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = oddgrid(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn status(dir: &Path, args: &[&str]) -> i32 {
    oddgrid(dir, args).status.code().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn curated_icons(dir: &Path) {
    ok(
        dir,
        &[
            "synth-icons",
            "--out-dir",
            "svg",
            "--count",
            "300",
            "--seed",
            "4",
            "--categories-out",
            "cats.csv",
        ],
    );
    ok(
        dir,
        &[
            "ingest",
            "--dir",
            "svg",
            "--source",
            "testval",
            "--categories",
            "cats.csv",
            "--out",
            "icons/testval.jsonl",
        ],
    );
}

#[test]
fn usage_errors_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let before = listing(d);
    for args in [
        vec![
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--out-dir",
            "out",
            "--bogus",
        ],
        vec!["generate", "--split", "test", "--seed", "7", "--out-dir", "out"],
        vec!["generate", "--split", "nope", "--seed", "7", "--out-dir", "out"],
        vec![
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--out-dir",
            "out",
            "--resolution-override",
            "16",
        ],
        vec![
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--out-dir",
            "out",
            "--types",
            "Color,Colour",
        ],
        vec![
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--out-dir",
            "out",
            "--count",
            "0",
        ],
        vec![
            "ingest",
            "--dir",
            "missing",
            "--source",
            "train",
            "--out",
            "out/m.jsonl",
        ],
        vec!["split", "--train-manifest", "missing.jsonl", "--out", "out/plan.csv"],
        vec!["reward-score", "--input", "missing.jsonl", "--output", "out.jsonl"],
        vec!["reward-score", "--lambda", "-1", "--output", "out.jsonl"],
        vec!["evaluate", "--metadata", "m.jsonl", "--predictions", "p.jsonl"],
        vec![
            "run",
            "--endpoint",
            "http://x",
            "--model",
            "m",
            "--metadata",
            "m.jsonl",
            "--out",
            "p.jsonl",
        ],
        vec!["report", "--metadata", "m.jsonl"],
        vec!["frobnicate"],
        vec![],
    ] {
        assert_eq!(status(d, &args), 2, "{args:?}");
        assert_eq!(listing(d), before, "{args:?} wrote files");
    }
    assert_eq!(status(d, &["--help"]), 0);
}

#[test]
fn curated_ingest_needs_categories() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-icons", "--out-dir", "svg", "--count", "6"]);
    assert_eq!(
        status(
            d,
            &["ingest", "--dir", "svg", "--source", "testval", "--out", "m.jsonl"]
        ),
        2
    );
    assert!(!d.join("m.jsonl").exists());
    // A curated table with too few icons per category is an operational failure.
    fs::write(d.join("cats.csv"), "id,category\n").unwrap();
    assert_eq!(
        status(
            d,
            &[
                "ingest",
                "--dir",
                "svg",
                "--source",
                "testval",
                "--categories",
                "cats.csv",
                "--out",
                "m.jsonl"
            ]
        ),
        1
    );
}

#[test]
fn generate_evaluate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    curated_icons(d);
    let out = ok(
        d,
        &[
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--count",
            "70",
            "--icons",
            "icons/testval.jsonl",
            "--out-dir",
            "test",
        ],
    );
    assert!(out.contains("70 test records"));
    let records = read_metadata(&d.join("test/metadata.jsonl")).unwrap();
    assert_eq!(records.len(), 70);
    assert_eq!(fs::read_dir(d.join("test/images")).unwrap().count(), 70);
    let summary = read_summary(&d.join("test/summary.json")).unwrap();
    assert_eq!(summary.master_seed, 7);
    assert_eq!(summary.type_counts.values().copied().collect::<Vec<_>>(), vec![10; 7]);

    // Same arguments reproduce identical bytes.
    ok(
        d,
        &[
            "generate",
            "--split",
            "test",
            "--seed",
            "7",
            "--count",
            "70",
            "--icons",
            "icons/testval.jsonl",
            "--out-dir",
            "again",
        ],
    );
    assert_eq!(
        fs::read(d.join("test/metadata.jsonl")).unwrap(),
        fs::read(d.join("again/metadata.jsonl")).unwrap()
    );
    for r in records.iter().take(5) {
        assert_eq!(
            fs::read(d.join("test").join(&r.image_path)).unwrap(),
            fs::read(d.join("again").join(&r.image_path)).unwrap()
        );
    }

    // Type subsets and resolution override; the environment supplies the data root.
    let out = Command::new(env!("CARGO_BIN_EXE_oddgrid"))
        .current_dir(d)
        .env("ODDGRID_DATA_DIR", ".")
        .args([
            "generate",
            "--split",
            "val",
            "--seed",
            "7",
            "--count",
            "6",
            "--types",
            "Color,4-Type",
            "--resolution-override",
            "50",
            "--labeled",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let val = read_metadata(&d.join("val/metadata.jsonl")).unwrap();
    assert!(val.iter().all(|r| r.block_px == 50 && r.labeled));
    assert_eq!(val.iter().filter(|r| r.types.len() == 1).count(), 3);
    assert_eq!(val.iter().filter(|r| r.types.len() == 4).count(), 3);

    // Half right, half wrong.
    let preds: Vec<PredictionLine> = records
        .iter()
        .enumerate()
        .map(|(i, r)| PredictionLine {
            id: r.id.clone(),
            raw_text: if i % 2 == 0 {
                format!("\\boxed{{Row {}, Column {}}}", r.odd_row, r.odd_col)
            } else {
                format!("\\boxed{{Row {}, Column {}}}", r.rows + 1, 1)
            },
        })
        .collect();
    oddgrid_core::evalkit::write_predictions(&d.join("half.jsonl"), &preds).unwrap();
    let table = ok(
        d,
        &[
            "evaluate",
            "--metadata",
            "test/metadata.jsonl",
            "--predictions",
            "half.jsonl",
            "--json-out",
            "half.json",
        ],
    );
    assert!(table.contains("Total") && table.contains("50.00"), "{table}");
    let json: Value = serde_json::from_str(&fs::read_to_string(d.join("half.json")).unwrap()).unwrap();
    assert_eq!(json["total"], 0.5);
    assert_eq!(json["n"], 70);

    let table = ok(
        d,
        &[
            "report",
            "--metadata",
            "test/metadata.jsonl",
            "--predictions",
            "half=half.jsonl",
            "--json-out",
            "r.json",
        ],
    );
    let header = table.lines().next().unwrap();
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(
        cols,
        ["Color", "Size", "Rotation", "Position", "2-Type", "3-Type", "4-Type", "Total"]
    );
    assert!(table.lines().nth(1).unwrap().starts_with("half"));
    let first = fs::read(d.join("r.json")).unwrap();
    ok(
        d,
        &[
            "report",
            "--metadata",
            "test/metadata.jsonl",
            "--predictions",
            "half=half.jsonl",
            "--json-out",
            "r.json",
        ],
    );
    assert_eq!(fs::read(d.join("r.json")).unwrap(), first);
}

#[test]
fn sequences_generate_and_score() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    curated_icons(d);
    ok(
        d,
        &[
            "generate",
            "--split",
            "test",
            "--seed",
            "2",
            "--sequences",
            "--count",
            "6",
            "--icons",
            "icons/testval.jsonl",
            "--out-dir",
            "seq",
        ],
    );
    let seqs = read_sequences(&d.join("seq/sequences.jsonl")).unwrap();
    assert_eq!(seqs.len(), 6);
    for s in &seqs {
        for k in 1..=s.n {
            assert!(d.join("seq/images").join(format!("{}_{k}.png", s.id)).is_file());
        }
    }
    let preds: Vec<PredictionLine> = seqs
        .iter()
        .map(|s| PredictionLine {
            id: s.id.clone(),
            raw_text: format!(
                "\\boxed{{{}}}",
                s.odd_indices
                    .iter()
                    .map(|k| format!("image{k}"))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        })
        .collect();
    oddgrid_core::evalkit::write_predictions(&d.join("p.jsonl"), &preds).unwrap();
    let out = ok(
        d,
        &[
            "evaluate",
            "--sequences",
            "--metadata",
            "seq/sequences.jsonl",
            "--predictions",
            "p.jsonl",
        ],
    );
    assert!(out.starts_with("EM 100.00  F1 100.00"), "{out}");
}

#[test]
fn curriculum_split_and_reward_scoring() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &["synth-icons", "--out-dir", "train_svg", "--count", "40", "--seed", "8"],
    );
    ok(
        d,
        &[
            "ingest",
            "--dir",
            "train_svg",
            "--source",
            "train",
            "--out",
            "icons/train.jsonl",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--split",
            "train",
            "--seed",
            "3",
            "--count",
            "60",
            "--icons",
            "icons/train.jsonl",
            "--out-dir",
            "train",
        ],
    );
    let out = ok(
        d,
        &[
            "split",
            "--train-manifest",
            "train/metadata.jsonl",
            "--out",
            "plan.csv",
            "--bucket-sizes",
            "30,20,10",
            "--stages-dir",
            "stages",
            "--seed",
            "1",
        ],
    );
    assert!(out.contains("easy 30, medium 20, hard 10"), "{out}");
    let plan = fs::read_to_string(d.join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 61);
    assert_eq!(
        fs::read_to_string(d.join("stages/stage1.txt")).unwrap().lines().count(),
        30
    );
    assert_eq!(
        fs::read_to_string(d.join("stages/stage2.txt")).unwrap().lines().count(),
        50
    );
    assert_eq!(
        fs::read_to_string(d.join("stages/stage3.txt")).unwrap().lines().count(),
        60
    );
    // The default sizes need exactly 30,000 records.
    assert_eq!(
        status(
            d,
            &["split", "--train-manifest", "train/metadata.jsonl", "--out", "p2.csv"]
        ),
        1
    );

    fs::write(
        d.join("batch.jsonl"),
        concat!(
            r#"{"id":"a","raw_text":"\\boxed{Row 2, Column 3}","gt_row":2,"gt_col":3,"rows":9,"cols":9}"#,
            "\n",
            r#"{"id":"b","raw_text":"\\boxed{Row 2, Column 4}","gt_row":2,"gt_col":3,"rows":9,"cols":9}"#,
            "\n",
            r#"{"id":"c","raw_text":"no box","gt_row":2,"gt_col":3,"rows":5,"cols":5}"#,
            "\n"
        ),
    )
    .unwrap();
    ok(
        d,
        &["reward-score", "--input", "batch.jsonl", "--output", "scored.jsonl"],
    );
    let lines: Vec<Value> = fs::read_to_string(d.join("scored.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["r_d"], 1.0);
    assert!((lines[1]["r_d"].as_f64().unwrap() - 0.6518167844230893).abs() < 1e-12);
    assert!((lines[1]["r_overall"].as_f64().unwrap() - 0.7214534275384714).abs() < 1e-12);
    assert_eq!(lines[2]["r_overall"], 0.0);
    assert_eq!(lines[1]["binary"], 0.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn run_against_a_stub_endpoint() {
    use oddgrid_modelgw::stub::{StubServer, StubState};
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_path_buf();
    curated_icons(&d);
    ok(
        &d,
        &[
            "generate",
            "--split",
            "test",
            "--seed",
            "5",
            "--count",
            "21",
            "--icons",
            "icons/testval.jsonl",
            "--out-dir",
            "test",
        ],
    );
    let records = read_metadata(&d.join("test/metadata.jsonl")).unwrap();
    let server = StubServer::start(StubState::new()).await.unwrap();
    server.state.require_token("tok");
    for r in &records {
        let png = fs::read(d.join("test").join(&r.image_path)).unwrap();
        server
            .state
            .answer_for_image(&png, format!("\\boxed{{Row {}, Column {}}}", r.odd_row, r.odd_col));
    }
    let base = server.base_url();
    let dd = d.clone();
    let out = tokio::task::spawn_blocking(move || {
        Command::new(env!("CARGO_BIN_EXE_oddgrid"))
            .current_dir(&dd)
            .env("ODDGRID_API_KEY_VAR", "STUB_TOKEN")
            .env("STUB_TOKEN", "tok")
            .args([
                "run",
                "--endpoint",
                &base,
                "--model",
                "stub",
                "--metadata",
                "test/metadata.jsonl",
                "--out",
                "preds.jsonl",
                "--cache-dir",
                "cache",
                "--parallelism",
                "4",
            ])
            .output()
            .unwrap()
    })
    .await
    .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = read_predictions(&d.join("preds.jsonl")).unwrap();
    assert_eq!(preds.len(), 21);
    assert_eq!(fs::read_to_string(d.join("preds.jsonl.failures.jsonl")).unwrap(), "");
    let table = ok(
        &d,
        &[
            "evaluate",
            "--metadata",
            "test/metadata.jsonl",
            "--predictions",
            "preds.jsonl",
        ],
    );
    assert!(table.lines().nth(1).unwrap().trim_end().ends_with("100.00"), "{table}");
    assert!(server.state.max_in_flight() <= 4);

    // Without the token variable the run refuses before any request.
    let before = server.state.requests();
    let base = server.base_url();
    let dd = d.clone();
    let code = tokio::task::spawn_blocking(move || {
        Command::new(env!("CARGO_BIN_EXE_oddgrid"))
            .current_dir(&dd)
            .env("ODDGRID_API_KEY_VAR", "UNSET_STUB_TOKEN")
            .args([
                "run",
                "--endpoint",
                &base,
                "--model",
                "stub",
                "--metadata",
                "test/metadata.jsonl",
                "--out",
                "other.jsonl",
            ])
            .output()
            .unwrap()
    })
    .await
    .unwrap();
    assert_eq!(code.status.code(), Some(2));
    assert_eq!(server.state.requests(), before);
    assert!(!d.join("other.jsonl").exists());
}
