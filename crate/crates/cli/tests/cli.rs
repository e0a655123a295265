use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tokensearch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokensearch"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn m0_dataset(dir: &Path) {
    fs::write(
        dir.join("m0.jsonl"),
        "{\"id\":\"1\",\"source\":[0,1]}\n{\"id\":\"2\",\"source\":[1]}\n{\"id\":\"3\",\"source\":[]}\n{\"id\":\"4\",\"source\":[0]}\n",
    )
    .unwrap();
    fs::write(
        dir.join("m0.json"),
        r#"{"model":{"seed":0,"vocab_size":3,"max_len":3,"context_order":0,"fixed_prior":[0.5,0.3,0.2]},
           "metric":{"kind":"occupancy","target":0,"horizon":3},
           "algorithms":[{"algorithm":"greedy"},{"algorithm":"beam","theta":1.0}],
           "budgets":[8],"seed":1}"#,
    )
    .unwrap();
}

#[test]
fn sweep_from_config_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    m0_dataset(dir.path());
    let out = tokensearch(
        &[
            "sweep",
            "--dataset",
            "m0.jsonl",
            "--config",
            "m0.json",
            "--output",
            "r.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let aggregates = report["aggregates"].as_array().unwrap();
    assert_eq!(aggregates.len(), 2);
    for agg in aggregates {
        assert_eq!(agg["mean_score"].as_f64(), Some(1.0));
    }
    assert_eq!(aggregates[0]["mean_evaluations_per_token"].as_f64(), Some(1.0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    m0_dataset(dir.path());
    let args = |name: &'static str| {
        [
            "sweep",
            "--dataset",
            "m0.jsonl",
            "--vocab-size",
            "6",
            "--max-len",
            "5",
            "--metric",
            "coverage",
            "--algorithm",
            "s+r,mcts,vgbs",
            "--value-source",
            "rollout",
            "--budgets",
            "1,4",
            "--output",
            name,
        ]
    };
    assert!(tokensearch(&args("a.json"), dir.path()).status.success());
    assert!(tokensearch(&args("b.json"), dir.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
}

#[test]
fn table_format_has_one_row_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    m0_dataset(dir.path());
    let out = tokensearch(
        &[
            "sweep",
            "--dataset",
            "m0.jsonl",
            "--config",
            "m0.json",
            "--budgets",
            "1,2,3",
            "--format",
            "table",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().contains("1.0000"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    m0_dataset(dir.path());
    let privileged_rerank = tokensearch(
        &[
            "decode",
            "--dataset",
            "m0.jsonl",
            "--config",
            "m0.json",
            "--metric",
            "bleu",
            "--algorithm",
            "s+r",
            "--budget",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(privileged_rerank.status.code(), Some(1));
    let missing = tokensearch(
        &["oracle", "--dataset", "nope.jsonl", "--config", "m0.json"],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    let bad_flag = tokensearch(&["decode", "--no-such-flag"], dir.path());
    assert_eq!(bad_flag.status.code(), Some(1));
}

#[test]
fn oracle_and_tree_outputs() {
    let dir = tempfile::tempdir().unwrap();
    m0_dataset(dir.path());
    let out = tokensearch(&["oracle", "--dataset", "m0.jsonl", "--config", "m0.json"], dir.path());
    assert!(out.status.success());
    let entries: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(entries[0]["metric_argmax"], serde_json::json!([0, 0, 0]));
    assert_eq!(entries[0]["likelihood_argmax"], serde_json::json!([]));

    let tree = tokensearch(
        &[
            "tree",
            "--dataset",
            "m0.jsonl",
            "--config",
            "m0.json",
            "--simulations",
            "3",
            "--sparse-actions",
            "3",
            "--output",
            "t.dot",
        ],
        dir.path(),
    );
    assert!(tree.status.success());
    let dot = fs::read_to_string(dir.path().join("t.dot")).unwrap();
    assert_eq!(dot.matches(" -> ").count(), 3);
}
