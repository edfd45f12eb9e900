//! End-to-end tests of the `unet` binary: flags, exit codes, output
//! formats, and the synth -> train -> eval -> predict -> sweep loop.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn unet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unet"))
}

fn run(args: &[&str]) -> Output {
    unet().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn str(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn write_small_config(ws: &Workspace) -> String {
    let cfg = r#"
[model]
word_dim = 8
pos_dim = 0
ner_dim = 0
hidden_dim = 6
attention_dim = 12
dropout = 0.1

[train]
epochs = 2
batch_size = 8
"#;
    std::fs::write(ws.path("config.toml"), cfg).unwrap();
    ws.str("config.toml")
}

fn synth(ws: &Workspace, name: &str, n: usize, seed: u64) -> String {
    let out = ws.str(name);
    let o = run(&[
        "synth",
        "--n",
        &n.to_string(),
        "--vocab",
        "25",
        "--answerable",
        "0.5",
        "--seed",
        &seed.to_string(),
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "synth failed: {}", stderr(&o));
    out
}

fn train_small(ws: &Workspace, data: &str, ckpt: &str, seed: u64) -> String {
    let config = write_small_config(ws);
    let ckpt_path = ws.str(ckpt);
    let o = run(&[
        "train",
        "--data",
        data,
        "--checkpoint",
        &ckpt_path,
        "--config",
        &config,
        "--seed",
        &seed.to_string(),
    ]);
    assert!(o.status.success(), "train failed: {}", stderr(&o));
    ckpt_path
}

#[test]
fn help_lists_every_ablation_flag() {
    let o = run(&["train", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in [
        "--no-universal-node",
        "--no-share-node",
        "--separate-encoders",
        "--no-plausible-head",
        "--no-verifier",
        "--self-attn-only",
        "--loss-terms",
    ] {
        assert!(text.contains(flag), "help missing {flag}");
    }
}

#[test]
fn unknown_flag_is_rejected_with_json_error() {
    let o = run(&["synth", "--bogus-flag", "1", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(stderr(&o).trim()).expect("stderr is one JSON object");
    assert!(err["error"].as_str().unwrap().contains("--bogus-flag"));
}

#[test]
fn runtime_failures_emit_json_on_stderr_and_exit_nonzero() {
    let o = run(&["eval", "--checkpoint", "/nonexistent.ckpt", "--data", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn synth_output_reparses_and_is_seed_deterministic() {
    let ws = Workspace::new();
    let a = synth(&ws, "a.json", 30, 9);
    let b = synth(&ws, "b.json", 30, 9);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let raws = unet_mrc::data::squad::parse_dataset(Path::new(&a)).unwrap();
    assert_eq!(raws.len(), 30);
    let answerable = raws.iter().filter(|r| !r.is_impossible).count();
    assert_eq!(answerable, 15);
}

#[test]
fn train_writes_log_and_checkpoint_deterministically() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 16, 4);
    let config = write_small_config(&ws);
    for name in ["m1.ckpt", "m2.ckpt"] {
        let o = run(&[
            "train",
            "--data",
            &data,
            "--checkpoint",
            &ws.str(name),
            "--config",
            &config,
            "--seed",
            "7",
            "--log",
            &ws.str("train.jsonl"),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(ws.path("m1.ckpt")).unwrap(),
        std::fs::read(ws.path("m2.ckpt")).unwrap(),
        "same seed must give identical checkpoints"
    );
    let log = std::fs::read_to_string(ws.path("train.jsonl")).unwrap();
    let lines: Vec<&str> = log.trim().lines().collect();
    assert_eq!(lines.len(), 2);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["epoch"].is_u64());
        assert!(v["loss_total"].is_f64());
        assert!(v["wall_ms"].is_u64());
    }
}

#[test]
fn eval_report_has_breakdown_and_respects_out_flag() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 16, 5);
    let ckpt = train_small(&ws, &data, "m.ckpt", 3);
    let o = run(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &data,
        "--threshold",
        "0.7",
        "--out",
        &ws.str("report.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
    for key in [
        "em",
        "f1",
        "has_answer_em",
        "has_answer_f1",
        "no_answer_em",
        "no_answer_f1",
        "classification_accuracy",
        "count",
    ] {
        assert!(!report[key].is_null(), "report missing {key}");
    }
    assert_eq!(report["count"], 16);
}

#[test]
fn predict_emits_one_json_record_per_example() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 12, 6);
    let ckpt = train_small(&ws, &data, "m.ckpt", 2);
    let o = run(&["predict", "--checkpoint", &ckpt, "--data", &data, "--out", &ws.str("p.jsonl")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(ws.path("p.jsonl")).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines.len(), 12);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["id"].is_string());
        assert!(v["p_unanswerable"].is_f64());
        assert!(v["predicted_unanswerable"].is_boolean());
    }
}

#[test]
fn sweep_csv_matches_grid_and_zero_threshold_answers_everything() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 12, 8);
    let ckpt = train_small(&ws, &data, "m.ckpt", 1);
    let o = run(&[
        "sweep",
        "--checkpoint",
        &ckpt,
        "--data",
        &data,
        "--grid",
        "0.0,0.4,0.8",
        "--out",
        &ws.str("curve.csv"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(ws.path("curve.csv")).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "t,AvgF1,HasAnsF1,NoAnsRecall,count");
    assert_eq!(lines.len(), 4);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0.00");
    assert_eq!(first[4], "0", "threshold 0 must predict everything answerable");
}

#[test]
fn gradcheck_command_passes_and_lists_tensors() {
    let o = run(&["gradcheck", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("gradcheck: PASS"));
    assert!(text.contains("w_f"));
    assert!(text.contains("word_emb"));
}

#[test]
fn invalid_answerable_fraction_is_a_clean_error() {
    let ws = Workspace::new();
    let o = run(&["synth", "--n", "5", "--answerable", "1.5", "--out", &ws.str("x.json")]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("answerable"));
}

#[test]
fn loss_terms_av_trains_classifier_only() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 12, 2);
    let config = write_small_config(&ws);
    let o = run(&[
        "train",
        "--data",
        &data,
        "--checkpoint",
        &ws.str("av.ckpt"),
        "--config",
        &config,
        "--loss-terms",
        "AV",
        "--log",
        &ws.str("av.jsonl"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(ws.path("av.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["loss_answer"].is_null());
    assert!(first["loss_no_answer"].is_null());
    assert!(first["loss_verifier"].is_f64());
}

#[test]
fn ablated_training_round_trips_through_eval() {
    let ws = Workspace::new();
    let data = synth(&ws, "data.json", 10, 11);
    let config = write_small_config(&ws);
    let o = run(&[
        "train",
        "--data",
        &data,
        "--checkpoint",
        &ws.str("nonode.ckpt"),
        "--config",
        &config,
        "--no-universal-node",
        "--no-verifier",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["eval", "--checkpoint", &ws.str("nonode.ckpt"), "--data", &data]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["count"], 10);
}
