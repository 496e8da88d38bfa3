use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hetsage::gnn::{init_model, load_model, ModelParams};
use hetsage::numkit::Rng;

fn hetsage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsage")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes and prepares a small data directory under `root`.
fn data_dir(root: &Path) -> PathBuf {
    let raw = root.join("raw");
    let data = root.join("data");
    let o = hetsage(&["synth", "--out", s(&raw), "--users", "30", "--anime", "40", "--ratings", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hetsage(&[
        "prepare",
        "--anime",
        s(&raw.join("anime.csv")),
        "--ratings",
        s(&raw.join("ratings.csv")),
        "--out",
        s(&data),
        "--hash-dim",
        "16",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("users=30 anime=40 edges=300"), "{}", stdout(&o));
    data
}

fn train(data: &Path, model: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--model", s(model), "--hidden", "4"];
    args.extend_from_slice(extra);
    hetsage(&args)
}

#[test]
fn help_and_version_exit_zero() {
    let o = hetsage(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("recommend"));
    assert_eq!(hetsage(&["--version"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(hetsage(&[]).status.code(), Some(1));
    assert_eq!(hetsage(&["frobnicate"]).status.code(), Some(1));
    let o = hetsage(&["train", "--data", "nowhere", "--model", "m.json", "--hidden", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hidden"), "{}", stderr(&o));
    let o = hetsage(&["train", "--data", "nowhere", "--model", "m.json", "--lr", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = hetsage(&[
        "prepare",
        "--anime",
        s(&dir.path().join("no_anime.csv")),
        "--ratings",
        s(&dir.path().join("no_ratings.csv")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = train(&dir.path().join("missing"), &dir.path().join("m.json"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_learning_rate_saves_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir(dir.path());
    let model = dir.path().join("model.json");
    let o = train(&data, &model, &["--epochs", "1", "--lr", "0", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("epoch=1 loss="), "{text}");
    assert!(text.lines().last().unwrap().starts_with("split=train rmse="), "{text}");

    let (saved, config) = load_model::<f64>(&model).unwrap();
    let init: ModelParams<f64> = init_model(&config, &mut Rng::new(4)).unwrap();
    assert_eq!(saved, init);
}

#[test]
fn evaluate_and_recommend_formats() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir(dir.path());
    let model = dir.path().join("model.json");
    assert!(train(&data, &model, &["--epochs", "5"]).status.success());

    let o = hetsage(&["evaluate", "--data", s(&data), "--model", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("split=test rmse="));
    assert!(lines[0].contains(" weighted_rmse=") && lines[0].contains(" accuracy=") && lines[0].contains(" n="));
    assert!(lines[1].starts_with("baseline=global_mean split=test"));

    let o = hetsage(&["evaluate", "--data", s(&data), "--model", s(&model), "--split", "train"]);
    assert!(stdout(&o).starts_with("split=train "));

    let o = hetsage(&["recommend", "--data", s(&data), "--model", s(&model), "--user", "1002", "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "user=1002");
    assert_eq!(lines.len(), 4);
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("rank={} anime=", i + 1)), "{line}");
        assert!(line.contains(" name=") && line.contains(" pred="), "{line}");
    }

    let o = hetsage(&[
        "recommend", "--data", s(&data), "--model", s(&model), "--user", "1002", "--user", "1005", "--format", "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let docs: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[1]["user_id"], "1005");
    let items = docs[0]["items"].as_array().unwrap();
    assert_eq!(items.len(), 10);
    assert_eq!(items[0]["rank"], 1);
    assert!(items[0]["predicted_rating"].as_f64().unwrap() >= items[9]["predicted_rating"].as_f64().unwrap());
}

#[test]
fn unknown_user_and_zero_k_fail() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir(dir.path());
    let model = dir.path().join("model.json");
    assert!(train(&data, &model, &["--epochs", "1"]).status.success());

    let o = hetsage(&["recommend", "--data", s(&data), "--model", s(&model), "--user", "1001x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1001"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let o = hetsage(&["recommend", "--data", s(&data), "--model", s(&model), "--user", "1001", "--k", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn model_and_data_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir(dir.path());
    let other = dir.path().join("other");
    let o = hetsage(&[
        "prepare",
        "--anime",
        s(&dir.path().join("raw/anime.csv")),
        "--ratings",
        s(&dir.path().join("raw/ratings.csv")),
        "--out",
        s(&other),
        "--hash-dim",
        "8",
    ]);
    assert!(o.status.success());
    let model = dir.path().join("model.json");
    assert!(train(&data, &model, &["--epochs", "1"]).status.success());
    let o = hetsage(&["evaluate", "--data", s(&other), "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("feature dim"), "{}", stderr(&o));
}

#[test]
fn gradcheck_command() {
    let o = hetsage(&["gradcheck", "--aggr", "mean"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("max_rel_err<=1e-4"));
}
