use std::fs;
use std::path::Path;
use std::process::Command;

use erc::cli::run_from;
use erc::Error;

const SMALL_CONFIG: &str = r#"{
  "vocab_size": 400,
  "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "dropout": 0.1},
  "train": {"epochs": 2, "peak_lr": 0.003, "batch_size": 8},
  "lr_search": {"trials": 2, "min_lr": 0.0001, "max_lr": 0.01, "data_fraction": 0.5},
  "seeds": [0],
  "inspect": {"n_correct": 1, "n_incorrect": 1}
}"#;

fn run(args: &[&str]) -> Result<(), Error> {
    run_from(std::iter::once("erc").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn staged_commands_chain_into_an_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.json");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let corpus = d.join("corpus.jsonl");
    let vocab = d.join("vocab.json");
    let packed = d.join("packed");
    let run_dir = d.join("run");

    run(&[
        "synth",
        "--rule",
        "speaker_dependent",
        "--dialogues",
        "60",
        "--out",
        s(&corpus),
    ])
    .unwrap();
    run(&["stats", "--corpus", s(&corpus), "--json"]).unwrap();
    run(&[
        "tokenizer",
        "train",
        "--corpus",
        s(&corpus),
        "--config",
        s(&config),
        "--out",
        s(&vocab),
    ])
    .unwrap();
    run(&[
        "build",
        "--corpus",
        s(&corpus),
        "--vocab",
        s(&vocab),
        "--mode",
        "past",
        "--out",
        s(&packed),
    ])
    .unwrap();
    assert!(packed.join("packed.jsonl").is_file());

    run(&[
        "lr-search",
        "--packed",
        s(&packed),
        "--config",
        s(&config),
        "--out",
        s(&d.join("lr.json")),
    ])
    .unwrap();
    let lr: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("lr.json")).unwrap()).unwrap();
    assert_eq!(lr["trials"].as_array().unwrap().len(), 2);

    run(&[
        "train",
        "--packed",
        s(&packed),
        "--config",
        s(&config),
        "--out",
        s(&run_dir),
    ])
    .unwrap();
    let ckpt = run_dir.join("best.ckpt");
    assert!(ckpt.is_file());
    assert!(!run_dir.join(".lock").exists());

    let eval = d.join("eval.json");
    run(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--packed",
        s(&packed),
        "--split",
        "val",
        "--out",
        s(&eval),
    ])
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&eval).unwrap()).unwrap();
    let f1 = report["weighted_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    let reports = d.join("reports");
    let inspected = run(&[
        "inspect",
        "--checkpoint",
        s(&ckpt),
        "--packed",
        s(&packed),
        "--vocab",
        s(&vocab),
        "--n-correct",
        "1",
        "--n-incorrect",
        "0",
        "--out",
        s(&reports),
    ]);
    // a barely trained model may have nothing correct to sample
    match inspected {
        Ok(()) => assert!(fs::read_dir(&reports).unwrap().count() >= 2),
        Err(e) => assert!(matches!(e, Error::Data(_)), "{e}"),
    }
}

#[test]
fn ablate_writes_a_markdown_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.json");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let spec = d.join("spec.json");
    fs::write(
        &spec,
        r#"{"cells": [{"mode": "none", "prepend_speaker": true}, {"mode": "none", "prepend_speaker": false}], "seeds": [0]}"#,
    )
    .unwrap();
    let corpus = d.join("corpus.jsonl");
    let vocab = d.join("vocab.json");
    run(&["synth", "--dialogues", "40", "--out", s(&corpus)]).unwrap();
    run(&[
        "tokenizer",
        "train",
        "--corpus",
        s(&corpus),
        "--vocab-size",
        "300",
        "--out",
        s(&vocab),
    ])
    .unwrap();
    let table = d.join("table.md");
    run(&[
        "ablate",
        "--spec",
        s(&spec),
        "--corpus",
        s(&corpus),
        "--vocab",
        s(&vocab),
        "--dataset",
        "synthetic",
        "--config",
        s(&config),
        "--out",
        s(&table),
    ])
    .unwrap();
    let md = fs::read_to_string(table).unwrap();
    assert!(md.contains("synthetic"));
    assert_eq!(md.lines().filter(|l| l.starts_with('|')).count(), 4, "{md}");
}

#[test]
fn pipeline_subcommand_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let run_dir = dir.path().join("run");
    run(&[
        "pipeline",
        "--config",
        s(&config),
        "--run-dir",
        s(&run_dir),
        "--synthetic",
        "content_only",
    ])
    .unwrap();
    for f in [
        "manifest.json",
        "metrics.json",
        "vocab.json",
        "packed.jsonl",
        "eval/seed_0.json",
    ] {
        assert!(run_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn usage_errors_are_config_errors() {
    assert!(matches!(run(&["frobnicate"]), Err(Error::Config(_))));
    assert!(matches!(
        run(&["build", "--corpus", "x"]),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        run(&["synth", "--rule", "psychic", "--out", "x.jsonl"]),
        Err(Error::InvalidArgument(_))
    ));
}

fn exit_code(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_erc"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn binary_exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["tokenizer", "train", "--out", "v.json"]), 2);

    let garbage = d.join("garbage.jsonl");
    fs::write(&garbage, "not json at all\n").unwrap();
    assert_eq!(exit_code(&["stats", "--corpus", s(&garbage)]), 3);

    let ckpt = d.join("bad.ckpt");
    fs::write(&ckpt, b"definitely not a checkpoint").unwrap();
    assert_eq!(
        exit_code(&["eval", "--checkpoint", s(&ckpt), "--packed", s(&garbage)]),
        3
    );

    let missing_run = d.join("never");
    let cfg = d.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"corpus": {"path": "/nonexistent/corpus.csv", "format": "meld_csv"}}"#,
    )
    .unwrap();
    let code = exit_code(&[
        "pipeline",
        "--config",
        s(&cfg),
        "--run-dir",
        s(&missing_run),
    ]);
    assert_eq!(code, 2);
    assert!(!missing_run.exists());
}

#[test]
fn thread_cap_rejects_nonsense() {
    let out = Command::new(env!("CARGO_BIN_EXE_erc"))
        .args(["synth", "--dialogues", "4", "--out", "/dev/null"])
        .env("ERC_NUM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
