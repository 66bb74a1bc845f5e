//! End-to-end tests of the command-line surface, driving the compiled
//! binary: schemas, exit codes, snapshots, and output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specfuse"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn specfuse");
    assert!(
        out.status.success(),
        "command failed ({}):\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, n_train: usize, n_dev: usize) {
    run_ok(bin().args([
        "synth-data",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "11",
        "--n-train",
        &n_train.to_string(),
        "--n-dev",
        &n_dev.to_string(),
        "--n-eval",
        &n_dev.to_string(),
    ]));
}

fn micro_train(data: &Path, out: &Path) -> PathBuf {
    run_ok(bin().args([
        "train",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "model.preset=micro",
        "--set",
        "train.epochs=1",
        "--set",
        "train.batch_size=4",
        "--set",
        &format!("data.train_protocol={}", data.join("protocols/toy.cm.train.txt").display()),
        "--set",
        &format!("data.train_audio={}", data.join("audio/train").display()),
        "--set",
        &format!("data.dev_protocol={}", data.join("protocols/toy.cm.dev.txt").display()),
        "--set",
        &format!("data.dev_audio={}", data.join("audio/dev").display()),
        "--seeds",
        "1",
    ]));
    out.join("best.ckpt")
}

#[test]
fn synth_check_train_evaluate_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 6, 4);
    assert!(data.join("protocols/toy.cm.train.txt").exists());
    assert!(data.join("resolved.cfg").exists());

    // intact corpus: zero findings
    let out = run_ok(bin().args([
        "check-data",
        "--protocol",
        data.join("protocols/toy.cm.dev.txt").to_str().unwrap(),
        "--audio",
        data.join("audio/dev").to_str().unwrap(),
    ]));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("no issues found"), "{text}");

    let run_dir = tmp.path().join("run");
    let ckpt = micro_train(&data, &run_dir);
    assert!(ckpt.exists());
    assert!(run_dir.join("resolved.cfg").exists());
    assert!(run_dir.join("metrics.jsonl").exists());
    assert!(run_dir.join("train_report.json").exists());

    // the metrics stream is valid JSONL with the documented fields
    let stream = std::fs::read_to_string(run_dir.join("metrics.jsonl")).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(stream.lines().next().unwrap()).unwrap();
    for key in ["step", "epoch", "lr", "l_recon_raw", "l_recon_power", "l_cls", "total"] {
        assert!(first.get(key).is_some(), "metrics line missing {key}: {first}");
    }

    let eval_dir = tmp.path().join("eval");
    run_ok(bin().args([
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--protocol",
        data.join("protocols/toy.cm.dev.txt").to_str().unwrap(),
        "--audio",
        data.join("audio/dev").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    assert!(eval_dir.join("scores.txt").exists());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(eval_dir.join("eval_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["pooled_eer"].as_f64().unwrap() >= 0.0);
    assert!(report["per_attack_eer"].get("A01").is_some());
}

#[test]
fn score_subcommand_schemas_and_error_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 2);
    let run_dir = tmp.path().join("run");
    let ckpt = micro_train(&data, &run_dir);

    let wav_dir = data.join("audio/dev");
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(&wav_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    wavs.sort();
    let score_file = tmp.path().join("scores.txt");

    // three good files -> three lines, identical across runs
    let args_for = |out: &Path| {
        let mut v = vec![
            "score".to_string(),
            "--checkpoint".into(),
            ckpt.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        for w in wavs.iter().take(3) {
            v.push("--audio".into());
            v.push(w.to_str().unwrap().into());
        }
        v
    };
    run_ok(bin().args(args_for(&score_file)));
    let text = std::fs::read_to_string(&score_file).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts.len(), 2);
        parts[1].parse::<f64>().unwrap();
    }
    let second = tmp.path().join("scores2.txt");
    run_ok(bin().args(args_for(&second)));
    assert_eq!(std::fs::read(&score_file).unwrap(), std::fs::read(&second).unwrap());

    // one corrupt file among three: two scores, an error record, exit 0
    let corrupt = tmp.path().join("broken.wav");
    std::fs::write(&corrupt, b"definitely not audio").unwrap();
    let mixed_out = tmp.path().join("scores3.txt");
    let out = run_ok(bin().args([
        "score",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        mixed_out.to_str().unwrap(),
        "--audio",
        wavs[0].to_str().unwrap(),
        "--audio",
        corrupt.to_str().unwrap(),
        "--audio",
        wavs[1].to_str().unwrap(),
    ]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(&mixed_out).unwrap().lines().count(), 2);
    assert!(mixed_out.with_extension("errors").exists());

    // all corrupt: nonzero exit with input-error code
    let all_bad = bin()
        .args([
            "score",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            tmp.path().join("none.txt").to_str().unwrap(),
            "--audio",
            corrupt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(all_bad.status.code(), Some(1));
}

#[test]
fn gradcam_and_extract_features_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 2);
    let run_dir = tmp.path().join("run");
    let ckpt = micro_train(&data, &run_dir);

    let wav = data.join("audio/dev/T_DEV_S00000.wav");
    let cam_dir = tmp.path().join("cam");
    run_ok(bin().args([
        "gradcam",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--audio",
        wav.to_str().unwrap(),
        "--out",
        cam_dir.to_str().unwrap(),
    ]));
    assert!(cam_dir.join("T_DEV_S00000.raw_saliency.png").exists());
    assert!(cam_dir.join("T_DEV_S00000.power_saliency.png").exists());
    let container =
        specfuse::tensorfile::read_container(&cam_dir.join("T_DEV_S00000.saliency.sftc"))
            .unwrap();
    assert_eq!(container.kind, "specfuse-saliency");
    let raw = container.get("raw").expect("raw saliency tensor");
    assert!(raw.iter().all(|&v| (0.0..=1.0).contains(&v)));

    // feature dump keyed by utterance id
    let dump = tmp.path().join("feats.sftc");
    run_ok(bin().args([
        "extract-features",
        "--protocol",
        data.join("protocols/toy.cm.dev.txt").to_str().unwrap(),
        "--audio",
        data.join("audio/dev").to_str().unwrap(),
        "--out",
        dump.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]));
    let feats = specfuse::tensorfile::read_container(&dump).unwrap();
    assert_eq!(feats.kind, "specfuse-features");
    assert!(feats.get("T_DEV_B00000.raw").is_some());
    assert!(feats.get("T_DEV_B00000.power").is_some());
    // 2 bona + 2 spoof, two kinds each
    assert_eq!(feats.tensors.len(), 8);
}

#[test]
fn check_data_reports_findings() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 2);

    // delete one audio file
    std::fs::remove_file(data.join("audio/dev/T_DEV_B00001.wav")).unwrap();
    // corrupt the protocol with an inconsistent entry
    let proto = data.join("protocols/toy.cm.dev.txt");
    let mut text = std::fs::read_to_string(&proto).unwrap();
    text.push_str("SPK009 T_DEV_B00000 - A01 bonafide\n");
    std::fs::write(&proto, text).unwrap();

    let out = run_ok(bin().args([
        "check-data",
        "--protocol",
        proto.to_str().unwrap(),
        "--audio",
        data.join("audio/dev").to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("T_DEV_B00001"), "missing-file finding expected: {stdout}");
    assert!(stdout.contains("inconsistent"), "consistency finding expected: {stdout}");
    assert!(stdout.contains("finding(s)"));
}

#[test]
fn rerunning_from_the_snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 2);
    let run1 = tmp.path().join("run1");
    micro_train(&data, &run1);

    // replay purely from the emitted snapshot
    let run2 = tmp.path().join("run2");
    run_ok(bin().args([
        "train",
        "--out",
        run2.to_str().unwrap(),
        "--config",
        run1.join("resolved.cfg").to_str().unwrap(),
    ]));
    let m1 = std::fs::read(run1.join("metrics.jsonl")).unwrap();
    let m2 = std::fs::read(run2.join("metrics.jsonl")).unwrap();
    assert_eq!(m1, m2, "snapshot replay must reproduce the metrics stream");
    assert_eq!(
        std::fs::read(run1.join("resolved.cfg")).unwrap(),
        std::fs::read(run2.join("resolved.cfg")).unwrap()
    );
}

#[test]
fn unknown_flags_are_rejected() {
    let out = bin().args(["synth-data", "--out", "/tmp/x", "--bogus-flag"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["not-a-subcommand"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn ablate_alpha_sweep_emits_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 2);
    let out_dir = tmp.path().join("ablate");
    run_ok(bin().args([
        "ablate",
        "--preset",
        "alpha_sweep",
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "model.preset=micro",
        "--set",
        "train.epochs=1",
        "--set",
        "train.batch_size=4",
        "--set",
        &format!("data.train_protocol={}", data.join("protocols/toy.cm.train.txt").display()),
        "--set",
        &format!("data.train_audio={}", data.join("audio/train").display()),
        "--set",
        &format!("data.dev_protocol={}", data.join("protocols/toy.cm.dev.txt").display()),
        "--set",
        &format!("data.dev_audio={}", data.join("audio/dev").display()),
    ]));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("ablate_report.json")).unwrap(),
    )
    .unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let names: Vec<&str> = rows.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["alpha_1", "alpha_0.1", "alpha_0.01"]);
    assert!(out_dir.join("ablate_table.txt").exists());
    assert!(out_dir.join("resolved.cfg").exists());
}
