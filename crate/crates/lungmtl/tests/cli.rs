use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use lungmtl::cli::Cli;
use lungmtl::commands::{run, split_features};
use lungmtl::features::read_features;
use lungmtl_core::corpus::SoundLabel;

fn lungmtl(args: &[&str]) -> lungmtl::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("lungmtl").chain(args.iter().copied())).expect("valid arguments");
    let mut out = Vec::new();
    run(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic corpus plus feature file; returns (corpus dir, feature path).
fn prepared(dir: &Path, n_per_class: &str) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus");
    lungmtl(&["synth", "--out", s(&corpus), "--n-per-class", n_per_class, "--demographics", "50"]).unwrap();
    let feat = dir.join("train.feat");
    lungmtl(&[
        "extract",
        "--audio-dir",
        s(&corpus.join("audio")),
        "--diagnosis",
        s(&corpus.join("diagnosis.csv")),
        "--out",
        s(&feat),
    ])
    .unwrap();
    (corpus, feat)
}

fn report_accuracy(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with("accuracy,")).unwrap();
    line.split(',').nth(3).unwrap().parse().unwrap()
}

#[test]
fn synth_then_extract() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, feat) = prepared(dir.path(), "2");
    let ff = read_features(&feat, None).unwrap();
    assert_eq!(ff.len(), 8);
    assert!(ff.records.iter().all(|r| (r.features.rows(), r.features.cols()) == (20, 498)));
    for k in SoundLabel::ALL {
        assert_eq!(ff.records.iter().filter(|r| r.sound == k).count(), 2);
    }
    let diag = std::fs::read_to_string(corpus.join("diagnosis.csv")).unwrap();
    assert_eq!(diag.lines().count(), 9);
    let demo = std::fs::read_to_string(corpus.join("demographics.txt")).unwrap();
    assert_eq!(demo.lines().count(), 50);

    let cycles = dir.path().join("cycles.feat");
    lungmtl(&[
        "extract",
        "--audio-dir",
        s(&corpus.join("audio")),
        "--diagnosis",
        s(&corpus.join("diagnosis.csv")),
        "--out",
        s(&cycles),
        "--cycles",
        "--workers",
        "1",
    ])
    .unwrap();
    assert_eq!(read_features(&cycles, None).unwrap().len(), 16);
}

#[test]
fn train_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (_, feat) = prepared(dir.path(), "2");
    let ck = |name: &str| dir.path().join(name);
    let out = lungmtl(&["train", "--features", s(&feat), "--checkpoint", s(&ck("a.json")), "--epochs", "2"]).unwrap();
    assert!(out.contains("checkpoint ->"), "{out}");
    lungmtl(&["train", "--features", s(&feat), "--checkpoint", s(&ck("b.json")), "--epochs", "2"]).unwrap();
    assert_eq!(std::fs::read(ck("a.json")).unwrap(), std::fs::read(ck("b.json")).unwrap());

    let ha = std::fs::read_to_string(ck("a.history.csv")).unwrap();
    let hb = std::fs::read_to_string(ck("b.history.csv")).unwrap();
    assert_eq!(ha, hb);
    assert!(ha.starts_with("# arch=mobilenet-mtl dtype=f32 epochs=2 batch_size=16 seed=42"), "{ha}");
    assert_eq!(ha.lines().count(), 4);

    // Defaults come through when no flags are given.
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nepochs = 1\n").unwrap();
    lungmtl(&["--config", s(&cfg), "train", "--features", s(&feat), "--checkpoint", s(&ck("c.json"))]).unwrap();
    let hc = std::fs::read_to_string(ck("c.history.csv")).unwrap();
    assert!(hc.contains(" epochs=1 batch_size=16 "), "{hc}");
    assert!(lungmtl_core::model::TrainConfig::default().epochs == 20);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (_, feat) = prepared(dir.path(), "1");
    let cfg = dir.path().join("run.toml");
    let ckpt = dir.path().join("m.json");
    std::fs::write(
        &cfg,
        format!(
            "[paths]\nfeature_file = {:?}\ncheckpoint = {:?}\n[model]\narch = \"cnn2d-mtl\"\n[train]\nepochs = 3\nbatch_size = 2\n[split]\nratio = 0.5\n",
            s(&feat),
            s(&ckpt)
        ),
    )
    .unwrap();
    lungmtl(&["--config", s(&cfg), "--seed", "5", "train", "--epochs", "1"]).unwrap();
    let h = std::fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert!(
        h.starts_with("# arch=cnn2d-mtl dtype=f32 epochs=1 batch_size=2 seed=5 ") && h.contains("split_ratio=0.5 split_seed=5"),
        "{h}"
    );

    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    assert!(lungmtl(&["--config", s(&cfg), "train"]).is_err());
    assert!(matches!(lungmtl(&["train"]), Err(lungmtl::Error::Usage(_))));
    assert!(matches!(lungmtl(&["--workers", "0", "risk", "label"]), Err(lungmtl::Error::Usage(_))));
}

#[test]
fn overfit_eval_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, feat) = prepared(dir.path(), "4");
    let ckpt = dir.path().join("m.json");
    lungmtl(&["train", "--features", s(&feat), "--checkpoint", s(&ckpt), "--epochs", "120"]).unwrap();
    let out_dir = dir.path().join("eval");
    let out = lungmtl(&["eval", "--features", s(&feat), "--checkpoint", s(&ckpt), "--out-dir", s(&out_dir), "--on", "train"])
        .unwrap();
    assert!(out.contains("== sound head: 13 examples =="), "{out}");
    assert_eq!(report_accuracy(&out_dir.join("sound_report.csv")), 1.0);
    assert_eq!(report_accuracy(&out_dir.join("disease_report.csv")), 1.0);
    for f in ["sound_confusion.csv", "sound_roc_points.csv", "sound_roc_auc.csv", "disease_report.txt"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }

    let ff = read_features(&feat, None).unwrap();
    let split = split_features(&ff, &Default::default(), &feat).unwrap();
    let wheeze = split.train.iter().map(|&i| &ff.records[i]).find(|r| r.sound == SoundLabel::Wheezes).unwrap();
    let wav = corpus.join("audio").join(format!("{}.wav", wheeze.id));
    let line = lungmtl(&["predict", "--checkpoint", s(&ckpt), s(&wav)]).unwrap();
    let doc: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(doc["sound"], "Wheezes");
    assert_eq!(doc["disease"], wheeze.disease.name());
    for key in ["sound_probs", "disease_probs"] {
        let sum: f64 = doc[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-6, "{key} sums to {sum}");
    }
}

const TABLE: &str = "\
1\t70\tF\t28.47\tNA\tNA
2\t73\tF\t21\tNA\tNA
3\t75\tF\t33.7\tNA\tNA
4\t84\tF\t33.53\tNA\tNA
5\t75\tM\t25.21\tNA\tNA
6\t60\tM\t22.86\tNA\tNA
7\t58\tM\t28.41\tNA\tNA
8\t77\tM\t23.12\tNA\tNA
9\t68\tM\t24.4\tNA\tNA
10\t81\tM\t36.76\tNA\tNA
11\t78\tM\t35.14\tNA\tNA
12\t65\tM\t29.07\tNA\tNA
13\t65\tF\t24.3\tNA\tNA
14\t85\tF\t17.1\tNA\tNA
15\t71\tM\t34\tNA\tNA
";

#[test]
fn risk_label_reproduces_rows() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo.txt");
    std::fs::write(&demo, format!("{TABLE}16\t30\tF\t22\tNA\tNA\n")).unwrap();
    let out = dir.path().join("levels.csv");
    lungmtl(&["risk", "label", "--demographics", s(&demo), "--out", s(&out)]).unwrap();
    let csv = std::fs::read_to_string(&out).unwrap();
    let levels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(levels, ["1", "1", "1", "1", "1", "2", "2", "1", "1", "1", "1", "1", "1", "0", "1"]);
    assert!(csv.lines().nth(14).unwrap().ends_with(",0,Very Severe"));
}

#[test]
fn risk_fit_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    lungmtl(&["synth", "--out", s(&corpus), "--n-per-class", "1", "--duration", "0.5", "--demographics", "300"]).unwrap();
    let demo = corpus.join("demographics.txt");
    let fit = |model: &str, ckpt: &Path| {
        lungmtl(&["risk", "fit", "--demographics", s(&demo), "--model", model, "--checkpoint", s(ckpt)]).unwrap()
    };
    let (a, b) = (dir.path().join("f1.json"), dir.path().join("f2.json"));
    fit("forest", &a);
    lungmtl(&["--workers", "1", "risk", "fit", "--demographics", s(&demo), "--model", "forest", "--checkpoint", s(&b)]).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let svm = dir.path().join("svm.json");
    let out = fit("svm", &svm);
    assert!(out.contains("gamma: 0.3333333333333333 (1/3 features)"), "{out}");
    let out = fit("softmax", &dir.path().join("sm.json"));
    assert!(out.contains("test accuracy:"), "{out}");

    let pred = dir.path().join("pred.csv");
    let out = lungmtl(&["risk", "predict", "--demographics", s(&demo), "--checkpoint", s(&a), "--out", s(&pred)]).unwrap();
    assert!(out.contains("forest on 300 records"), "{out}");
    let csv = std::fs::read_to_string(&pred).unwrap();
    assert!(csv.starts_with("patient_id,predicted_level,predicted_name,rule_level\n"));
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_lungmtl");
    let out = Command::new(bin).args(["predict", "--checkpoint", "/nonexistent.json", "/nonexistent.wav"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let demo = dir.path().join("demo.txt");
    std::fs::write(&demo, TABLE).unwrap();
    let out = Command::new(bin).args(["risk", "label", "--demographics", s(&demo)]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 16);

    let out = Command::new(bin).arg("--bogus").output().unwrap();
    assert!(!out.status.success());
}
