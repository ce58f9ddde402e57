//! The `gcorrect` binary: outputs, determinism and exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gesture_corrector::corrector::{CorrectionOutcome, CorrectorBundle, CorrectorConfig, ErrorType};
use gesture_corrector::eval::{classify_event, PredictionEvent};
use gesture_corrector::features::GestureLabel;

fn gc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcorrect"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn gcorrect")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const SMALL: [&str; 2] = ["--samples-per-gesture", "40"];

fn pipeline(dir: &Path) {
    ok(dir, &[&["synth"][..], &SMALL].concat());
    ok(dir, &["train-base", "--table1"]);
    ok(dir, &["train-corrector", "--degree", "3"]);
    ok(dir, &["sweep", "--grid", "21"]);
    ok(dir, &["correct", "--input", "data/new_user_test.csv", "--out", "out/corrected.csv"]);
    ok(dir, &["intdim", "--max-samples", "120", "--out", "out/intdim.csv"]);
}

#[test]
fn whole_pipeline_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() >= 13, "{:?}", fa.keys().collect::<Vec<_>>());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
    for name in ["out/sweep.csv", "out/corrected.csv", "out/intdim.csv", "data/base_train.csv"] {
        let text = String::from_utf8(fa[Path::new(name)].clone()).unwrap();
        assert!(text.starts_with("# gcorrect ") && text.lines().next().unwrap().contains("seed=20240512"), "{name}");
    }

    let sweep = String::from_utf8(fa[Path::new("out/sweep.csv")].clone()).unwrap();
    let rows: Vec<&str> = sweep.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("delta,theta,tpr,fpr,corrected_err"));
    assert_eq!(rows.len() - 1, 21 * 3);

    let intdim = String::from_utf8(fa[Path::new("out/intdim.csv")].clone()).unwrap();
    let cells: Vec<Vec<&str>> = intdim.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(cells.len(), 7 * 9);
    for c in &cells {
        let features: usize = c[2].parse().unwrap();
        if features >= 120 {
            assert_eq!(c[3], "inf", "{c:?}");
        }
        if c[1] == "1" {
            assert!(c[3].parse::<f64>().is_ok(), "{c:?}");
        }
    }
}

#[test]
fn seed_changes_the_data() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &[&["synth"][..], &SMALL].concat());
    ok(b.path(), &[&["--seed", "7", "synth"][..], &SMALL].concat());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_ne!(fa[Path::new("data/base_train.csv")], fb[Path::new("data/base_train.csv")]);
    let head = String::from_utf8(fb[Path::new("data/base_train.csv")].clone()).unwrap();
    assert!(head.starts_with("# gcorrect synth seed=7 "));
}

fn parse_type(s: &str) -> Option<ErrorType> {
    let (a, b) = s.split_once("->")?;
    ErrorType::new(a.parse().ok()?, b.parse().ok()?).ok()
}

#[test]
fn correct_output_is_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[&["synth"][..], &SMALL].concat());
    ok(d, &["train-base"]);
    ok(d, &["train-corrector", "--degree", "3", "--delta", "0.02"]);
    let stdout = ok(
        d,
        &["correct", "--input", "data/new_user_train.csv", "--out", "c.csv", "--probe-latency", "500"],
    );
    assert!(stdout.contains("latency over 500 calls"), "{stdout}");
    let text = fs::read_to_string(d.join("c.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("delta=0.02"));
    assert_eq!(lines.next().unwrap(), "user_id,truth,base_pred,flagged,score,matched_type,final,event");
    let mut flagged = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let truth: GestureLabel = f[1].parse().unwrap();
        let y_pred: GestureLabel = f[2].parse().unwrap();
        let outcome = CorrectionOutcome {
            flagged: f[3] == "1",
            score: f[4].parse().unwrap(),
            matched_type: parse_type(f[5]),
            final_label: f[6].parse().unwrap(),
        };
        flagged += usize::from(outcome.flagged);
        let event: PredictionEvent = f[7].parse().unwrap();
        assert_eq!(classify_event(truth, y_pred, &outcome), event, "{line}");
    }
    assert!(flagged > 0);
}

#[test]
fn pass_through_bundle_keeps_base_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[&["synth"][..], &SMALL].concat());
    ok(d, &["train-base"]);
    fs::create_dir_all(d.join("models")).unwrap();
    CorrectorBundle::pass_through(CorrectorConfig::default())
        .save(&d.join("models/corrector.json"))
        .unwrap();
    let stdout = ok(
        d,
        &["correct", "--input", "data/new_user_test.csv", "--out", "c.csv", "--probe-latency", "10"],
    );
    assert!(stdout.contains("skipped"), "{stdout}");
    let text = fs::read_to_string(d.join("c.csv")).unwrap();
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2], f[6], "{line}");
        assert_eq!(f[3], "0");
    }
}

#[test]
fn invalid_users_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = gc(dir.path(), &["synth", "--users", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 4"));
    assert!(files(dir.path()).is_empty());
}

#[test]
fn unknown_model_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let out = gc(dir.path(), &["train-base", "--model", "forest"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["knn", "lda", "gnb", "linear-svm", "poly-svm"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = gc(dir.path(), &["train-base", "--data-dir", "nowhere"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/base_train.csv"));
}

#[test]
fn bad_config_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[corrector]\ndegre = 5\n").unwrap();
    let out = gc(dir.path(), &["--config", "run.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("run.toml"), "[corrector]\ndegree = 12\n").unwrap();
    let out = gc(dir.path(), &["--config", "run.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(files(dir.path()).keys().all(|k| k == Path::new("run.toml")));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 11\n[paths]\ndata_dir = \"d\"\n[synth]\nusers = 5\nsamples_per_gesture = 4\n",
    )
    .unwrap();
    let stdout = ok(dir.path(), &["--config", "run.toml", "synth", "--users", "6"]);
    // 6 users split 8:3 gives 4 training users
    assert!(stdout.contains("base_train: 80 samples"), "{stdout}");
    let head = fs::read_to_string(dir.path().join("d/base_train.csv")).unwrap();
    assert!(head.starts_with("# gcorrect synth seed=11 users=6"));
}

#[test]
fn too_few_samples_for_intdim_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--samples-per-gesture", "2", "--users", "4"]);
    let out = gc(d, &["intdim", "--input", "data/new_user_train.csv"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("out").exists());
}

#[test]
fn zero_error_user_gives_pass_through_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[&["synth"][..], &SMALL].concat());
    ok(d, &["train-base"]);
    // the base model is perfect on its own training data
    let stdout = ok(d, &["train-corrector", "--data", "data/base_train.csv"]);
    assert!(stdout.contains("pass-through"), "{stdout}");
    let bundle = CorrectorBundle::load(&d.join("models/corrector.json")).unwrap();
    assert!(bundle.detector().is_none());
}
