use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 10] = ["--set", "preset=tiny", "--set", "max_epochs=3", "--set", "patience=3", "--set", "batch_size=16", "--set", "learning_rate=0.01"];

fn dcnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcnet")).args(args).current_dir(dir).env_remove("DCNET_SEED").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, name: &str, seed: &str) {
    ok(&dcnet(&["synth", "--trials", "32", "--channels", "3", "--samples", "64", "--classes", "2", "--seed", seed, "--out", name], dir));
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcnet(&["train", "--data", "absent.eegt", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.eegt"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcnet(&["summary", "--set", "colour=3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.eegt", "1");
    synth(dir.path(), "val.eegt", "2");
    let mut args = vec!["train", "--data", "train.eegt", "--val", "val.eegt", "--out", "run", "--seed", "4"];
    args.extend(TINY);
    let printed = ok(&dcnet(&args, dir.path()));
    assert!(printed.contains("preset = \"tiny\"") && printed.contains("val_accuracy = "), "{printed}");
    for f in ["checkpoint.dcnk", "history.tsv", "config.toml", "report.txt"] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }
    let report = ok(&dcnet(&["eval", "--data", "val.eegt", "--checkpoint", "run/checkpoint.dcnk", "--out", "eval.txt"], dir.path()));
    assert!(report.starts_with("# dcnet evaluation") && report.contains("kappa = "), "{report}");
    assert_eq!(std::fs::read_to_string(dir.path().join("eval.txt")).unwrap(), report);

    // a trial set of another geometry is refused
    ok(&dcnet(&["synth", "--trials", "8", "--channels", "5", "--samples", "64", "--classes", "2", "--out", "other.eegt"], dir.path()));
    let out = dcnet(&["eval", "--data", "other.eegt", "--checkpoint", "run/checkpoint.dcnk"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("5 x 64"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.eegt", "1");
    let mut flag = vec!["train", "--data", "train.eegt", "--out", "flag", "--seed", "9"];
    flag.extend(TINY);
    ok(&dcnet(&flag, dir.path()));
    let mut env = vec!["train", "--data", "train.eegt", "--out", "env"];
    env.extend(TINY);
    let out = Command::new(env!("CARGO_BIN_EXE_dcnet")).args(&env).current_dir(dir.path()).env("DCNET_SEED", "9").output().unwrap();
    ok(&out);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("checkpoint.dcnk")).unwrap();
    assert_eq!(read("flag"), read("env"));
}

#[test]
fn synth_is_deterministic_and_csv_converts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "a.eegt", "3");
    synth(dir.path(), "b.eegt", "3");
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.eegt"), read("b.eegt"));
    ok(&dcnet(&["synth", "--trials", "32", "--channels", "3", "--samples", "64", "--classes", "2", "--seed", "3", "--csv", "--out", "csv"], dir.path()));
    ok(&dcnet(&["convert", "--csv-dir", "csv", "--out", "c.eegt"], dir.path()));
    // trials survive bit for bit; metadata records the source
    let a = dcnet::eegt::load_trials(&dir.path().join("a.eegt")).unwrap();
    let c = dcnet::eegt::load_trials(&dir.path().join("c.eegt")).unwrap();
    let bits = |s: &dcnet_core::data::TrialSet| s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&c));
    assert_eq!(a.labels(), c.labels());
}

#[test]
fn ragged_csv_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("csv");
    std::fs::create_dir(&csv).unwrap();
    std::fs::write(csv.join("trial_0_0.csv"), "1,2,3\n4,5,6\n").unwrap();
    std::fs::write(csv.join("trial_1_1.csv"), "1,2,3\n4,5\n").unwrap();
    let out = dcnet(&["convert", "--csv-dir", "csv", "--out", "x.eegt"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial_1_1.csv"));
}

#[test]
fn corrupt_trial_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.eegt"), b"NOPE\x01\x00\x00\x00").unwrap();
    let out = dcnet(&["eval", "--data", "bad.eegt", "--checkpoint", "bad.eegt"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn window_range_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.eegt", "1");
    let mut args = vec!["sweep-windows", "--data", "train.eegt", "--n-from", "2", "--n-to", "9"];
    args.extend(TINY);
    let out = dcnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fuse_width (8)"));
}

#[test]
fn sweep_emits_one_row_per_window_count() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.eegt", "1");
    let mut args = vec!["sweep-windows", "--data", "train.eegt", "--n-from", "1", "--n-to", "3", "--seed", "2"];
    args.extend(TINY);
    let text = ok(&dcnet(&args, dir.path()));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n_windows\taccuracy\tkappa\tval_loss\tepochs");
    let labels: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(labels, ["1", "2", "3"]);
    assert_eq!(text, ok(&dcnet(&args, dir.path())));
}

#[test]
fn gradcheck_model_scope_passes() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&dcnet(&["gradcheck", "--scope", "model"], dir.path()));
    assert!(text.lines().any(|l| l.starts_with("PASS sp.fuse.w")), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn summary_shows_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&dcnet(&["summary"], dir.path()));
    for s in ["(1125, 22, 1)", "(140, 1, 16)", "(420, 1, 16)", "(1, 16, 32)", "6 x (27, 16)", "trainable parameters: 21064"] {
        assert!(text.contains(s), "{s}\n{text}");
    }
    let eegnet = ok(&dcnet(&["summary", "--eegnet", "--records"], dir.path()));
    assert!(eegnet.contains("params=2548") || eegnet.contains("params = 2548"), "{eegnet}");
}
