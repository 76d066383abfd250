use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfrl")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        format!(
            r#"
name = "small"
seeds = [0, 1]
m = [2]
out = "{}"

[env]
kind = "synthetic"
num_states = 10
num_actions = 2

[agent]
episodes = 60
eval_every = 30
eval_episodes = 10
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn infinite_snr_copies_the_high_fidelity_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mfrl(&["generate-env", "--out", out, "--states", "12", "--actions", "3", "--snr", "inf", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hi = fs::read_to_string(dir.path().join("hi.json")).unwrap();
    let lo = fs::read_to_string(dir.path().join("lo.json")).unwrap();
    assert_eq!(hi, lo);
    let spec = mfrl_core::MdpSpec::from_json(&hi).unwrap();
    assert_eq!((spec.num_states(), spec.num_actions()), (13, 3));
}

#[test]
fn noisy_low_fidelity_differs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(mfrl(&["generate-env", "--out", out, "--snr", "-3"]).status.success());
    let hi = fs::read_to_string(dir.path().join("hi.json")).unwrap();
    let lo = fs::read_to_string(dir.path().join("lo.json")).unwrap();
    assert_ne!(hi, lo);
}

#[test]
fn nas_table_generation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mfrl(&["generate-env", "--kind", "nas", "--out", out, "--epochs", "3"]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("reward_table.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("arch_index,epoch,accuracy"));
    assert_eq!(text.lines().count(), 1 + 3 * 15_625);
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = mfrl(&["sweep", "--config", &cfg, "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("4 runs, 0 failed"));
    let out = dir.path().join("out");
    assert!(out.join("manifest.json").is_file());
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 4);

    let merged = out.join("merged.csv");
    let report_csv = dir.path().join("report.csv");
    let o = mfrl(&[
        "report",
        merged.to_str().unwrap(),
        "--window",
        "2",
        "--out",
        report_csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("algo"));
    assert!(text.contains("mcrl") && text.contains("mfmcrl"));
    assert_eq!(fs::read_to_string(report_csv).unwrap().lines().count(), 3);
}

#[test]
fn train_runs_one_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("train");
    let o = mfrl(&[
        "train",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--algo",
        "mfmcrl",
        "--snr",
        "-10",
        "--m",
        "1",
        "--run-seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/mfmcrl_snrn10_m1_seed3.csv").is_file());
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 1);
}

#[test]
fn quick_verification_writes_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfrl(&["verify", "--quick", "--jobs", "1", "--out", dir.path().to_str().unwrap()]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn errors_exit_with_failure() {
    let o = mfrl(&["report", "/nonexistent/merged.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = mfrl(&["sweep", "--fidelity-epoch", "10"]);
    assert_eq!(o.status.code(), Some(1));

    let o = mfrl(&["train", "--algo", "sarsa"]);
    assert_eq!(o.status.code(), Some(1));

    assert!(!mfrl(&["no-such-command"]).status.success());
}
