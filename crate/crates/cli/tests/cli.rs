use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_svcpredict"))
}

fn reference(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../reference").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_reproduces_reference_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus.jsonl");
    let o = run(bin()
        .args(["generate", "--spec"])
        .arg(reference("synthetic.toml"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(reference("corpus.jsonl")).unwrap()
    );
}

#[test]
fn generate_seed_override_changes_placement() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.jsonl");
    let o = run(bin()
        .args(["generate", "--rng-seed", "99", "--spec"])
        .arg(reference("synthetic.toml"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_ne!(
        std::fs::read(&out).unwrap(),
        std::fs::read(reference("corpus.jsonl")).unwrap()
    );
}

#[test]
fn missing_spec_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = run(bin()
        .args(["generate", "--spec"])
        .arg(&missing)
        .arg("--out")
        .arg(tmp.path().join("x.jsonl")));
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
}

#[test]
fn bad_config_value_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["run", "--seed-fraction", "1.5", "--config"])
        .arg(reference("pipeline.toml"))
        .arg("--out-dir")
        .arg(tmp.path().join("out")));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(bin().args(["run", "--no-such-flag"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_twice_is_identical_and_report_reads_it() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("run{i}"));
        let o = run(bin()
            .args(["run", "--config"])
            .arg(reference("pipeline.toml"))
            .arg("--out-dir")
            .arg(&out));
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("port order"));
        dirs.push(out);
    }
    assert_eq!(dir_contents(&dirs[0]), dir_contents(&dirs[1]));

    let o = run(bin().args(["report", "--dir"]).arg(&dirs[0]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("fraction_services"));
    assert!(text.contains("port_app"));
}

#[test]
fn eval_writes_only_evaluation_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eval");
    let o = run(bin()
        .args(["eval", "--config"])
        .arg(reference("pipeline.toml"))
        .arg("--out-dir")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("curve.csv").is_file());
    assert!(out.join("summary.json").is_file());
    assert!(!out.join("model.jsonl").exists());
}

#[test]
fn sweep_runs_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = run(bin()
        .args(["sweep", "--seed-fractions", "0.02,0.05", "--step-prefixes", "16,20", "--config"])
        .arg(reference("pipeline.toml"))
        .arg("--out-dir")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("4 cells, 0 failed"), "{stdout}");
    let cells = std::fs::read_to_string(out.join("sweep/cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 5);
}

#[test]
fn net_feature_ranking_lists_candidates() {
    let o = run(bin()
        .args(["report", "--net-features", "--config"])
        .arg(reference("pipeline.toml")));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() > 2, "{text}");
}
