use std::path::Path;
use std::process::{Command, Output};

fn ghs(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ghs"));
    cmd.args(args).env_remove("GHS_THREADS");
    if let Some(t) = threads {
        cmd.env("GHS_THREADS", t);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn simulate_args(dir: &Path) -> Vec<String> {
    [
        "simulate", "--preset", "hubs100", "--n", "60", "--datasets", "2", "--burnin", "5", "--nmc", "10",
        "--seed", "3", "--roc", "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([dir.to_string_lossy().into_owned()])
    .collect()
}

fn run_simulate(dir: &Path, threads: &str) -> Output {
    let args = simulate_args(dir);
    let refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    ghs(&refs, Some(threads))
}

#[test]
fn simulate_output_is_independent_of_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_simulate(a.path(), "1");
    assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(code(&run_simulate(b.path(), "2")), 0);
    for f in ["truth.csv", "metrics.csv", "summary.csv", "roc.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    assert!(std::fs::read_to_string(a.path().join("timing.log")).unwrap().contains("threads=1"));
    let stdout = String::from_utf8_lossy(&ra.stdout);
    assert!(stdout.contains("steins_loss"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = ghs(&["simulate", "--preset", "nosuch", "--out", d], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nosuch"));
    assert_eq!(code(&ghs(&["simulate", "--preset", "hubs100", "--p", "50", "--out", d], None)), 2);
    assert_eq!(code(&ghs(&["simulate", "--datasets", "0", "--out", d], None)), 2);
    assert_eq!(code(&ghs(&["simulate", "--nmc", "10", "--datasets", "1", "--out", d], Some("zero"))), 2);
    // clap usage errors also exit 2
    assert_eq!(code(&ghs(&["roc", "--chain", "x.ghs"], None)), 2);
    assert_eq!(code(&ghs(&["bogus"], None)), 2);
}

#[test]
fn io_and_format_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("o");
    let out = out.to_str().unwrap();
    assert_eq!(code(&ghs(&["estimate", d.join("missing.csv").to_str().unwrap(), "--out", out], None)), 4);
    let bad = d.join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    assert_eq!(code(&ghs(&["estimate", bad.to_str().unwrap(), "--out", out], None)), 4);
    let junk = d.join("junk.ghs");
    std::fs::write(&junk, b"not an archive").unwrap();
    let truth = d.join("truth.csv");
    std::fs::write(&truth, "1,0\n0,1\n").unwrap();
    let r = ghs(
        &["roc", "--chain", junk.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", out],
        None,
    );
    assert_eq!(code(&r), 4);
}

#[test]
fn constant_column_warns_then_fails_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("x,y,z\n");
    for k in 0..20 {
        text.push_str(&format!("{},{},5\n", k as f64 * 0.3 - 2.0, ((k * 7) % 11) as f64 * 0.2));
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let r = ghs(
        &["estimate", data.to_str().unwrap(), "--burnin", "5", "--nmc", "10", "--out", out.to_str().unwrap()],
        None,
    );
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("column 2 has zero variance"), "{stderr}");
    assert_eq!(code(&r), 3, "{stderr}");
}

#[test]
fn estimate_then_roc_from_archive() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::new();
    for k in 0..40u32 {
        let a = ((k * 37) % 17) as f64 / 17.0 - 0.5;
        let b = ((k * 11) % 13) as f64 / 13.0 - 0.5;
        let c = ((k * 5) % 7) as f64 / 7.0 - 0.5;
        text.push_str(&format!("{a},{},{c}\n", a + 0.3 * b));
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let r = ghs(&["estimate", data.to_str().unwrap(), "--burnin", "20", "--nmc", "200", "--out", o], None);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let truth = dir.path().join("truth.csv");
    std::fs::write(&truth, "1,0.4,0\n0.4,1,0\n0,0,1\n").unwrap();
    let r = ghs(
        &[
            "roc",
            "--chain",
            out.join("chain.ghs").to_str().unwrap(),
            "--truth",
            truth.to_str().unwrap(),
            "--out",
            o,
        ],
        None,
    );
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let roc = std::fs::read_to_string(out.join("roc.csv")).unwrap();
    assert_eq!(roc.lines().count(), 1 + 99);
}
