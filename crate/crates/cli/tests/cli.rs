use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drddp"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const LQ: &str = r#"
seed = 3
[benchmark]
kind = "lq"
n_x = 3
n_u = 2
n_w = 2
horizon = 12
[tune]
grid = [100.0]
eval_runs = 20
[eval]
runs = 4
samples_per_run = 3
controllers = ["dr-ddp", "box-ddp"]
[bench]
sizes = [2, 3]
"#;

fn run(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn solve_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", LQ);
    let out = dir.path().join("solve");
    let o = run(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(out.join("traj.csv")).lines().count(), 1 + 13);
    assert!(read(out.join("iters.csv")).starts_with("iteration,J_lambda,nominal_cost"));
    let manifest = read(out.join("manifest.toml"));
    assert!(manifest.contains("input_hash"));
    assert!(manifest.contains("traj.csv"));
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "[benchmark]\nkind = \"lq\"\nn_x = \"four\"\n");
    let o = run(&["solve"], &cfg, &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"four\""));
    let missing = run(&["solve"], &dir.path().join("nope.cfg"), &dir.path().join("o"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[benchmark]\nkind = \"kuramoto\"\noscillators = 4\nhorizon = 20\n[solver]\nmax_iters = 1\n";
    let cfg = write_config(dir.path(), "k.cfg", text);
    let o = run(&["solve"], &cfg, &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tune_single_candidate_with_zero_radius() {
    let dir = tempfile::tempdir().unwrap();
    let text = LQ.replace("[tune]", "[solver]\ntheta = 0.0\n[tune]");
    let cfg = write_config(dir.path(), "lq.cfg", &text);
    let out = dir.path().join("tune");
    let o = run(&["tune"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("bounds.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][2], &rows[0][3], "bound must equal the estimate when theta = 0");
    assert_eq!(&rows[0][5], "1");
}

#[test]
fn tune_grid_flag_marks_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", LQ);
    let out = dir.path().join("tune");
    let o = bin()
        .args(["tune", "--grid", "50,100,1000"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(out.join("bounds.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let bounds: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let best = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
    for (r, b) in rows.iter().zip(&bounds) {
        assert_eq!(&r[5] == "1", *b == best);
    }
}

#[test]
fn eval_single_run_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let text = LQ.replace("runs = 4\nsamples_per_run = 3", "runs = 1\nsamples_per_run = 1");
    let cfg = write_config(dir.path(), "lq.cfg", &text);
    let out = dir.path().join("eval");
    let o = bin()
        .args(["eval", "--controller", "box-ddp"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(out.join("summary.csv")).lines().count(), 2);
    assert_eq!(read(out.join("eval.csv")).lines().count(), 2);
}

#[test]
fn eval_three_controllers_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = LQ
        .replace("controllers = [\"dr-ddp\", \"box-ddp\"]", "controllers = [\"dr-ddp\", \"box-ddp\", \"minimax-ddp\"]");
    let cfg = write_config(dir.path(), "lq.cfg", &text);
    let out = dir.path().join("eval");
    let o = run(&["eval"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(out.join("summary.csv"));
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.contains("minimax-ddp"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", LQ);
    for (cmd, files) in [
        ("solve", &["traj.csv", "iters.csv", "policy.csv"][..]),
        ("eval", &["eval.csv", "summary.csv"][..]),
        ("tune", &["bounds.csv"][..]),
    ] {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        assert_eq!(run(&[cmd], &cfg, &a).status.code(), Some(0));
        assert_eq!(run(&[cmd], &cfg, &b).status.code(), Some(0));
        for f in files {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{cmd}/{f}");
        }
        let hash =
            |d: &Path| read(d.join("manifest.toml")).lines().find(|l| l.starts_with("input_hash")).unwrap().to_string();
        assert_eq!(hash(&a), hash(&b));
    }
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", LQ);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["solve"], &cfg, &a).status.code(), Some(0));
    let o = bin().args(["solve", "--seed", "11"]).arg("--config").arg(&cfg).arg("--out").arg(&b).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(read(a.join("traj.csv")), read(b.join("traj.csv")));
    assert!(read(b.join("manifest.toml")).contains("seed = 11"));
}

#[test]
fn bench_rows_follow_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", LQ);
    let out = dir.path().join("bench");
    let o = bin().args(["bench", "--sizes", "2"]).arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(out.join("bench.csv")).lines().count(), 2);
    let o = run(&["bench"], &cfg, &dir.path().join("bench2"));
    assert_eq!(o.status.code(), Some(0));
    let text = read(dir.path().join("bench2").join("bench.csv"));
    let sizes: Vec<usize> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(sizes, vec![2, 3]);
}

#[test]
fn car_cannot_be_swept() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "car.cfg", "[benchmark]\nkind = \"car\"\nhorizon = 10\n");
    let o = run(&["bench"], &cfg, &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("o").join("manifest.toml").exists());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["car.cfg", "kuramoto.cfg", "lq.cfg"] {
        let dir = tempfile::tempdir().unwrap();
        let o = bin()
            .args(["solve", "--seed", "0"])
            .arg("--config")
            .arg(root.join(name))
            .arg("--out")
            .arg(dir.path())
            .arg("--controller")
            .arg("nonexistent")
            .output()
            .unwrap();
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(2));
        assert!(err.contains("unknown controller"), "{name}: {err}");
    }
}
