use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, cmd: &str, out: &str) -> Output {
    let cfg = dir.join(format!("{out}.toml"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_levy-dp"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .unwrap()
}

fn read(dir: &Path, out: &str, file: &str) -> String {
    let p: PathBuf = dir.join(out).join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Data rows of a CSV written by the tool: no comment line, no column header.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RIDGE: &str = r#"
seed = 3

[model]
kind = "ridge"
lambda = 0.5
radius = 1.0
dim = 2

[data]
n = 40

[chain]
eta = 0.05
sigma = 0.5
alpha = 1.5
iters = 100
replicas = 20
"#;

#[test]
fn gaussian_sample_passes_ecf_audit() {
    let dir = TempDir::new().unwrap();
    let cfg = "seed = 11\n[sample]\nalpha = 2.0\ndim = 2\ndraws = 50000\n";
    let o = run(dir.path(), cfg, "sample", "s");
    assert!(o.status.success(), "{}", stderr(&o));
    let audit = read(dir.path(), "s", "audit.csv");
    assert!(
        audit
            .lines()
            .any(|l| l.starts_with("\"ecf[alpha=2") && l.ends_with(",true")),
        "{audit}"
    );
    assert!(audit.starts_with("# levy-dp "));
}

#[test]
fn missing_alpha_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = RIDGE.replace("alpha = 1.5\n", "");
    let o = run(dir.path(), &cfg, "train", "t");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = run(dir.path(), RIDGE, "train", "a");
    let b = run(dir.path(), RIDGE, "train", "b");
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        read(dir.path(), "a", "final.csv"),
        read(dir.path(), "b", "final.csv")
    );
    let other = run(
        dir.path(),
        &RIDGE.replace("seed = 3", "seed = 4"),
        "train",
        "c",
    );
    assert!(other.status.success());
    assert_ne!(
        read(dir.path(), "a", "final.csv"),
        read(dir.path(), "c", "final.csv")
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("x.toml");
    std::fs::write(&cfg, RIDGE).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_levy-dp"))
        .args(["train", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("flag"))
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = run(
        dir.path(),
        &RIDGE.replace("seed = 3", "seed = 4"),
        "train",
        "cfg",
    );
    assert!(o.status.success());
    let body = |s: String| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(
        body(read(dir.path(), "flag", "final.csv")),
        body(read(dir.path(), "cfg", "final.csv"))
    );
}

#[test]
fn n_sweep_delta_times_n_is_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{RIDGE}\n[accountant]\nn_sweep = [100, 1000, 10000]\nd_sweep = []\n");
    let o = run(dir.path(), &cfg, "budget", "b");
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&read(dir.path(), "b", "n_sweep.csv"));
    assert_eq!(r.len(), 3);
    for w in r.windows(2) {
        assert!((w[0][2] / w[1][2] - 1.0).abs() < 1e-12, "{r:?}");
        assert!(w[1][1] < w[0][1]);
    }
    assert!(stderr(&o).contains("NON-RIGOROUS"));
}

#[test]
fn gaussian_budget_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = RIDGE.replace("alpha = 1.5", "alpha = 2.0");
    let o = run(dir.path(), &cfg, "budget", "b");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1/(2-alpha)"), "{}", stderr(&o));
}

#[test]
fn noiseless_training_reaches_stationarity() {
    let dir = TempDir::new().unwrap();
    let cfg = RIDGE.replace("sigma = 0.5", "sigma = 0.0").replace(
        "iters = 100",
        "iters = 2000\ninit = \"zero\"\ntrajectory_stride = 100",
    );
    let o = run(dir.path(), &cfg, "train", "t");
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = rows(&read(dir.path(), "t", "trajectory.csv"));
    let last = traj.last().unwrap();
    assert_eq!(last[0], 2000.0);
    assert!(*last.last().unwrap() <= 1e-8, "{last:?}");
    assert!(traj[0].last().unwrap() > &1e-3);
}

#[test]
fn batch_size_changes_the_chain() {
    let dir = TempDir::new().unwrap();
    let gd = run(
        dir.path(),
        &RIDGE.replace("iters = 100", "iters = 100\nbatch_size = 40"),
        "train",
        "gd",
    );
    let sgd = run(
        dir.path(),
        &RIDGE.replace("iters = 100", "iters = 100\nbatch_size = 1"),
        "train",
        "sgd",
    );
    assert!(gd.status.success() && sgd.status.success());
    assert_ne!(
        read(dir.path(), "gd", "final.csv"),
        read(dir.path(), "sgd", "final.csv")
    );
}

/// Two records on the unit sphere; the neighbour moves the first one as far as
/// the radius allows, which is where the kernel-distance bound is tightest.
const TWO_POINT: &str = r#"
seed = 5

[model]
kind = "ridge"
lambda = 0.5
radius = 1.0
dim = 1

[data]
file = "two_point.txt"

[chain]
eta = 0.05
sigma = 0.5
alpha = 1.5
iters = 100

[verifier]
suites = ["drift", "gamma", "falsification"]
grid_points = 7
reps = 2000
neighbor_index = 0
neighbor_record = [0.0, -1.0]
"#;

#[test]
fn falsification_controls_behave() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("two_point.txt"),
        "# dim=2 kind=ridge\n1,0\n0,1\n",
    )
    .unwrap();
    let o = run(dir.path(), TWO_POINT, "verify", "v");
    assert!(
        o.status.success(),
        "{}\n{}",
        stderr(&o),
        String::from_utf8_lossy(&o.stdout)
    );
    let f = read(dir.path(), "v", "falsification.csv");
    let lines: Vec<&str> = f.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(lines.len(), 5);
    assert!(
        lines.iter().all(|l| l.rsplit(',').nth(2) == Some("true")),
        "{f}"
    );
    assert!(read(dir.path(), "v", "summary.txt").contains("overall: PASS"));
}

#[test]
fn oversized_batch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = RIDGE.replace("sigma = 0.5", "sigma = 0.5\nbatch_size = 41");
    let o = run(dir.path(), &cfg, "verify", "v");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn invalid_grid_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{RIDGE}\n[verifier]\nsuites = [\"drift\"]\ngrid_points = 0\n");
    let o = run(dir.path(), &cfg, "verify", "v");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &format!("{RIDGE}\nbogus = 1\n"), "train", "t");
    assert_eq!(o.status.code(), Some(1));
}
