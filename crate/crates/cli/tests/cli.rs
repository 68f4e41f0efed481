use std::path::Path;
use std::process::{Command, Output};

fn crowdcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdcal")).args(args).output().expect("spawn crowdcal")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("study.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const HEAVISIDE_SWEEP: &str = r#"
[run]
scenario = "heaviside"

[sweep]
methods = ["gd", "pso"]
macroreplications = 2
microreplications = 1
crisp_seeds = 5
max_evaluations = 60

[sweep.gd]
learning_rates = [0.5]
estimators = ["dgo", "pgo"]
samples = [10]
sigmas = [0.1]

[sweep.pso]
particles = [5]
lhc_points = 1
neighborhoods = [0]
"#;

#[test]
fn sweep_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), HEAVISIDE_SWEEP);
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy();
    let o = crowdcal(&["sweep", "--config", &cfg, "--output-dir", &out_s, "--workers", "2", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("6 runs, 0 failed"));
    assert_eq!(std::fs::read_dir(out.join("traces")).unwrap().count(), 6);
    for f in ["summary.csv", "manifest.csv", "configs.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // replay picks up the saved config from the output directory
    for id in ["gd-000-m0", "gd-001-m1", "pso-000-m1"] {
        let o = crowdcal(&["replay", id, "--output-dir", &out_s]);
        assert!(o.status.success(), "{id}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("reproduced exactly"));
    }
    let o = crowdcal(&["replay", "gd-000-m9", "--output-dir", &out_s]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fidelity_writes_csv_and_mae_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let cfg = write_config(
        dir.path(),
        "[run]\nscenario = \"heaviside\"\n[fidelity]\npoints = 5\nlo = -1.0\nhi = 1.0\nsigma = 0.0\npgo_sigma = 0.1\nsamples = [10, 100]\n",
    );
    let o = crowdcal(&["fidelity", "-c", &cfg, "-o", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("fidelity.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ipa") && stdout.contains("pgo"));
}

#[test]
fn reference_then_bottleneck_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let reference = dir.path().join("ref.csv").to_string_lossy().into_owned();
    let cfg = write_config(
        dir.path(),
        "[bottleneck]\nduration = 3.0\n[reference]\nseeds = 3\n[sweep]\nmethods = [\"ga\"]\nmacroreplications = 1\nmicroreplications = 1\ncrisp_seeds = 2\n[sweep.ga]\npopulation = [4]\nelitism = [true]\nmutations = [\"additive\"]\n",
    );
    let o = crowdcal(&["make-reference", "-c", &cfg, "--reference", &reference]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&reference).unwrap().starts_with("# scenario=bottleneck"));
    let o = crowdcal(&["sweep", "-c", &cfg, "--reference", &reference, "-o", &out, "--budget", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("traces/ga-000-m0.csv").exists());
}

#[test]
fn startup_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let missing = dir.path().join("missing.csv").to_string_lossy().into_owned();
    let o = crowdcal(&["sweep", "--scenario", "bottleneck", "--reference", &missing, "-o", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing file"));
    let o = crowdcal(&["sweep", "--scenario", "nowhere"]);
    assert!(!o.status.success());
    let bad = write_config(dir.path(), "[run]\nspeed = 3\n");
    assert_eq!(crowdcal(&["fidelity", "-c", &bad]).status.code(), Some(2));
}
