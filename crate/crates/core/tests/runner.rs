//! End-to-end runs of the experiment driver.

use std::fs;

use cluster_spt::lattice::BoundaryKind;
use cluster_spt::mc::{Method, Schedule};
use cluster_spt::runner::{run, ExperimentConfig, ExperimentKind, LatticeSpec, ModeKind, MANIFEST};

fn in_dir(mut c: ExperimentConfig, dir: &std::path::Path) -> ExperimentConfig {
    c.output = Some(dir.to_path_buf());
    c
}

#[test]
fn oracle_suite_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
kind = "oracle-suite"
seed = 3
p_grid = [0.0, 0.2]
p_z_grid = [0.05]

[oracle]
replica_indices = [2, 3]
"#;
    let c = in_dir(ExperimentConfig::from_toml(text).unwrap(), dir.path());
    let s = run(&c).unwrap();
    assert!(s.passed(), "{:?}", s.failures);
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "identity,key,lattice,p_x,p_z,quantum,classical,rel_err,pass");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().all(|r| r.ends_with(",true")));
    for id in ["purity", "replica-trace", "relative-entropy", "strange-correlator", "negativity"] {
        assert!(rows.iter().any(|r| r.starts_with(id)), "{id} missing");
    }
    // fixed decimals
    assert!(rows[0].contains(",0.0000000000,0.0500000000,"));
}

#[test]
fn failing_gate_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::preset(ExperimentKind::OracleSuite);
    c.p_grid = vec![0.3];
    c.p_z_grid = vec![0.0];
    c.oracle.replica_indices = vec![2];
    // tighter than double precision allows
    c.oracle.tolerance = 1e-300;
    let s = run(&in_dir(c, dir.path())).unwrap();
    assert!(!s.passed());
}

#[test]
fn diagnostics_scan_is_byte_identical_on_rerun() {
    let mut c = ExperimentConfig::preset(ExperimentKind::DiagnosticsScan);
    c.lattice = Some(LatticeSpec {
        size: 4,
        boundary: BoundaryKind::Open,
    });
    c.p_grid = vec![0.05, 0.3];
    c.diagnose.mode = ModeKind::MonteCarlo;
    c.diagnose.loop_sides = vec![1];
    c.diagnose.cuts = (1, 3);
    c.schedule = Some(Schedule::new(200, 1_280, Method::Metropolis));
    let out = |c: &ExperimentConfig| {
        let dir = tempfile::tempdir().unwrap();
        let s = run(&in_dir(c.clone(), dir.path())).unwrap();
        assert_eq!(s.files[0].file_name().unwrap(), MANIFEST);
        (
            fs::read(dir.path().join("diagnostics.csv")).unwrap(),
            fs::read(dir.path().join("diagnostics.json")).unwrap(),
        )
    };
    let a = out(&c);
    assert_eq!(a, out(&c));
    let csv = String::from_utf8(a.0).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",monte-carlo")));
}

#[test]
fn invalid_configs_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never");
    for text in [
        "kind = \"figure3\"\np_grid = []\n[lattice]\nsize = 8\n[schedule]\nthermalization = 10\nsweeps = 64\nmethod = \"wolff\"\n",
        "kind = \"critical-scan\"\np_grid = [0.1, 0.2]\n",
        "kind = \"oracle-suite\"\np_grid = [0.6]\n",
        "kind = \"diagnostics-scan\"\np_grid = [0.1]\n[lattice]\nsize = 9\nboundary = \"open\"\n",
    ] {
        let mut c = ExperimentConfig::from_toml(text).unwrap();
        c.output = Some(target.clone());
        assert!(run(&c).is_err(), "{text}");
        assert!(!target.exists());
    }
    assert!(ExperimentConfig::from_toml("kind = \"sweep\"\n").is_err());
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
