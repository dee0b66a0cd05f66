use std::fs;

use landau_nls::diagnostics::CSV_COLUMNS;
use landau_nls::experiments::{cmd_check, cmd_simulate, parse_settings, Command, ExperimentSpec};
use landau_nls::field::{load_snapshot, SNAPSHOT_MAGIC};
use landau_nls::Error;

const GOLDEN_HEADER: &str = "t,l2,sigma0_s,z,s_norm,s_plus,mass,level_energy,ang_momentum,xT_diag";

fn spec_in(dir: &std::path::Path, extra: &str) -> ExperimentSpec {
    let text = format!("t_end = 0.2\nstride = 5\nout = {}\n{extra}", dir.display());
    ExperimentSpec::from_settings(Command::Simulate, &parse_settings(&text).unwrap()).unwrap()
}

#[test]
fn csv_header_is_stable() {
    assert_eq!(CSV_COLUMNS.join(","), GOLDEN_HEADER);
    let dir = tempfile::tempdir().unwrap();
    cmd_simulate(&spec_in(dir.path(), ""), &mut |_| {}).unwrap();
    let csv = fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), GOLDEN_HEADER);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 10);
        for f in fields {
            let mantissa = f.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.len(), 18, "{f}");
            f.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn meta_and_snapshots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_in(dir.path(), "");
    let report = cmd_simulate(&spec, &mut |_| {}).unwrap();
    let meta = fs::read_to_string(dir.path().join("simulate.meta")).unwrap();
    assert!(meta.contains(&format!("config_hash = {}", spec.config_hash())));
    assert!(meta.contains("flagged_rows = 0"));
    let bytes = fs::read(dir.path().join("final.mnls")).unwrap();
    assert_eq!(&bytes[..5], SNAPSHOT_MAGIC);
    let last = load_snapshot(dir.path().join("final.mnls")).unwrap();
    assert_eq!(last.coeffs(), report.trajectory.last().coeffs());
}

#[test]
fn hash_and_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sa, sb) = (spec_in(a.path(), "init = random\nseed = 4"), spec_in(b.path(), "init = random\nseed = 4"));
    assert_eq!(sa.config_hash(), sb.config_hash());
    cmd_simulate(&sa, &mut |_| {}).unwrap();
    cmd_simulate(&sb, &mut |_| {}).unwrap();
    for name in ["simulate.csv", "simulate.meta", "final.mnls"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let sc = spec_in(a.path(), "init = random\nseed = 5");
    assert_ne!(sa.config_hash(), sc.config_hash());
}

#[test]
fn linear_flow_keeps_norms() {
    let dir = tempfile::tempdir().unwrap();
    let rep = cmd_simulate(&spec_in(dir.path(), "lambda = 0\nadmixture = 0.5"), &mut |_| {}).unwrap();
    let rows = &rep.trajectory.diagnostics.rows;
    for r in rows {
        assert!((r.s_norm - rows[0].s_norm).abs() <= 1e-12 * rows[0].s_norm);
        assert!((r.mass - rows[0].mass).abs() <= 1e-12 * rows[0].mass);
    }
}

#[test]
fn blowup_is_a_numerical_abort() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_simulate(&spec_in(dir.path(), "alpha = 1e200"), &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::NumericalBlowup { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert_eq!(Error::Config("x".into()).exit_code(), 1);
    assert_eq!(Error::InvariantFailure("x".into()).exit_code(), 3);
}

#[test]
fn check_report_lists_every_item() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::defaults(Command::Check);
    spec.out_dir = dir.path().to_path_buf();
    let report = cmd_check(&spec, &mut |_| {}).unwrap();
    let csv = fs::read_to_string(dir.path().join("check.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.items.len() + 1);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    for name in ["theta_rule_k_nmax_aliases", "mutation_conj_sign_detected", "f_av_matches_oracle"] {
        assert!(csv.contains(name), "{name}");
    }
}
