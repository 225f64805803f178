use std::fs;

use rcplab::algorithms::Regime;
use rcplab::compress::CompressorKind;
use rcplab::harness::{aggregate, execute, parse_config, preset, read_header, HarnessError, RunConfig, PRESETS};
use tempfile::tempdir;

fn quick(name: &str) -> RunConfig {
    let mut c = preset(name).unwrap();
    c.horizon = 40;
    c.problem.f_star = Some(0.0);
    c
}

fn header_value<'a>(h: &'a [(String, String)], key: &str) -> Option<&'a str> {
    h.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[test]
fn rcp_sgd_2_preset_values() {
    let c = preset("rcp-sgd-2").unwrap();
    assert_eq!(c.compressor.kind, CompressorKind::QuantizerImproved { bits: 2 });
    assert_eq!(c.schedule.regime, Regime::Table1);
    assert_eq!(c.schedule.gamma, Some(2.0));
    assert_eq!(c.schedule.omega, Some(0.5));
    assert_eq!(c.schedule.eta, Some(0.08));
    assert_eq!(c.schedule.eta_power, Some(0.01));
    assert_eq!(c.schedule.alpha_x, Some(0.8));
    assert_eq!(c.n, 10);
    assert_eq!(c.graph.kind, "ring");
}

#[test]
fn every_preset_round_trips() {
    for p in PRESETS {
        let c = preset(p).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c, "{p}");
    }
    assert!(matches!(preset("rcp-sgd-9"), Err(HarnessError::UnknownPreset(_))));
}

#[test]
fn text_round_trip() {
    let text = "preset = \"rcp-sgd-4\"\nT = 300\nseeds = [1, 2, 3]\n[problem]\nlambda = 0.01\n[schedule]\nh_seq = \"constant\"\n";
    let c = parse_config(text).unwrap();
    assert_eq!(c.horizon, 300);
    assert_eq!(c.seeds, vec![1, 2, 3]);
    assert_eq!(c.problem.lambda, Some(0.01));
    assert_eq!(parse_config(&c.to_text()).unwrap(), c);
}

#[test]
fn negative_horizon_names_key() {
    match parse_config("T = -1") {
        Err(HarnessError::Key { key, .. }) => assert_eq!(key, "T"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config("horizon = 5"), Err(HarnessError::UnknownKey(_))));
    assert!(parse_config("seeds = [1, 1]").is_err());
}

#[test]
fn three_seeds_write_five_files() {
    let dir = tempdir().unwrap();
    let mut c = quick("rcp-sgd-3");
    c.seeds = vec![4, 5, 6];
    let s = execute(&c, dir.path()).unwrap();
    assert_eq!(s.files.len(), 5);
    let mut names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["aggregate.csv", "header.csv", "trace_seed4.csv", "trace_seed5.csv", "trace_seed6.csv"]);
    let trace = fs::read_to_string(dir.path().join("trace_seed4.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "step,consensus_err,grad_norm_sq,opt_gap,residual,bits_cum,wall_ms");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let mut c = quick("rcp-sgd-5");
    c.seeds = vec![0, 7];
    execute(&c, a.path()).unwrap();
    execute(&c, b.path()).unwrap();
    for f in ["trace_seed0.csv", "trace_seed7.csv", "aggregate.csv", "header.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn aggregate_is_the_hand_average() {
    let dir = tempdir().unwrap();
    let mut c = quick("rcp-sgd-4");
    c.seeds = vec![1, 2, 3, 4];
    let s = execute(&c, dir.path()).unwrap();
    for row in &s.aggregate {
        let vals: Vec<f64> = s.outcomes.iter().map(|(_, o)| o.trace.iter().find(|r| r.step == row.step).unwrap().residual).collect();
        let m = vals.iter().sum::<f64>() / 4.0;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0).sqrt();
        let (am, asd) = row.stats[3].unwrap();
        assert!((am - m).abs() <= 1e-12 * m.abs().max(1.0));
        assert!((asd - sd).abs() <= 1e-12 * sd.abs().max(1.0));
        assert_eq!(row.count, 4);
    }
}

#[test]
fn truncated_seeds_drop_out_of_the_count() {
    let mut c = quick("dsgd");
    c.horizon = 30;
    let long: Vec<_> = rcplab::harness::run_seed(&c, &rcplab::harness::prepare(&c, None).unwrap(), 0).unwrap().trace;
    let short = &long[..2];
    let rows = aggregate(&[&long, short]);
    assert_eq!(rows[0].count, 2);
    assert_eq!(rows.last().unwrap().count, 1);
}

#[test]
fn header_lists_filled_defaults() {
    let dir = tempdir().unwrap();
    let mut c = quick("rcp-sgd-1");
    c.compressor.privacy_q = 0.3;
    execute(&c, dir.path()).unwrap();
    let h = read_header(&dir.path().join("header.csv")).unwrap();
    for key in ["default.problem.lambda", "default.problem.alpha", "default.schedule.alpha_x", "default.schedule.h"] {
        assert!(header_value(&h, key).is_some(), "{key} missing");
    }
    let delta: f64 = header_value(&h, "privacy.delta").unwrap().parse().unwrap();
    assert!((delta - 0.7).abs() < 1e-12);
    assert!(header_value(&h, "dataset.encoding").is_some());
}

#[test]
fn theorem_regime_header_has_ledger_and_defaults() {
    let base = "problem.kind = \"pl_quadratic\"\nd = 5\nn = 4\nT = 20\nproblem.batch = 1\ncompressor.kind = \"identity\"\nschedule.regime = \"theorem3\"\n";
    let dir = tempdir().unwrap();
    let manual = format!("{base}schedule.beta0 = 0.004\nschedule.beta1 = 2.0\nschedule.beta2 = 0.2\nschedule.t1 = 100.0\nschedule.h0 = 0.005\nschedule.alpha_x = 0.5\n");
    let s = execute(&parse_config(&manual).unwrap(), dir.path()).unwrap();
    assert!(s.ledger.is_some());
    let h = read_header(&dir.path().join("header.csv")).unwrap();
    for key in ["default.schedule.c_tilde", "default.problem.noise_std", "default.ledger.sigma_bar", "problem.noise", "ledger.feasible"] {
        assert!(header_value(&h, key).is_some(), "{key} missing");
    }

    let dir = tempdir().unwrap();
    let auto = format!("{base}problem.noise_std = 0.3\nschedule.auto = true\n");
    execute(&parse_config(&auto).unwrap(), dir.path()).unwrap();
    let h = read_header(&dir.path().join("header.csv")).unwrap();
    for key in ["default.schedule.alpha_x", "auto.schedule.beta0", "auto.schedule.t1", "auto.schedule.c_tilde", "sigma_sq_estimate"] {
        assert!(header_value(&h, key).is_some(), "{key} missing");
    }
    assert_eq!(header_value(&h, "ledger.feasible"), Some("true"));
}
