use std::fs;
use std::process::Command as Process;

use nlsq_core::ensemble::{sample_mu_s, EnsembleSpec};
use nlsq_core::{Mode, SpectralField};
use nlsq_lab::config::Value;
use nlsq_lab::formats::{field_from_json, field_to_json, sha256_hex};
use nlsq_lab::{dispatch, execute, parse_config, parse_config_for, Command, ConfigError, RunRecord, Status};
use num_complex::Complex64;
use proptest::prelude::*;

const SAMPLE: &str = "command = sample\ns = 2.5\ncutoff = 3\n";

fn with_out(text: &str, dir: &std::path::Path) -> String {
    format!("{text}out = {}\n", dir.display())
}

#[test]
fn minimal_config_round_trips() {
    let cfg = parse_config(SAMPLE).unwrap();
    assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn type_errors_name_key_and_line() {
    let err = parse_config("command = sample\ns = 2.5\ncutoff = banana\n").unwrap_err();
    match &err {
        ConfigError::Type { line, key, .. } => assert_eq!((*line, key.as_str()), (3, "cutoff")),
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().contains("cutoff"));
}

#[test]
fn unknown_and_missing_keys_are_rejected() {
    let err = parse_config("command = sample\ns = 2.5\ncutof = 3\n").unwrap_err();
    assert!(matches!(err, ConfigError::UnknownKey { line: 3, .. }));
    let err = parse_config("command = sample\ns = 2.5\n").unwrap_err();
    assert!(matches!(err, ConfigError::Missing { ref key, .. } if key == "cutoff"));
    assert!(matches!(parse_config("command = sample\ncutoff\n"), Err(ConfigError::Syntax { line: 2, .. })));
    assert!(matches!(parse_config("command = sampel\n"), Err(ConfigError::UnknownCommand { line: 1, .. })));
}

#[test]
fn duplicate_key_last_wins_with_warning_in_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out("command = sample\ns = 2.5\ncutoff = 2\ncutoff = 3\n", dir.path());
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.int("cutoff"), 3);
    let record = dispatch(&cfg).unwrap();
    assert_eq!(record.warnings.len(), 1);
    assert!(record.warnings[0].contains("line 4") && record.warnings[0].contains("cutoff"));
}

#[test]
fn record_and_manifest_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&with_out("command = sample\ns = 2.5\ncutoff = 3\nsamples = 4\n", dir.path())).unwrap();
    dispatch(&cfg).unwrap();
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(raw["schema"], 1);
    assert_eq!(raw["status"], "pass");
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["file"] == "record.json"));
    assert!(files.iter().any(|f| f["file"] == "samples.csv"));
    for f in files {
        let bytes = fs::read(dir.path().join(f["file"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    // Stored samples read back exactly.
    let spec = EnsembleSpec::new(2.5, 3, 4, 0).unwrap();
    let lines = fs::read_to_string(dir.path().join("samples.jsonl")).unwrap();
    for (i, line) in lines.lines().enumerate() {
        assert_eq!(field_from_json(line).unwrap(), sample_mu_s(&spec, i).unwrap());
    }
}

#[test]
fn coarse_evolution_fails_but_still_writes_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out("command = evolve\ncutoff = 4\ndt = 0.25\nt_final = 1\n", dir.path());
    let record = dispatch(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(record.status, Status::Fail);
    assert_ne!(record.exit_code(), 0);
    let stored: RunRecord = serde_json::from_slice(&fs::read(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(stored.checks, record.checks);
    assert!(dir.path().join("trajectory.jsonl").exists());
}

#[test]
fn errors_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out("command = sample\ns = 2.5\ncutoff = 3\nsamples = 10\nmax_samples = 5\n", dir.path());
    let record = dispatch(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(record.status, Status::Error);
    assert!(record.error.as_deref().unwrap().contains("budget"));
}

#[test]
fn payloads_do_not_depend_on_repetition_or_workers() {
    let text = "command = moment-scan\nfunctional = qn\ncutoff = 2\nsamples = 400\np_values = 2, 4\n";
    let mut cfg = parse_config(text).unwrap();
    cfg.workers = 1;
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    cfg.workers = 3;
    let c = execute(&cfg).unwrap();
    let bytes = |r: &nlsq_lab::Run| serde_json::to_vec(&r.record.payload).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(bytes(&a), bytes(&c));
    assert_eq!(a.files, c.files);
}

#[test]
fn replaying_the_record_config_reproduces_the_payload() {
    let cfg = parse_config("command = bound-eval\nt = 2\n").unwrap();
    let first = execute(&cfg).unwrap().record;
    let replay = execute(&parse_config(&first.config).unwrap()).unwrap().record;
    assert_eq!(serde_json::to_vec(&first.payload).unwrap(), serde_json::to_vec(&replay.payload).unwrap());
}

#[test]
fn completed_cancellation_passes() {
    let cfg = parse_config("command = cancellation-verify\nfields = 4\nset = completed\n").unwrap();
    let record = execute(&cfg).unwrap().record;
    assert_eq!(record.status, Status::Pass, "{:?}", record.checks);
    assert!(record.check("im_d_completed").unwrap().value <= 1e-12);
}

#[test]
fn every_command_has_a_runnable_default_shape() {
    for c in Command::ALL {
        let required: Vec<_> = c.keys().iter().filter(|k| k.default.is_none()).map(|k| k.name).collect();
        assert!(required.len() <= 4, "{c}: {required:?}");
        assert!(parse_config_for("", Some(c)).is_ok() == required.is_empty());
    }
}

fn run_cli(dir: &std::path::Path, env_seed: Option<&str>, flag_seed: Option<&str>) -> RunRecord {
    let conf = dir.join("run.conf");
    fs::write(&conf, "s = 2.5\ncutoff = 2\nseed = 1\n").unwrap();
    let out = dir.join("out");
    let mut cmd = Process::new(env!("CARGO_BIN_EXE_nlsq"));
    cmd.args(["sample", "--config"]).arg(&conf).arg("--out").arg(&out).env_remove("NLSQ_SEED");
    cmd.env_remove("NLSQ_WORKERS").env_remove("NLSQ_OUT");
    if let Some(s) = env_seed {
        cmd.env("NLSQ_SEED", s);
    }
    if let Some(s) = flag_seed {
        cmd.args(["--seed", s]);
    }
    let status = cmd.output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    serde_json::from_slice(&fs::read(out.join("record.json")).unwrap()).unwrap()
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let seed_of = |r: &RunRecord| parse_config(&r.config).unwrap().seed;
    assert_eq!(seed_of(&run_cli(dir.path(), None, None)), 1);
    assert_eq!(seed_of(&run_cli(dir.path(), Some("2"), None)), 2);
    assert_eq!(seed_of(&run_cli(dir.path(), Some("2"), Some("3"))), 3);
}

#[test]
fn cli_exit_status_follows_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "cutoff = 4\ndt = 0.25\nt_final = 1\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_nlsq"))
        .args(["evolve", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    fs::write(&conf, "cutoff = seven\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_nlsq")).args(["evolve", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutoff"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_json_round_trip_is_exact(re in prop::collection::vec(-1e3f64..1e3, 13), im in prop::collection::vec(-1e-8f64..1e-8, 13)) {
        let modes = SpectralField::zeros(2).ball().modes().to_vec();
        let u = SpectralField::from_modes(2, modes.iter().zip(re.iter().zip(&im)).map(|(&k, (&a, &b))| (k, Complex64::new(a, b)))).unwrap();
        prop_assert_eq!(field_from_json(&field_to_json(&u)).unwrap(), u);
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), cutoff in 1u64..40, samples in 1u64..100, s in 1.01f64..10.0) {
        let text = format!("command = sample\ns = {s}\ncutoff = {cutoff}\nsamples = {samples}\nseed = {seed}\n");
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(&cfg.params["s"], &Value::Float(s));
        prop_assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}

#[test]
fn mode_tuples_survive_negative_coordinates() {
    let u = SpectralField::from_modes(3, [(Mode::new(-3, 0), Complex64::new(0.1, -0.2))]).unwrap();
    assert_eq!(field_from_json(&field_to_json(&u)).unwrap(), u);
}
