use std::path::{Path, PathBuf};

use dualsmooth::scenario::{load_scenario, parse_measurements_csv, parse_penalty_spec, parse_samples_csv, parse_scenario};
use dualsmooth::{Error, Penalty};

fn scenario_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

fn minimal(measurement_penalty: &str) -> String {
    format!(
        r#"{{"system": {{"T": 2, "F": [[1]], "H": [[1]]}},
            "process_penalty": {{"kind": "quadratic", "M": [[1]]}},
            "measurement_penalty": {measurement_penalty},
            "measurements": {{"values": [[0.5], [1.0], [1.5]]}}}}"#
    )
}

#[test]
fn checked_in_scenarios_resolve() {
    for name in ["scenario_ex.json", "scenario_gaussian.json"] {
        let s = load_scenario(&scenario_dir().join(name), None).unwrap();
        assert_eq!(s.problem.system().horizon(), 10);
        assert!(s.simulation.is_some());
    }
    let ex = load_scenario(&scenario_dir().join("scenario_ex.json"), None).unwrap();
    assert!(ex.density.is_some());
}

#[test]
fn malformed_json_reports_position() {
    let err = parse_scenario("{\n  \"system\": {\n    \"T\": 1,\n  }\n}").unwrap_err();
    let Error::Scenario(msg) = err else { panic!("{err:?}") };
    assert!(msg.contains("line 4"), "{msg}");
}

#[test]
fn type_errors_and_unknown_kinds_are_rejected() {
    assert!(parse_penalty_spec(r#"{"kind": "huber", "k": 1}"#).is_err());
    assert!(parse_penalty_spec(r#"{"kind": "quadratic", "M": "one"}"#).is_err());
    assert!(parse_penalty_spec(r#"{"kind": "pwl", "knots": [0, 1]}"#).is_err());
    assert!(parse_penalty_spec(r#"{"kind": "zero", "extra": 1}"#).is_err());
    let noise = minimal(r#"{"kind": "zero"}"#).replace(
        r#"{"values": [[0.5], [1.0], [1.5]]}"#,
        r#"{"simulate": {"process_noise": {"kind": "none", "scale": 1}, "measurement_noise": {"kind": "none"}, "seed": 1}}"#,
    );
    assert!(parse_scenario(&noise).is_err());
}

#[test]
fn invalid_penalty_values_fail_at_resolve() {
    let dir = Path::new(".");
    let unsorted = parse_scenario(&minimal(r#"{"kind": "pwl", "knots": [1, 0], "values": [0, 0]}"#)).unwrap();
    assert!(unsorted.resolve(dir, None).is_err());
    let not_psd = parse_scenario(&minimal(r#"{"kind": "quadratic", "M": [[-1]]}"#)).unwrap();
    assert!(not_psd.resolve(dir, None).is_err());
    let wrong_dim = parse_scenario(&minimal(r#"{"kind": "quadratic", "M": [[1, 0], [0, 1]]}"#)).unwrap();
    assert!(wrong_dim.resolve(dir, None).is_err());
    let ok = parse_scenario(&minimal(r#"{"kind": "pwl", "knots": [-1, 0, 2], "values": [1, 0, 2]}"#)).unwrap();
    let s = ok.resolve(dir, None).unwrap();
    assert!(matches!(s.problem.measurement().block(0), Penalty::PiecewiseLinear(_)));
}

#[test]
fn measurement_rows_must_match_horizon() {
    let text = minimal(r#"{"kind": "quadratic", "M": [[1]]}"#).replace("[[0.5], [1.0], [1.5]]", "[[0.5], [1.0]]");
    assert!(parse_scenario(&text).unwrap().resolve(Path::new("."), None).is_err());
}

#[test]
fn csv_decoders() {
    assert_eq!(parse_samples_csv(b"x\n1\n2.5\n-3\n").unwrap(), vec![1.0, 2.5, -3.0]);
    assert_eq!(parse_samples_csv(b"1\n2\n").unwrap(), vec![1.0, 2.0]);
    assert!(parse_samples_csv(b"x\n1\nabc\n").is_err());
    assert!(parse_samples_csv(b"1,2\n3,4\n").is_err());
    assert_eq!(
        parse_measurements_csv(b"t,z0,z1\n0,1,2\n1,3,4\n").unwrap(),
        vec![vec![1.0, 2.0], vec![3.0, 4.0]]
    );
    assert!(parse_measurements_csv(b"1,2\n3\n").is_err());
    assert!(parse_measurements_csv(b"1,nan\n").is_err());
}

#[test]
fn fuzz_seeds_stay_valid() {
    let corpus = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fuzz/corpus"));
    let read = |dir: &str| -> Vec<(PathBuf, Vec<u8>)> {
        let mut out: Vec<_> = std::fs::read_dir(corpus.join(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                let bytes = std::fs::read(&p).unwrap();
                (p, bytes)
            })
            .collect();
        out.sort();
        out
    };
    for (p, bytes) in read("scenario_json") {
        let spec = parse_scenario(std::str::from_utf8(&bytes).unwrap()).unwrap();
        spec.resolve(p.parent().unwrap(), None).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, bytes) in read("penalty_json") {
        parse_penalty_spec(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, bytes) in read("samples_csv") {
        assert!(!parse_samples_csv(&bytes).unwrap().is_empty(), "{}", p.display());
    }
    for (p, bytes) in read("measurements_csv") {
        assert!(!parse_measurements_csv(&bytes).unwrap().is_empty(), "{}", p.display());
    }
}
