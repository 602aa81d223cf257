#![no_main]

use std::path::Path;

use dualsmooth::scenario::{parse_scenario, MeasurementSource, OneOrMany, PenaltySpec};
use libfuzzer_sys::fuzz_target;

fn small_sample(p: &OneOrMany<PenaltySpec>) -> bool {
    let specs = match p {
        OneOrMany::One(s) => std::slice::from_ref(s),
        OneOrMany::Many(v) => v.as_slice(),
    };
    specs.iter().all(|s| match s {
        PenaltySpec::Mle { laplace_sample: Some(l), .. } => l.n <= 4096,
        _ => true,
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = parse_scenario(text) else { return };
    // resolving simulates and fits densities, so keep the work bounded
    if spec.system.horizon > 64 || !small_sample(&spec.process_penalty) || !small_sample(&spec.measurement_penalty) {
        return;
    }
    if let MeasurementSource::Csv(_) = spec.measurements {
        return;
    }
    let _ = spec.resolve(Path::new("/nonexistent"), None);
});
