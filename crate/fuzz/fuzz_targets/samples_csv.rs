#![no_main]

use dualsmooth::fit_logconcave_mle;
use dualsmooth::scenario::parse_samples_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(samples) = parse_samples_csv(data) else { return };
    assert!(samples.iter().all(|x| x.is_finite()));
    if samples.len() > 512 {
        return;
    }
    if let Ok(d) = fit_logconcave_mle(&samples) {
        assert!(d.knots().windows(2).all(|w| w[0] < w[1]));
        assert!(d.log_values().iter().all(|v| v.is_finite()));
    }
});
