#![no_main]

use dualsmooth::scenario::parse_measurements_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_measurements_csv(data) else { return };
    // rectangular and finite on success
    if let Some(first) = rows.first() {
        assert!(rows.iter().all(|r| r.len() == first.len()));
    }
    assert!(rows.iter().flatten().all(|x| x.is_finite()));
});
