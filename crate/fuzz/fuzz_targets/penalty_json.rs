#![no_main]

use std::path::Path;

use dualsmooth::scenario::{parse_penalty_spec, PenaltySpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = parse_penalty_spec(text) else { return };
    if let PenaltySpec::Mle { laplace_sample: Some(l), .. } = &spec {
        if l.n > 4096 {
            return;
        }
    }
    for dim in 1..=3 {
        let Ok((p, _)) = spec.build(dim, Path::new("/nonexistent")) else { continue };
        let x = p.domain_point();
        let _ = p.value(&x);
        for &s in &[-2.0, 0.0, 0.5, 3.0] {
            let v = vec![s; dim];
            let _ = p.conjugate_value(&v);
            if let Ok(w) = p.prox(&v, 0.5) {
                assert_eq!(w.len(), dim);
            }
            let _ = p.conjugate_prox(&v, 0.5);
        }
    }
});
