#![no_main]

use hereditas::standardize::StandardizationParams;
use hereditas::terms::{canonical_terms, RawDesign};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(params) = StandardizationParams::from_json(data) else {
        return;
    };
    let text = serde_json::to_vec(&params).unwrap();
    assert_eq!(StandardizationParams::from_json(&text).unwrap(), params);

    if let StandardizationParams::Hierarchical(ls) = &params {
        let p = ls.p();
        if (1..=16).contains(&p) {
            let values: Vec<f64> = (0..3 * p).map(|i| i as f64 * 0.25 - 1.0).collect();
            let raw = RawDesign::from_rows(3, p, &values).unwrap();
            let _ = hereditas::standardize::standardize_hierarchical(&raw, ls, &canonical_terms(p).unwrap());
        }
    }
});
