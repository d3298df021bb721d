#![no_main]

use hereditas::simulation::{build_truth, SettingConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = SettingConfig::from_json(data) {
        // a validated setting always yields a truth
        let truth = build_truth(&cfg).expect("validated config");
        if cfg.p <= 64 {
            let _ = hereditas::metrics::snr(&truth, cfg.x_distribution);
        }
    }
});
