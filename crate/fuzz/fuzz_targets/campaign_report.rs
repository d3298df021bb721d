#![no_main]

use hereditas::cli::parse_campaign;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    if let Ok(report) = parse_campaign(data) {
        let _ = report.to_tsv();
    }
});
