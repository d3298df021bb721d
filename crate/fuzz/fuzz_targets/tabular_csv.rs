#![no_main]

use hereditas::io::TabularFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    if let Ok(table) = TabularFile::parse(data) {
        let _ = table.design("y");
        let _ = table.design_and_response("y");
    }
});
