#![no_main]

use hereditas::terms::TermId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = s.parse::<TermId>() {
        // accepted labels are canonical
        assert_eq!(t.label(), s);
        assert_eq!(t.label().parse::<TermId>().unwrap(), t);
    }
});
