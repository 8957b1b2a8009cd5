#![no_main]

use libfuzzer_sys::fuzz_target;
use lsilab::io::{parse_measure_csv, write_measure_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mu) = parse_measure_csv(text) {
        assert!((mu.total_mass() - 1.0).abs() < 1e-9);
        let again = parse_measure_csv(&write_measure_csv(&mu)).expect("written measure parses");
        assert_eq!(again.len(), mu.len());
    }
});
