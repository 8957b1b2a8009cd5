#![no_main]

use libfuzzer_sys::fuzz_target;
use lsilab::io::{parse_cover, parse_subset_values, write_cover, write_subset_values};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_subset_values(text) {
        let again = parse_subset_values(&write_subset_values(&v)).expect("written values parse");
        assert_eq!(again, v);
    }
    if let Ok(r) = parse_cover(text) {
        // An all-zero cover writes no rows.
        if r.iter().next().is_some() {
            let again = parse_cover(&write_cover(&r)).expect("written cover parses");
            assert_eq!(again, r);
        }
    }
});
