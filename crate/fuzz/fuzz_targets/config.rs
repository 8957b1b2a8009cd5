#![no_main]

use libfuzzer_sys::fuzz_target;
use lsilab::experiments::ExperimentSpec;
use lsilab::io::{parse_grid, parse_n_range};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ExperimentSpec::from_json(text) {
        let _ = spec.validate();
        let again = ExperimentSpec::from_json(&spec.to_json()).expect("echoed spec parses");
        assert_eq!(again.hash(), spec.hash());
    }
    let _ = parse_grid(text);
    let _ = parse_n_range(text);
});
