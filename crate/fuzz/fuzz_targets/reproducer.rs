#![no_main]

use libfuzzer_sys::fuzz_target;
use lsilab::io::{parse_reproducer, write_reproducer};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(repro) = parse_reproducer(text) {
        parse_reproducer(&write_reproducer(&repro)).expect("written reproducer parses");
    }
});
