#![no_main]

use harmonic::stream::{format_stream, parse_stream};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sizes) = parse_stream(text) {
        assert_eq!(parse_stream(&format_stream(&sizes)).unwrap(), sizes);
    }
});
