#![no_main]

use harmonic::stream::parse_trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trace) = parse_trace(text) {
        let again = parse_trace(&trace.format()).expect("formatted trace reparses");
        assert_eq!(again.sizes(), trace.sizes());
    }
});
