#![no_main]

use harmonic::certify::parse_certificate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cert) = parse_certificate(text) {
        assert_eq!(parse_certificate(&cert.format()).unwrap(), cert);
    }
});
