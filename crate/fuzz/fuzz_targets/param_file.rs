#![no_main]

use harmonic::paramfile::{format_params, load_params, params_digest, parse_param_file};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_param_file(text) {
        // Generator headers are checked independently of the sizes block.
        let _ = file.generator_config();
    }
    if let Ok(p) = load_params(text) {
        let again = load_params(&format_params(&p)).expect("formatted set reloads");
        assert_eq!(params_digest(&again), params_digest(&p));
    }
});
