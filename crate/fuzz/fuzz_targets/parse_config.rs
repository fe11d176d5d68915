#![no_main]

use libfuzzer_sys::fuzz_target;
use pmri_core::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        cfg.validate().expect("parsed configs are valid");
        let again = RunConfig::parse(&cfg.to_json().to_string()).expect("round trip");
        assert_eq!(again, cfg);
    }
});
