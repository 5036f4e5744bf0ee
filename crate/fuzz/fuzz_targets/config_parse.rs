#![no_main]

use dsc_jscc::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let d = cfg.derive().expect("accepted configs derive");
        assert!(d.c > 0);
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).expect("round trip"), cfg);
    }
});
