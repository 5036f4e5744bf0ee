#![no_main]

use dsc_jscc::train::{from_bytes, to_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((_, model)) = from_bytes(data) {
        // A loaded model is always consistent with its own architecture.
        let bytes = to_bytes(&model).expect("loaded model serializes");
        let (_, again) = from_bytes(&bytes).expect("round trip");
        assert_eq!(to_bytes(&again).unwrap(), bytes);
    }
});
