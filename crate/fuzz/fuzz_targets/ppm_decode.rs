#![no_main]

use dsc_jscc::train::{decode_ppm, encode_ppm};
use libfuzzer_sys::fuzz_target;

// Any image that decodes must re-encode to bytes that decode to the same image.
fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_ppm(data) {
        assert_eq!(image.pixels.len(), image.width * image.height * 3);
        let again = decode_ppm(&encode_ppm(&image)).expect("re-encoded image decodes");
        assert_eq!(again, image);
    }
});
