#![no_main]

use augshuffle::crypto::LayeredCiphertext;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = LayeredCiphertext::decode(data) {
        assert_eq!(c.encode(), data);
        let _ = c.size_bits();
    }
});
