#![no_main]

use augshuffle::transport::Message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Message::decode(data) {
        let bytes = m.encode();
        assert_eq!(Message::decode(&bytes).expect("re-decodes"), m);
    }
});
