#![no_main]

use augshuffle::data::load_kv_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = load_kv_csv(data, None) {
        for rec in ds.records() {
            assert!(rec.iter().all(|&(k, v)| k >= 1 && k <= ds.d() && (-1.0..=1.0).contains(&v)));
        }
    }
});
