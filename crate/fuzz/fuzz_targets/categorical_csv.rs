#![no_main]

use augshuffle::data::load_categorical_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = load_categorical_csv(data, None) {
        assert!(ds.values().iter().all(|&v| v >= 1 && v <= ds.d()));
        assert_eq!(ds.counts().iter().sum::<u64>(), ds.n() as u64);
    }
});
