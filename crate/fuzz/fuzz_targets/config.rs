#![no_main]

use augshuffle::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::load(text, &[]) {
        cfg.validate().expect("loaded configs are valid");
        let _ = cfg.hash();
    }
});
