#![no_main]

use augshuffle::dummy::{DummyCountDistribution, DummyKind};
use augshuffle::replay::Fixture;
use libfuzzer_sys::fuzz_target;

fn small(kind: &DummyKind) -> bool {
    DummyCountDistribution::new(kind.clone()).is_ok_and(|d| d.mean() + d.variance().sqrt() < 256.0)
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(f) = Fixture::parse(text) else { return };
    let injected_small = [&f.injected.dummies1, &f.injected.dummies2]
        .iter()
        .all(|v| v.as_ref().is_none_or(|v| v.iter().all(|&c| c < 256)));
    if f.values.len() <= 64 && f.d <= 64 && f.b <= 64 && small(&f.d1) && f.d2.as_ref().is_none_or(small) && injected_small {
        let _ = f.replay();
    }
});
