#![no_main]

use gazeforge_core::FixationSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = FixationSet::from_csv(data, 40.0) {
        let _ = set.pixels(64, 48);
    }
});
