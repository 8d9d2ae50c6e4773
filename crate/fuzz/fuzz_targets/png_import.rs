#![no_main]

use gazeforge_core::formats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = formats::png::decode(data) {
        assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    // Sniffing entry point, shared by the CLI and the predictor.
    let _ = formats::decode_map(data);
});
