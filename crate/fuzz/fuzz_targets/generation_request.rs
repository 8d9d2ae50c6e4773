#![no_main]

use gazeforge_gateway::{WireRequest, WireResponse};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = serde_json::from_slice::<WireRequest>(data) {
        let _ = req.conditioning.decode();
    }
    let _ = serde_json::from_slice::<WireResponse>(data);
});
