#![no_main]

use gazeforge_core::index::{file, GuidanceIndex};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = file::decode(data);
    let _ = GuidanceIndex::decode(data, None);
});
