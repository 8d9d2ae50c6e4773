#![no_main]

use gazeforge_core::index::ManifestEntry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = ManifestEntry::parse(line);
    }
});
