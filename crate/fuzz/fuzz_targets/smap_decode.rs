#![no_main]

use gazeforge_core::formats::smap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = smap::decode(data) {
        let again = smap::decode(&smap::encode(&map)).expect("re-encoded map decodes");
        assert_eq!(again, map);
    }
    let _ = smap::decode_prefix(data);
});
