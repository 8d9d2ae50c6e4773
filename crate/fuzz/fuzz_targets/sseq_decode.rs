#![no_main]

use gazeforge_core::formats::sseq;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(seq) = sseq::decode(data) {
        assert_eq!(sseq::decode(&sseq::encode(&seq)).expect("re-encoded sequence decodes"), seq);
    }
});
