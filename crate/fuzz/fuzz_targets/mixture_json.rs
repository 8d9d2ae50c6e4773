#![no_main]

use gazeforge_core::GaussianMixtureSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = GaussianMixtureSpec::from_json(text) {
        let back = GaussianMixtureSpec::from_json(&spec.to_json()).expect("valid spec re-parses");
        assert_eq!(back, spec);
    }
});
