#![no_main]

use gazeforge::ops::{
    CorrectRequest, EvalRequest, EvalVideoRequest, GenerateRequest, PredictRequest, RenderRequest, RetargetRequest,
    SuppressRequest,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<RenderRequest>(data);
    let _ = serde_json::from_slice::<CorrectRequest>(data);
    let _ = serde_json::from_slice::<EvalRequest>(data);
    if let Ok(req) = serde_json::from_slice::<EvalVideoRequest>(data) {
        let _ = req.target.decode();
    }
    let _ = serde_json::from_slice::<RetargetRequest>(data);
    let _ = serde_json::from_slice::<SuppressRequest>(data);
    let _ = serde_json::from_slice::<GenerateRequest>(data);
    let _ = serde_json::from_slice::<PredictRequest>(data);
});
