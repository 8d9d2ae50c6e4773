use std::sync::Arc;

use gazeforge_core::metrics::cc;
use gazeforge_core::optimizer::TextEmbedder;
use gazeforge_core::{render_mixture, Gaussian2D, GaussianMixtureSpec, SaliencyMap, SaliencySequence};
use gazeforge_gateway::mock::server;
use gazeforge_gateway::{
    BackendConfig, Fault, FaultInjector, GatewayClient, GatewayError, GenerationRequest, MockBackend, RemoteEmbedder,
    RetryPolicy, SaliencyPredictor, SequenceParams, StubPredictor, MOCK_BACKEND_ID,
};

fn blob(x: f64, y: f64) -> SaliencyMap {
    let spec = GaussianMixtureSpec::new(32, 32, vec![Gaussian2D::isotropic(1.0, [x, y], 20.0)]);
    render_mixture(&spec, 32, 32).unwrap()
}

fn params(concurrent: bool) -> SequenceParams {
    SequenceParams {
        width: 32,
        height: 32,
        seed: 7,
        steps: 20,
        concurrent,
    }
}

#[test]
fn mock_generation_is_byte_identical() {
    let client = GatewayClient::from_config(&BackendConfig::default());
    let req = GenerationRequest::new("a bowl of fruit", &blob(10.0, 20.0), 32, 32, 5, 20).unwrap();
    let a = client.generate(&req).unwrap();
    let b = client.generate(&req).unwrap();
    assert_eq!(a.image_bytes, b.image_bytes);
    assert_eq!(a.backend_id, MOCK_BACKEND_ID);
}

#[test]
fn http_and_in_process_mock_agree() {
    let running = server::spawn(Arc::new(MockBackend::new())).unwrap();
    let http = GatewayClient::from_config(&BackendConfig::with_endpoint(running.url()));
    let local = GatewayClient::from_config(&BackendConfig::default());
    let req = GenerationRequest::new("p", &blob(12.0, 9.0), 32, 32, 1, 10).unwrap();
    assert_eq!(http.generate(&req).unwrap().image_bytes, local.generate(&req).unwrap().image_bytes);

    let remote = RemoteEmbedder::new(http, "hashed-512/v1", 512);
    let local_embed = gazeforge_core::optimizer::HashedEmbedder::default();
    assert_eq!(remote.embed("two dogs").unwrap(), local_embed.embed("two dogs").unwrap());
}

#[test]
fn http_retries_through_a_warming_server() {
    let running = server::spawn(Arc::new(MockBackend::failing_first(2))).unwrap();
    let client = GatewayClient::from_config(&BackendConfig::with_endpoint(running.url())).with_retry(RetryPolicy::immediate());
    let req = GenerationRequest::new("p", &blob(16.0, 16.0), 32, 32, 1, 10).unwrap();
    assert!(client.generate(&req).is_ok());
}

#[test]
fn unreachable_backend_reports_attempts() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let mut config = BackendConfig::with_endpoint(format!("http://{addr}"));
    config.timeout_ms = 2000;
    let client = GatewayClient::from_config(&config).with_retry(RetryPolicy::immediate());
    let req = GenerationRequest::new("p", &blob(16.0, 16.0), 32, 32, 1, 10).unwrap();
    assert!(matches!(client.generate(&req), Err(GatewayError::Unreachable { attempts: 4, .. })));
}

fn four_frames() -> SaliencySequence {
    SaliencySequence::new((0..4).map(|t| blob(6.0 + 6.0 * t as f64, 16.0)).collect(), 24.0).unwrap()
}

#[test]
fn sequence_frames_follow_conditioning() {
    let client = GatewayClient::from_config(&BackendConfig::default());
    let seq = four_frames();
    for concurrent in [false, true] {
        let out = client.generate_sequence("p", &seq, params(concurrent)).unwrap();
        assert_eq!(out.frames.len(), 4);
        for (frame, c) in out.frames.iter().zip(seq.frames()) {
            let png = &frame.as_ref().unwrap().image_bytes;
            let got = gazeforge_core::formats::png::decode(png).unwrap();
            let want = c.normalize_to_max().unwrap();
            let worst = got.values().iter().zip(want.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 0.5 / 255.0 + 1e-6, "worst {worst}");
        }
    }
}

#[test]
fn sequence_survives_a_transient_mid_sequence_fault() {
    // Frame 0 passes, frame 1 hits two transient faults then succeeds.
    let inj = Arc::new(FaultInjector::new(Arc::new(MockBackend::new()), [Fault::Pass, Fault::Status(503), Fault::Drop]));
    let client = GatewayClient::new(inj.clone()).with_retry(RetryPolicy::immediate());
    let out = client.generate_sequence("p", &four_frames(), params(false)).unwrap();
    assert_eq!(out.failures(), 0);
    assert_eq!(inj.calls(), 6);
}

#[test]
fn sequence_aborts_after_three_consecutive_failures() {
    let script = std::iter::repeat_n(Fault::Status(500), 16);
    let inj = Arc::new(FaultInjector::new(Arc::new(MockBackend::new()), script));
    let client = GatewayClient::new(inj).with_retry(RetryPolicy::immediate());
    let seq = SaliencySequence::new((0..6).map(|t| blob(4.0 + 4.0 * t as f64, 16.0)).collect(), 24.0).unwrap();
    match client.generate_sequence("p", &seq, params(false)) {
        Err(GatewayError::SequenceAborted { frame, consecutive, failures }) => {
            assert_eq!((frame, consecutive, failures.len()), (2, 3, 3));
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn isolated_failures_are_collected() {
    // 500 is not retried, so each scripted fault costs exactly one frame.
    let script = [Fault::Status(500), Fault::Pass, Fault::Status(500), Fault::Pass];
    let inj = Arc::new(FaultInjector::new(Arc::new(MockBackend::new()), script));
    let client = GatewayClient::new(inj).with_retry(RetryPolicy::immediate());
    let out = client.generate_sequence("p", &four_frames(), params(false)).unwrap();
    let failed: Vec<usize> = out.frames.iter().enumerate().filter(|(_, f)| f.is_err()).map(|(i, _)| i).collect();
    assert_eq!(failed, [0, 2]);
}

#[test]
fn closed_loop_keeps_the_conditioning() {
    let client = GatewayClient::from_config(&BackendConfig::default());
    let c = blob(11.0, 19.0);
    let req = GenerationRequest::new("p", &c, 32, 32, 0, 20).unwrap();
    let image = client.generate(&req).unwrap().image_bytes;
    let predicted = StubPredictor::default().predict_image(&image).unwrap();
    assert!(cc(&c, &predicted.map).unwrap() > 0.99);
}
