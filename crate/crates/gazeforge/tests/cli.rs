mod common;

use common::*;
use gazeforge_core::formats::{png, smap, sseq};
use gazeforge_core::metrics::cc;
use gazeforge_core::{SaliencyMap, SaliencySequence};

#[test]
fn render_then_self_eval_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.smap");
    let m = m.to_str().unwrap();
    let run = cli(&["render", "--spec", &fixture_str("spec.json"), "--w", "64", "--h", "64", "--out", m]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.is_empty());
    let report = json(&cli_json(&["eval", "--target", m, "--achieved", m]));
    assert!((report["cc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report["resampled"], false);
}

#[test]
fn eval_resamples_by_default() {
    let report = json(&cli_json(&["eval", "--target", &fixture_str("target.smap"), "--achieved", &fixture_str("achieved.png")]));
    assert_eq!(report["resampled"], true);
    let run = cli(&[
        "eval",
        "--target",
        &fixture_str("target.smap"),
        "--achieved",
        &fixture_str("achieved.png"),
        "--strict-dims",
    ]);
    assert_eq!(run.code, 1);
}

#[test]
fn full_pipeline_closes_the_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let index = build_index(tmp.path());
    let corrected = tmp.path().join("corrected.json");
    let run = cli(&[
        "correct",
        "--spec",
        &fixture_str("spec.json"),
        "--prompt",
        CORRECT_PROMPT,
        "--index",
        index.to_str().unwrap(),
        "--out",
        corrected.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let result = json(&std::fs::read(&corrected).unwrap());
    assert!(result["residual"].as_f64().unwrap() < result["initialResidual"].as_f64().unwrap());
    let spec_path = tmp.path().join("spec_out.json");
    std::fs::write(&spec_path, serde_json::to_vec(&result["correctedSpec"]).unwrap()).unwrap();

    let image = tmp.path().join("gen.png");
    let run = cli(&[
        "generate",
        "--prompt",
        CORRECT_PROMPT,
        "--spec",
        spec_path.to_str().unwrap(),
        "--w",
        "64",
        "--h",
        "64",
        "--backend",
        "mock",
        "--out",
        image.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let predicted = tmp.path().join("pred.smap");
    let run = cli(&["predict", "--image", image.to_str().unwrap(), "--out", predicted.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rendered = tmp.path().join("cond.smap");
    cli(&["render", "--spec", spec_path.to_str().unwrap(), "--out", rendered.to_str().unwrap()]);
    let report = json(&cli_json(&["eval", "--target", rendered.to_str().unwrap(), "--achieved", predicted.to_str().unwrap()]));
    assert!(report["cc"].as_f64().unwrap() >= 0.99, "{report}");
}

#[test]
fn generate_sequence_writes_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let frames: Vec<SaliencyMap> = (0..3)
        .map(|t| SaliencyMap::from_fn(16, 16, |x, y| (-((x as f64 - 4.0 * t as f64 - 4.0).powi(2) + (y as f64 - 8.0).powi(2)) / 8.0).exp()).unwrap())
        .collect();
    let seq_path = tmp.path().join("c.sseq");
    sseq::write_file(&seq_path, &SaliencySequence::new(frames.clone(), 12.0).unwrap()).unwrap();
    let out_dir = tmp.path().join("frames");
    let summary = json(&cli_json(&[
        "generate",
        "--prompt",
        "p",
        "--conditioning",
        seq_path.to_str().unwrap(),
        "--w",
        "16",
        "--h",
        "16",
        "--concurrent",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(summary.as_array().unwrap().len(), 3);
    for (t, frame) in frames.iter().enumerate() {
        let img = png::read_file(out_dir.join(format!("frame_{t:04}.png"))).unwrap();
        assert!(cc(frame, &img).unwrap() > 0.999);
    }
}

#[test]
fn eval_video_and_suppress_and_retarget() {
    let tmp = tempfile::tempdir().unwrap();
    let map = smap::read_file(fixture("target.smap")).unwrap();
    let seq = SaliencySequence::new(vec![map.clone(), map.clone()], 24.0).unwrap();
    let p = tmp.path().join("s.sseq");
    sseq::write_file(&p, &seq).unwrap();
    let report = json(&cli_json(&["eval-video", "--target", p.to_str().unwrap(), "--achieved", p.to_str().unwrap()]));
    assert_eq!(report["evaluatedFrames"], 2);

    let spec = json(&cli_json(&[
        "author-suppress",
        "--spec",
        &fixture_str("spec.json"),
        "--region",
        "34,26;52,26;52,46;34,46",
        "--mode",
        "absolute",
    ]));
    assert_eq!(spec["gaussians"].as_array().unwrap().len(), 1);

    let out = tmp.path().join("r.smap");
    let run = cli(&["retarget", "--map", &fixture_str("target.smap"), "--mode", "weight", "--out", out.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(smap::read_file(&out).unwrap().dims(), (64, 64));
    assert_eq!(cli(&["retarget", "--map", &fixture_str("target.smap"), "--mode", "sideways"]).code, 2);
}
