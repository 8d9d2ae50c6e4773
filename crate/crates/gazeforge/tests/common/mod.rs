#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use gazeforge::config::Config;
use gazeforge::server::{build_state, router};
use tower::ServiceExt;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_str(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

pub struct CliRun {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliRun {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["gazeforge"];
    argv.extend_from_slice(args);
    let code = gazeforge::cli::run(argv, &mut out, &mut err);
    CliRun {
        code,
        stdout: out,
        stderr: String::from_utf8_lossy(&err).into_owned(),
    }
}

/// CLI stdout without the trailing newline, which is the endpoint body.
pub fn cli_json(args: &[&str]) -> Vec<u8> {
    let mut run = cli(args);
    assert_eq!(run.code, 0, "gazeforge {args:?} failed: {}", run.stderr);
    assert_eq!(run.stdout.pop(), Some(b'\n'));
    run.stdout
}

/// Ingests the fixture corpus into `dir` and returns the index directory.
pub fn build_index(dir: &Path) -> PathBuf {
    let out = dir.join("index");
    let run = cli(&[
        "ingest",
        "--manifest",
        &fixture_str("corpus/manifest.jsonl"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    out
}

pub fn app(index: Option<&Path>, data_dir: Option<&Path>) -> Router {
    let config = Config {
        index: index.map(Path::to_path_buf),
        data_dir: data_dir.map(Path::to_path_buf),
        ..Config::default()
    };
    let state = build_state(&config).expect("service state");
    router(state, &config.cors_origin)
}

pub fn call(app: &Router, method: &str, uri: &str, body: impl Into<Vec<u8>>) -> (u16, Vec<u8>) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.into()))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status().as_u16();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, bytes.to_vec())
    })
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(bytes)))
}

/// Compares with `tests/fixtures/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn golden(name: &str, bytes: &[u8]) -> Result<(), String> {
    let path = fixture("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, bytes).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == bytes {
        Ok(())
    } else {
        Err(format!("{name} differs from golden ({} vs {} bytes)", bytes.len(), want.len()))
    }
}

pub const CORRECT_PROMPT: &str = "a cat on a sofa";

pub fn spec_json() -> serde_json::Value {
    json(&std::fs::read(fixture("spec.json")).unwrap())
}

pub fn render_body() -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({"spec": spec_json(), "w": 64, "h": 64})).unwrap()
}

pub fn correct_body() -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({"spec": spec_json(), "prompt": CORRECT_PROMPT})).unwrap()
}

pub fn eval_body() -> Vec<u8> {
    use gazeforge_core::formats;
    let target = formats::read_map(fixture("target.smap")).unwrap();
    let achieved = formats::read_map(fixture("achieved.png")).unwrap();
    let csv = std::fs::read_to_string(fixture("fixations.csv")).unwrap();
    serde_json::to_vec(&serde_json::json!({"target": target, "achieved": achieved, "fixationsCsv": csv})).unwrap()
}

/// One golden case: the CLI output, the endpoint body, the golden file.
pub struct Parity {
    pub name: &'static str,
    pub cli: Vec<u8>,
    pub endpoint: (u16, Vec<u8>),
}

impl Parity {
    pub fn check(&self) -> Result<(), String> {
        if self.endpoint.0 != 200 {
            return Err(format!("{}: endpoint status {}", self.name, self.endpoint.0));
        }
        if self.cli != self.endpoint.1 {
            return Err(format!("{}: CLI and endpoint outputs differ", self.name));
        }
        golden(&format!("{}.json", self.name), &self.cli)
    }
}

pub fn parity_cases(app: &Router, index: &Path) -> Vec<Parity> {
    let spec = fixture_str("spec.json");
    vec![
        Parity {
            name: "render",
            cli: cli_json(&["render", "--spec", &spec, "--w", "64", "--h", "64"]),
            endpoint: call(app, "POST", "/render", render_body()),
        },
        Parity {
            name: "correct",
            cli: cli_json(&["correct", "--spec", &spec, "--prompt", CORRECT_PROMPT, "--index", index.to_str().unwrap()]),
            endpoint: call(app, "POST", "/correct", correct_body()),
        },
        Parity {
            name: "eval",
            cli: cli_json(&[
                "eval",
                "--target",
                &fixture_str("target.smap"),
                "--achieved",
                &fixture_str("achieved.png"),
                "--fixations",
                &fixture_str("fixations.csv"),
            ]),
            endpoint: call(app, "POST", "/eval", eval_body()),
        },
    ]
}

/// Creates a session, sets its spec and corrects it, then reloads the store
/// from disk and compares every session document byte for byte.
pub fn restart_roundtrip(index: &Path, data_dir: &Path) -> Result<(), String> {
    let first = app(Some(index), Some(data_dir));
    let (status, body) = call(&first, "POST", "/sessions", r#"{"prompt":"a cat on a sofa"}"#);
    if status != 201 {
        return Err(format!("create session: {status}"));
    }
    let id = json(&body)["sessionId"].as_str().unwrap().to_string();
    let (status, _) = call(&first, "PUT", &format!("/sessions/{id}/spec"), serde_json::to_vec(&spec_json()).unwrap());
    if status != 200 {
        return Err(format!("put spec: {status}"));
    }
    let (status, _) = call(&first, "POST", &format!("/sessions/{id}/correct"), "");
    if status != 200 {
        return Err(format!("correct: {status}"));
    }
    let (_, second_id_body) = call(&first, "POST", "/sessions", "");
    let second_id = json(&second_id_body)["sessionId"].as_str().unwrap().to_string();

    let files_before = session_files(data_dir);
    let before: Vec<Vec<u8>> = [&id, &second_id].iter().map(|i| call(&first, "GET", &format!("/sessions/{i}"), "").1).collect();
    drop(first);

    let second = app(Some(index), Some(data_dir));
    let after: Vec<Vec<u8>> = [&id, &second_id].iter().map(|i| call(&second, "GET", &format!("/sessions/{i}"), "").1).collect();
    if before != after {
        return Err("session documents changed across restart".into());
    }
    if session_files(data_dir) != files_before {
        return Err("session files changed across restart".into());
    }
    let (_, list) = call(&second, "GET", "/sessions", "");
    if json(&list).as_array().map(Vec::len) != Some(2) {
        return Err("restarted service lists the wrong sessions".into());
    }
    Ok(())
}

fn session_files(data_dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(data_dir.join("sessions"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    files.sort();
    files
}

