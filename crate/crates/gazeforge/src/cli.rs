//! The `gazeforge` command line. Every subcommand prints its JSON result to
//! stdout, or writes it to `--out`. Exit codes: 0 success, 1 domain error,
//! 2 usage error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gazeforge_core::display::{EccentricityProfile, RetargetMode, RetargetOptions};
use gazeforge_core::formats::{self, png, smap, sseq};
use gazeforge_core::index::ingest;
use gazeforge_core::optimizer::{CorrectionOptions, SuppressionMode};
use gazeforge_core::{GaussianMixtureSpec, SaliencyMap};
use gazeforge_gateway::{SequenceParams, DEFAULT_SIZE};
use serde::Serialize;

use crate::config::Config;
use crate::error::{AppError, Result};
use crate::ops::{self, DisplayRef, Engine};

#[derive(Debug, Parser)]
#[command(name = "gazeforge", version, about = "Author, correct, evaluate and generate with saliency guidance")]
pub struct Cli {
    /// key = value config file (also GAZEFORGE_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared with the service; unset flags fall back to the
/// environment, the config file, then defaults.
#[derive(Debug, Args, Default)]
struct EngineFlags {
    /// Guidance index directory or index.gfix file.
    #[arg(long)]
    index: Option<String>,
    /// hashed-N or remote:ID:DIM.
    #[arg(long)]
    embedder: Option<String>,
    /// Generation backend URL, or `mock` for the in-process mock.
    #[arg(long)]
    backend: Option<String>,
}

impl EngineFlags {
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for (k, v) in [("index", &self.index), ("embedder", &self.embedder), ("backend", &self.backend)] {
            if let Some(v) = v {
                m.insert(k.to_string(), v.clone());
            }
        }
        m
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a guidance index from a JSON-lines manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = crate::config::DEFAULT_EMBEDDER)]
        embedder: String,
    },
    /// Rasterize a Gaussian mixture spec.
    Render {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        w: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        /// .smap, .png or .json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align a spec to the saliency of the nearest-prompt reference.
    Correct {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        prompt: String,
        /// CorrectionOptions JSON file.
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Compare two saliency maps, optionally with fixations.
    Eval {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        achieved: PathBuf,
        /// Fixation CSV in target pixel coordinates.
        #[arg(long)]
        fixations: Option<PathBuf>,
        #[arg(long)]
        ppd: Option<f64>,
        /// Fail on mismatched dimensions instead of resampling.
        #[arg(long)]
        strict_dims: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frame-wise comparison of two SSEQ sequences.
    EvalVideo {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        achieved: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Move or reweight saliency into the preferred eccentricity band.
    Retarget {
        #[arg(long)]
        map: PathBuf,
        /// Preset name or DisplayConfig JSON file.
        #[arg(long, default_value = "study-24in")]
        display: String,
        #[arg(long, default_value = "transform")]
        mode: RetargetMode,
        /// Preferred band in degrees, `inner,outer`.
        #[arg(long, default_value = "7,10")]
        band: String,
        #[arg(long, default_value_t = 15.0)]
        falloff: f64,
        #[arg(long)]
        lambda: Option<f64>,
        /// Writes the retargeted map (.smap, .png) or the full report (.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an image (or one per frame of an .sseq) through the backend.
    Generate {
        #[arg(long)]
        prompt: String,
        /// Conditioning map (.smap, .png) or sequence (.sseq).
        #[arg(long, conflicts_with = "spec")]
        conditioning: Option<PathBuf>,
        /// Render this spec as the conditioning map.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        w: u32,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        h: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ops::DEFAULT_STEPS)]
        steps: u32,
        /// Up to four frames in flight for sequences.
        #[arg(long)]
        concurrent: bool,
        /// PNG file, or a directory for sequences.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Session persistence directory.
        #[arg(long)]
        data_dir: Option<String>,
        #[arg(long)]
        cors_origin: Option<String>,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Remove or attenuate attention inside a polygon.
    AuthorSuppress {
        #[arg(long)]
        spec: PathBuf,
        /// `x,y;x,y;x,y...` or a JSON file holding `[[x,y],...]`.
        #[arg(long)]
        region: String,
        #[arg(long)]
        mode: SuppressionMode,
        #[arg(long, default_value_t = 0.0)]
        attenuation: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stub saliency prediction for a PNG image.
    Predict {
        #[arg(long)]
        image: PathBuf,
        /// Writes the map (.smap, .png) or the full report (.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", String::from_utf8_lossy(&ops::to_json(&e.to_json())));
            e.exit_code()
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let mut bytes = ops::to_json(value);
    match out {
        Some(path) => write_file(path, &bytes),
        None => {
            bytes.push(b'\n');
            stdout.write_all(&bytes).map_err(|e| io(Path::new("<stdout>"), e))
        }
    }
}

/// Writes a map by extension: PNG, JSON, or SMAP otherwise.
fn write_map(path: &Path, map: &SaliencyMap) -> Result<()> {
    match extension(path).as_str() {
        "png" => Ok(png::write_file(path, map)?),
        "json" => write_file(path, &ops::to_json(map)),
        _ => Ok(smap::write_file(path, map)?),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io(path, e))
}

fn io(path: &Path, source: std::io::Error) -> AppError {
    AppError::Core(gazeforge_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a map at the f32 precision maps have in files and JSON payloads,
/// so file inputs and service requests see identical values.
fn read_map(path: &Path) -> Result<SaliencyMap> {
    let map = formats::read_map(path)?;
    Ok(smap::decode(&smap::encode(&map))?)
}

fn read_spec(path: &Path) -> Result<GaussianMixtureSpec> {
    Ok(GaussianMixtureSpec::read_file(path)?)
}

fn parse_region(arg: &str) -> Result<Vec<[f64; 2]>> {
    if arg.ends_with(".json") {
        let text = read_text(Path::new(arg))?;
        return serde_json::from_str(&text).map_err(|e| AppError::usage(format!("--region file: {e}")));
    }
    arg.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let xy: Vec<f64> = p
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| AppError::usage(format!("--region: bad vertex {p:?}")))?;
            match xy[..] {
                [x, y] => Ok([x, y]),
                _ => Err(AppError::usage(format!("--region: vertex {p:?} needs two coordinates"))),
            }
        })
        .collect()
}

fn parse_band(arg: &str) -> Result<[f64; 2]> {
    let parts: Vec<f64> = arg
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| AppError::usage(format!("--band: expected inner,outer, got {arg:?}")))?;
    match parts[..] {
        [a, b] => Ok([a, b]),
        _ => Err(AppError::usage(format!("--band: expected inner,outer, got {arg:?}"))),
    }
}

fn engine(config: Option<PathBuf>, flags: &EngineFlags) -> Result<Engine> {
    Engine::from_config(&Config::load(&flags.to_map(), config)?)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FrameSummary {
    frame: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let config_path = cli.config;
    match cli.command {
        Command::Ingest { manifest, out, embedder } => {
            let gateway = gazeforge_gateway::GatewayClient::from_config(&Config::load(&BTreeMap::new(), config_path)?.backend);
            let embedder = ops::embedder_from_name(&embedder, &gateway)?;
            let (_, report) = ingest(&manifest, embedder.as_ref(), &out)?;
            emit(&report, None, stdout)
        }
        Command::Render { spec, w, h, out } => {
            let map = ops::render(&read_spec(&spec)?, w, h)?;
            match out {
                Some(path) => write_map(&path, &map),
                None => emit(&map, None, stdout),
            }
        }
        Command::Correct {
            spec,
            prompt,
            options,
            out,
            engine: flags,
        } => {
            let opts: CorrectionOptions = match options {
                Some(p) => serde_json::from_str(&read_text(&p)?).map_err(|e| AppError::usage(format!("--options: {e}")))?,
                None => CorrectionOptions::default(),
            };
            let engine = engine(config_path, &flags)?;
            let result = ops::correct(&engine, &read_spec(&spec)?, &prompt, &opts)?;
            emit(&result, out.as_deref(), stdout)
        }
        Command::Eval {
            target,
            achieved,
            fixations,
            ppd,
            strict_dims,
            out,
        } => {
            let req = ops::EvalRequest {
                target: read_map(&target)?,
                achieved: read_map(&achieved)?,
                fixations_csv: fixations.as_deref().map(read_text).transpose()?,
                display_ppd: ppd,
                strict_dims,
            };
            emit(&ops::eval(&req)?, out.as_deref(), stdout)
        }
        Command::EvalVideo { target, achieved, out } => {
            let report = ops::eval_video(&sseq::read_file(&target)?, &sseq::read_file(&achieved)?)?;
            emit(&report, out.as_deref(), stdout)
        }
        Command::Retarget {
            map,
            display,
            mode,
            band,
            falloff,
            lambda,
            out,
        } => {
            let display = match gazeforge_core::display::DisplayConfig::preset(&display) {
                Some(_) => DisplayRef::Preset(display),
                None => DisplayRef::Config(gazeforge_core::display::DisplayConfig::resolve(&display)?),
            };
            let [inner, outer] = parse_band(&band)?;
            let mut options = RetargetOptions::default();
            if let Some(l) = lambda {
                options.lambda = l;
            }
            let req = ops::RetargetRequest {
                map: read_map(&map)?,
                display,
                mode,
                profile: EccentricityProfile::new(inner, outer, falloff)?,
                options,
            };
            let result = ops::retarget(&req)?;
            match out {
                Some(path) if extension(&path) != "json" => write_map(&path, &result.map),
                other => emit(&result, other.as_deref(), stdout),
            }
        }
        Command::Generate {
            prompt,
            conditioning,
            spec,
            w,
            h,
            seed,
            steps,
            concurrent,
            out,
            engine: flags,
        } => {
            let engine = engine(config_path, &flags)?;
            match (&conditioning, &spec) {
                (Some(path), None) if extension(path) == "sseq" => {
                    let seq = sseq::read_file(path)?;
                    let params = SequenceParams {
                        width: w,
                        height: h,
                        seed,
                        steps,
                        concurrent,
                    };
                    let outcome = engine.gateway.generate_sequence(&prompt, &seq, params)?;
                    if let Some(dir) = &out {
                        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                    }
                    let mut summary = Vec::new();
                    for (t, frame) in outcome.frames.iter().enumerate() {
                        summary.push(match frame {
                            Ok(r) => {
                                if let Some(dir) = &out {
                                    write_file(&dir.join(format!("frame_{t:04}.png")), &r.image_bytes)?;
                                }
                                FrameSummary {
                                    frame: t,
                                    backend_id: Some(r.backend_id.clone()),
                                    elapsed_ms: Some(r.elapsed_ms),
                                    error: None,
                                }
                            }
                            Err(e) => FrameSummary {
                                frame: t,
                                backend_id: None,
                                elapsed_ms: None,
                                error: Some(e.to_string()),
                            },
                        });
                    }
                    emit(&summary, None, stdout)
                }
                (None, None) => Err(AppError::usage("give --conditioning or --spec")),
                _ => {
                    let req = ops::GenerateRequest {
                        prompt,
                        conditioning: conditioning.as_deref().map(read_map).transpose()?,
                        spec: spec.as_deref().map(read_spec).transpose()?,
                        width: Some(w),
                        height: Some(h),
                        seed,
                        steps: Some(steps),
                    };
                    let result = ops::generate(&engine, &req)?;
                    match out {
                        Some(path) => {
                            log::info!("{} answered in {} ms", result.backend_id, result.elapsed_ms);
                            write_file(&path, &ops::decode_b64("image_b64", &result.image_b64)?)
                        }
                        None => emit(&result, None, stdout),
                    }
                }
            }
        }
        Command::Serve {
            host,
            port,
            data_dir,
            cors_origin,
            engine: flags,
        } => {
            let mut map = flags.to_map();
            for (k, v) in [
                ("host", host),
                ("port", port.map(|p| p.to_string())),
                ("data_dir", data_dir),
                ("cors_origin", cors_origin),
            ] {
                if let Some(v) = v {
                    map.insert(k.to_string(), v);
                }
            }
            crate::server::run(&Config::load(&map, config_path)?)
        }
        Command::AuthorSuppress {
            spec,
            region,
            mode,
            attenuation,
            out,
        } => {
            let req = ops::SuppressRequest {
                spec: read_spec(&spec)?,
                region: parse_region(&region)?,
                mode,
                attenuation,
            };
            emit(&ops::suppress(&req)?, out.as_deref(), stdout)
        }
        Command::Predict { image, out } => {
            let bytes = std::fs::read(&image).map_err(|e| io(&image, e))?;
            let engine = Engine::new(
                None,
                std::sync::Arc::new(gazeforge_core::optimizer::HashedEmbedder::default()),
                gazeforge_gateway::GatewayClient::from_config(&Default::default()),
            );
            let result = ops::predict(&engine, &bytes)?;
            match out {
                Some(path) if extension(&path) != "json" => write_map(&path, &result.map),
                other => emit(&result, other.as_deref(), stdout),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_and_band_parsing() {
        assert_eq!(parse_region("0,0; 10,0;10,10").unwrap(), vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]);
        assert!(parse_region("0,0;1").is_err());
        assert_eq!(parse_band("7, 10").unwrap(), [7.0, 10.0]);
        assert!(parse_band("7").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["gazeforge", "render"], &mut out, &mut err), 2);
        assert_eq!(run(["gazeforge", "frobnicate"], &mut out, &mut err), 2);
        assert_eq!(run(["gazeforge", "--help"], &mut out, &mut err), 0);
    }

    #[test]
    fn domain_errors_exit_1() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["gazeforge", "render", "--spec", "/nonexistent/spec.json"], &mut out, &mut err), 1);
        assert!(String::from_utf8(err).unwrap().contains("\"error\""));
    }
}
