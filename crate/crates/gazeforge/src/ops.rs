//! Operations shared by the HTTP service and the CLI. Both front ends parse
//! their inputs into these request types and serialize the results the same
//! way, so identical inputs give byte-identical JSON.

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use gazeforge_core::display::{self, DisplayConfig, EccentricityProfile, RetargetMode, RetargetOptions, Retargeted};
use gazeforge_core::formats::sseq;
use gazeforge_core::index::{load_index, GuidanceIndex};
use gazeforge_core::metrics::{evaluate_pair, MetricReport};
use gazeforge_core::optimizer::{self, CorrectionOptions, CorrectionResult, HashedEmbedder, SuppressionMode, TextEmbedder};
use gazeforge_core::video::{evaluate_sequence, SequenceReport};
use gazeforge_core::{render_mixture, FixationSet, GaussianMixtureSpec, SaliencyMap, SaliencySequence};
use gazeforge_gateway::{GatewayClient, GenerationRequest, RemoteEmbedder, SaliencyPredictor, StubPredictor, DEFAULT_SIZE};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{AppError, Result};

/// Pixels per degree assumed for fixation data when none is given.
pub const DEFAULT_PPD: f64 = 40.0;
pub const DEFAULT_STEPS: u32 = 30;

/// Long-lived state: the guidance index, the embedder that queries it, the
/// generation backend and the saliency predictor.
pub struct Engine {
    pub index: Option<Arc<GuidanceIndex>>,
    pub embedder: Arc<dyn TextEmbedder>,
    pub gateway: GatewayClient,
    pub predictor: Arc<dyn SaliencyPredictor>,
}

/// Builds an embedder from `hashed-N` or `remote:ID:DIM`.
pub fn embedder_from_name(name: &str, gateway: &GatewayClient) -> Result<Arc<dyn TextEmbedder>> {
    if let Some(e) = HashedEmbedder::from_name(name) {
        return Ok(Arc::new(e));
    }
    if let Some(rest) = name.strip_prefix("remote:") {
        if let Some((id, dim)) = rest.rsplit_once(':') {
            if let Ok(dim) = dim.parse::<usize>() {
                return Ok(Arc::new(RemoteEmbedder::new(gateway.clone(), id, dim)));
            }
        }
    }
    Err(AppError::usage(format!("unknown embedder {name:?} (expected hashed-N or remote:ID:DIM)")))
}

impl Engine {
    pub fn new(index: Option<GuidanceIndex>, embedder: Arc<dyn TextEmbedder>, gateway: GatewayClient) -> Self {
        Self {
            index: index.map(Arc::new),
            embedder,
            gateway,
            predictor: Arc::new(StubPredictor::default()),
        }
    }

    /// Loads the index named in `config`. When the index was built by a
    /// hashed embedder, that embedder is used regardless of `config.embedder`.
    pub fn from_config(config: &Config) -> Result<Self> {
        let gateway = GatewayClient::from_config(&config.backend);
        let index = config.index.as_ref().map(load_index).transpose()?;
        let name = match &index {
            Some(ix) if HashedEmbedder::from_name(ix.embedder_id()).is_some() => ix.embedder_id().to_string(),
            _ => config.embedder.clone(),
        };
        let embedder = embedder_from_name(&name, &gateway)?;
        Ok(Self::new(index, embedder, gateway))
    }

    pub fn index(&self) -> Result<&GuidanceIndex> {
        self.index
            .as_deref()
            .ok_or_else(|| AppError::Unavailable("no guidance index configured".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RenderRequest {
    pub spec: GaussianMixtureSpec,
    #[serde(default)]
    pub w: Option<usize>,
    #[serde(default)]
    pub h: Option<usize>,
}

/// Renders at the canvas size unless overridden.
pub fn render(spec: &GaussianMixtureSpec, w: Option<usize>, h: Option<usize>) -> Result<SaliencyMap> {
    spec.validate()?;
    Ok(render_mixture(spec, w.unwrap_or(spec.width()), h.unwrap_or(spec.height()))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CorrectRequest {
    pub spec: GaussianMixtureSpec,
    pub prompt: String,
    #[serde(default)]
    pub options: CorrectionOptions,
}

pub fn correct(engine: &Engine, spec: &GaussianMixtureSpec, prompt: &str, opts: &CorrectionOptions) -> Result<CorrectionResult> {
    Ok(optimizer::correct(spec, prompt, engine.index()?, engine.embedder.as_ref(), opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvalRequest {
    pub target: SaliencyMap,
    pub achieved: SaliencyMap,
    /// Fixation CSV text (`subject_id,timestamp_ms,x_px,y_px`) in target pixels.
    #[serde(default)]
    pub fixations_csv: Option<String>,
    #[serde(default)]
    pub display_ppd: Option<f64>,
    /// Reject mismatched dimensions instead of resampling.
    #[serde(default)]
    pub strict_dims: bool,
}

pub fn eval(req: &EvalRequest) -> Result<MetricReport> {
    if req.strict_dims && req.target.dims() != req.achieved.dims() {
        return Err(gazeforge_core::Error::ShapeMismatch {
            left: req.target.dims(),
            right: req.achieved.dims(),
        }
        .into());
    }
    let fixations = req
        .fixations_csv
        .as_ref()
        .map(|text| FixationSet::from_csv(text.as_bytes(), req.display_ppd.unwrap_or(DEFAULT_PPD)))
        .transpose()?;
    Ok(evaluate_pair(&req.target, &req.achieved, fixations.as_ref()))
}

/// Base64 SSEQ container inside JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedSequence {
    pub data_b64: String,
}

impl EncodedSequence {
    pub fn from_sequence(seq: &SaliencySequence) -> Self {
        Self {
            data_b64: STANDARD.encode(sseq::encode(seq)),
        }
    }

    pub fn decode(&self) -> Result<SaliencySequence> {
        let bytes = STANDARD
            .decode(self.data_b64.as_bytes())
            .map_err(|e| gazeforge_core::Error::Parse(format!("data_b64: {e}")))?;
        Ok(sseq::decode(&bytes)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvalVideoRequest {
    pub target: EncodedSequence,
    pub achieved: EncodedSequence,
}

pub fn eval_video(target: &SaliencySequence, achieved: &SaliencySequence) -> Result<SequenceReport> {
    Ok(evaluate_sequence(target, achieved)?)
}

/// A preset name or a full display description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisplayRef {
    Preset(String),
    Config(DisplayConfig),
}

impl DisplayRef {
    pub fn resolve(&self) -> Result<DisplayConfig> {
        match self {
            Self::Preset(name) => DisplayConfig::preset(name).ok_or_else(|| {
                AppError::Core(gazeforge_core::Error::InvalidArguments(format!(
                    "unknown display preset {name:?} (known: {})",
                    display::PRESET_NAMES.join(", ")
                )))
            }),
            Self::Config(c) => {
                c.validate()?;
                Ok(c.clone())
            }
        }
    }
}

fn default_display() -> DisplayRef {
    DisplayRef::Preset("study-24in".into())
}

fn default_mode() -> RetargetMode {
    RetargetMode::Transform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RetargetRequest {
    pub map: SaliencyMap,
    #[serde(default = "default_display")]
    pub display: DisplayRef,
    #[serde(default = "default_mode")]
    pub mode: RetargetMode,
    #[serde(default)]
    pub profile: EccentricityProfile,
    #[serde(default)]
    pub options: RetargetOptions,
}

pub fn retarget(req: &RetargetRequest) -> Result<Retargeted> {
    let display = req.display.resolve()?;
    Ok(display::retarget_with(&req.map, &display, &req.profile, req.mode, &req.options)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SuppressRequest {
    pub spec: GaussianMixtureSpec,
    pub region: Vec<[f64; 2]>,
    pub mode: SuppressionMode,
    #[serde(default)]
    pub attenuation: f64,
}

pub fn suppress(req: &SuppressRequest) -> Result<GaussianMixtureSpec> {
    Ok(optimizer::author_suppression(&req.spec, &req.region, req.mode, req.attenuation)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GenerateRequest {
    pub prompt: String,
    /// Conditioning map; rendered from `spec` when absent.
    #[serde(default)]
    pub conditioning: Option<SaliencyMap>,
    #[serde(default)]
    pub spec: Option<GaussianMixtureSpec>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub steps: Option<u32>,
}

/// Mirrors the backend wire response, plus client-side timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutput {
    pub image_b64: String,
    pub backend_id: String,
    pub elapsed_ms: u64,
}

pub fn generate(engine: &Engine, req: &GenerateRequest) -> Result<GenerateOutput> {
    let conditioning = match (&req.conditioning, &req.spec) {
        (Some(map), None) => map.clone(),
        (None, Some(spec)) => render(spec, None, None)?,
        _ => return Err(AppError::usage("give exactly one of conditioning or spec")),
    };
    let request = GenerationRequest::new(
        req.prompt.clone(),
        &conditioning,
        req.width.unwrap_or(DEFAULT_SIZE),
        req.height.unwrap_or(DEFAULT_SIZE),
        req.seed,
        req.steps.unwrap_or(DEFAULT_STEPS),
    )?;
    let resp = engine.gateway.generate(&request)?;
    Ok(GenerateOutput {
        image_b64: STANDARD.encode(&resp.image_bytes),
        backend_id: resp.backend_id,
        elapsed_ms: resp.elapsed_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PredictRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PredictOutput {
    pub map: SaliencyMap,
    pub zero_mass: bool,
    pub constant: bool,
}

pub fn predict(engine: &Engine, image: &[u8]) -> Result<PredictOutput> {
    let p = engine.predictor.predict_image(image)?;
    Ok(PredictOutput {
        map: p.map,
        zero_mass: p.zero_mass,
        constant: p.constant,
    })
}

pub fn decode_b64(field: &str, text: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text.as_bytes())
        .map_err(|e| AppError::Core(gazeforge_core::Error::Parse(format!("{field}: {e}"))))
}

/// Compact JSON, the single output encoding of both front ends.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("response types serialize")
}
