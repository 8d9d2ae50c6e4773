//! Saliency maps, Gaussian-mixture authoring, metrics, design correction,
//! guidance indexes, display retargeting and saliency sequences.

pub mod display;
pub mod error;
pub mod fixation;
pub mod formats;
pub mod index;
pub mod map;
pub mod metrics;
pub mod mixture;
pub mod optimizer;
pub mod video;

pub use error::{Error, Result};
pub use fixation::{empirical_saliency, Fixation, FixationSet};
pub use map::{Boundary, SaliencyMap};
pub use mixture::{render_mixture, Canvas, Gaussian2D, GaussianMixtureSpec, Sym2};
pub use video::SaliencySequence;
