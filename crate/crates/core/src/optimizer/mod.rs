//! Design correction: retrieval, the transform objective, and suppression presets.

pub mod bfgs;
pub mod correct;
pub mod embed;
pub mod objective;
pub mod suppress;
pub mod transform;

pub use correct::{align, correct, retrieve_reference, Alignment, CorrectionOptions, CorrectionResult, Retrieval};
pub use embed::{HashedEmbedder, TextEmbedder};
pub use objective::{objective, SampleGrid};
pub use suppress::{author_suppression, SuppressionMode};
pub use transform::Transform2D;
