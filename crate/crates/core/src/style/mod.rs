//! Texture stylization: hypercolumn features, the relaxed earth mover's style
//! loss with a self-similarity content term, and texture optimization through
//! the renderer.

pub mod features;
pub mod losses;
pub mod optimize;

pub use features::{sample_pixels, ExtractorMode, ExtractorSpec, FeatureExtractor, FeatureStack, FilterBank};
pub use losses::{content_loss, cosine_cost, normalize_rows, remd, texture_loss, LossGrad, TextureLoss};
pub use optimize::{
    evaluate_texture_loss, optimize_texture, write_trace_csv, StyleConfig, StyleResult, StyleSource, TraceRow,
};
