//! Backbone profiles, decoder configuration, shortcut planning and the
//! assembled encoder-decoder.

pub mod backbone;
pub mod config;
pub mod model;
pub mod plan;

pub use backbone::{stage_size, BackboneKind, BackboneProfile, Encoder, TINY_DEFAULT_WIDTHS};
pub use config::{DecoderConfig, DEFAULT_PPM_BINS};
pub use model::{build_model, Dntdf, Features, Model, IMAGE_CHANNELS};
pub use plan::{working_size, Hop, ShortcutPath, ShortcutPlan};
