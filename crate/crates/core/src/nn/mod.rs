//! Parameters, layer compositions, the recorder abstraction and Adam.

pub mod adam;
pub mod layers;
pub mod params;
pub mod recorder;

pub use adam::AdamState;
pub use layers::{compressed_depth, CompressionUnit, ConvLayer, FusionUnit, Ppm, PpmConfig};
pub use params::{he_init, ParamId, ParamKind, ParamRegistry, ParamStore};
pub use recorder::{Executor, ParamGrads, Recorder};
