//! Tiled squeeze-and-excite: reference forward passes, an analytical
//! buffering/compute cost model, and tools for studying how well local
//! tiles stand in for global context.

pub mod blocks;
pub mod context;
pub mod cost;
pub mod descriptor;
pub mod error;
pub mod excite;
pub mod io;
pub mod tensor;
pub mod tile;
pub mod zoo;

pub use blocks::{fixed_strip_forward, se_forward, tile_scales, transplant, tse_forward, TseBlock};
pub use cost::{analyze_network, analyze_network_with, CostReport, FlopConvention};
pub use descriptor::{load_descriptor, save_descriptor, BlockShape, NetworkDescriptor};
pub use error::{Error, Result};
pub use excite::{ExciteConfig, ExciteWeights};
pub use tensor::Tensor4D;
pub use tile::{num_tiles, StripAnchor, TileSpec};
