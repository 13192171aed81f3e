//! Dense semantic correspondence between two images by PatchMatch over a
//! coarse-to-fine pyramid of CNN features, with a bidirectional matching
//! constraint and latent-image reconstruction by feature deconvolution.
//!
//! The entry point is [`pipeline::run`]; the stages it is built from are
//! public for direct use and testing:
//!
//! - [`tensor`]: feature maps, nearest-neighbor fields, images, warping
//! - [`net`]: the feed-forward network, its file formats, forward and backward passes
//! - [`deconv`]: inverting a subnet by first-order optimization
//! - [`matching`]: PatchMatch with the bidirectional patch cost
//! - [`fuse`]: response-driven blending of content and transferred detail
//! - [`pipeline`]: orchestration, output aggregation and WLS refinement

pub mod deconv;
pub mod error;
pub mod fuse;
pub mod io;
pub mod matching;
pub mod net;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use net::{load_network, Network, Subnet};
pub use pipeline::{run, AnalogyResult, Mode, PipelineConfig};
pub use tensor::{Coord, FeatureMap, Image, NNField, ScalarMap};
