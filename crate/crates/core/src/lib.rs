//! Desk-scale dense tensor engine: f32 storage, reverse-mode autodiff,
//! an Adam optimizer, pixel-domain image/matte carriers, and the shared
//! binary checkpoint format used by every model in the workspace.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod param;
pub mod pixel;
#[cfg(any(test, feature = "refcheck"))]
pub mod refcheck;
pub mod rng;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Section;
pub use error::{Error, Result};
pub use param::Parameter;
pub use pixel::{AlphaMatte, Image};
pub use tensor::{backward, Gradients, Tensor};
