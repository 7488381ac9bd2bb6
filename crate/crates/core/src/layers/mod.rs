//! Learnable blocks with explicit forward and backward passes.
//!
//! Every layer works on (batch, length, channels) tensors. Backward passes
//! are pure: they return the input gradient and parameter gradients and
//! leave accumulation to the caller.

mod chebyshev;
mod conv;
mod linear;
mod mlp;

pub use chebyshev::{chebyshev_basis, ChebyKanGrads, ChebyKanLayer};
pub use conv::{DepthwiseConv, DepthwiseConvGrads};
pub use linear::{Axis, LinearGrads, LinearMap};
pub use mlp::{Mlp, MlpGrads};
