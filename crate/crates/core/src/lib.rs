//! Channel superfidelity from Kraus representations.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense complex primitives (row-major `vec`, Kronecker products,
//!   reshuffling, exponentials, Hermitian eigendecomposition).
//! - [`channels`]: states, Kraus channels, natural and Choi representations,
//!   purifications.
//! - [`fidelity`]: fidelity, superfidelity, and the closed-form channel
//!   superfidelity together with purification-based oracles.
//! - [`lindblad`]: vectorized master-equation generators and the single-qubit
//!   relaxation channel.
//! - [`control`]: a dephasing spin chain with piecewise-constant controls,
//!   a gradient pulse optimizer, and a Gaussian control-noise sweep.
//! - [`io`]: JSON file formats for channels and states.

pub mod channels;
pub mod control;
pub mod error;
pub mod fidelity;
pub mod io;
pub mod lindblad;
pub mod linalg;
pub mod random;

pub use channels::{
    choi_from_natural, erasure_channel, kraus_from_choi, partial_trace_env, purify, ChoiMatrix,
    DensityOperator, KrausChannel, Purification, SuperoperatorMatrix,
};
pub use error::{Error, Result};
pub use fidelity::{
    channel_fidelity, channel_superfidelity, channel_superfidelity_oracle, fidelity,
    superfidelity, two_channel_fidelity_oracle, SimilarityValue,
};
pub use linalg::{ComplexMatrix, ComplexVector};
