//! Path-dependent response of short-fiber reinforced composites: a
//! mean-field (Mori-Tanaka) material-point simulator with a J2 elasto-plastic
//! matrix, randomized training-data generation, and a gated-recurrent
//! surrogate network trained on the simulated stress histories.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evaluate;
pub mod homogenize;
pub mod matpoint;
pub mod microstructure;
pub mod pipeline;
pub mod sampling;
pub mod surrogate;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rotation, SymTensor2, SymTensor4};
