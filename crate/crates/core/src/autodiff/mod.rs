//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] is built fresh for every forward pass (define-by-run). Each
//! primitive computes its value eagerly and appends a record; [`Tape::backward`]
//! walks the records in reverse and accumulates adjoints. Learnable tensors
//! live in a [`ParamStore`] and are copied onto the tape as leaves with
//! [`Tape::param`].
//!
//! Every primitive works on `f32` or `f64` through the [`Real`] trait; the
//! gradient checker is `f64` only.

mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Floating-point element type of tensors.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Name stored in checkpoint headers.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensors are limited to rank 3, got shape {0:?}")]
    RankTooHigh(Vec<usize>),
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("index {index} out of range for {op} with bound {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
}
