//! Half-plane vortex-particle laboratory.
//!
//! Exact Lamb dipoles, a Lagrangian blob method with image kernels, and the
//! decomposition/monitoring machinery used to measure multi-dipole stability.
//! Numerical code is generic over [`Real`]; the `f64` aliases below are what
//! the CLI and reports use.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants are quoted to more digits than f64 holds.
#![allow(clippy::excessive_precision)]

pub mod decomp;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod inequalities;
pub mod kernels;
pub mod lamb;
pub mod monitors;
pub mod point_vortex;
pub mod special_fn;
pub mod tree;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type used throughout the numerical core.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this type.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn f(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A point of the closed upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point<T> {
    pub x1: T,
    pub x2: T,
}

impl<T: Real> Point<T> {
    pub fn new(x1: T, x2: T) -> Self {
        Self { x1, x2 }
    }

    /// Reflection across the axis x₂ = 0.
    pub fn mirror(self) -> Self {
        Self { x1: self.x1, x2: -self.x2 }
    }

    pub fn dist2(self, other: Self) -> T {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }
}

pub type DipoleSpec = lamb::DipoleSpec<f64>;
pub type NDipoleConfig = lamb::NDipoleConfig<f64>;
pub type ParticleField = field::ParticleField<f64>;
pub type GriddedField = field::GriddedField<f64>;
pub type BorderFamily = decomp::BorderFamily<f64>;
pub type ShiftProbe = decomp::ShiftProbe<f64>;
pub type SimulationState = dynamics::SimulationState<f64>;
pub type IntegratorConfig = dynamics::IntegratorConfig<f64>;
