//! Scalar abstractions shared by the numeric kernels.
//!
//! The assignment solver and the correlation clustering only need an ordered
//! field, so they accept exact rationals as well as floats. The Kalman filter
//! needs square roots and infinities and therefore asks for [`RealScalar`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumAssign};

/// Ordered field element: f32, f64, or an exact rational.
pub trait Scalar: Num + NumAssign + Copy + PartialOrd + Debug + 'static {}

impl<T> Scalar for T where T: Num + NumAssign + Copy + PartialOrd + Debug + 'static {}

/// Floating point scalar (f32 or f64).
pub trait RealScalar: Scalar + Float + FromPrimitive {}

impl<T> RealScalar for T where T: Scalar + Float + FromPrimitive {}
