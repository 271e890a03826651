//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::{Complex, DMatrix, DVector, RealField};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar the toolkit can run on (`f32` or `f64`).
///
/// Structural tolerances (Hermiticity, unitarity, state validity) depend on
/// the precision, so each implementation carries its own `CHECK_TOL`.
pub trait Real:
    RealField + Copy + Default + Debug + Display + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Relative tolerance for structural input checks.
    const CHECK_TOL: f64;

    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Widens to `f64` for reporting.
    fn as_f64(self) -> f64;

    #[inline]
    fn check_tol() -> Self {
        Self::lit(Self::CHECK_TOL)
    }
}

impl Real for f64 {
    const CHECK_TOL: f64 = 1e-10;

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const CHECK_TOL: f64 = 1e-4;

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Dense complex square matrix used for every operator.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Dense complex column vector.
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}
