//! Piecewise-cubic Hermite curves in R^p: natural cubic splines (C²) and
//! monotone PCHIP interpolants (C¹, shape preserving per component).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A vector-valued piecewise cubic stored in Hermite form: knot positions,
/// knot values and knot derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CubicCurve<T: Real> {
    xs: Vec<T>,
    values: Vec<Vec<T>>,
    slopes: Vec<Vec<T>>,
}

fn validate<T: Real>(xs: &[T], values: &[Vec<T>]) -> Result<usize> {
    if xs.len() < 2 || xs.len() != values.len() {
        return Err(Error::InvalidSchedule(format!(
            "need at least two knots with matching values (got {} positions, {} values)",
            xs.len(),
            values.len()
        )));
    }
    let p = values[0].len();
    if p == 0 || values.iter().any(|v| v.len() != p) {
        return Err(Error::InvalidSchedule("knot values must share a nonzero length".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) || values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSchedule("non-finite knot data".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("knot positions must be strictly increasing".into()));
    }
    Ok(p)
}

impl<T: Real> CubicCurve<T> {
    /// Natural cubic spline (zero second derivative at both ends).
    pub fn natural(xs: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        let p = validate(&xs, &values)?;
        let n = xs.len();
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut slopes = vec![vec![T::zero(); p]; n];
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        for comp in 0..p {
            let y: Vec<T> = values.iter().map(|v| v[comp]).collect();
            let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
            // second derivatives m[0] = m[n-1] = 0; Thomas algorithm on interior rows
            let mut m = vec![T::zero(); n];
            if n > 2 {
                let k = n - 2;
                let mut diag = vec![T::zero(); k];
                let mut upper = vec![T::zero(); k];
                let mut rhs = vec![T::zero(); k];
                for j in 0..k {
                    let i = j + 1;
                    diag[j] = two * (h[i - 1] + h[i]);
                    upper[j] = h[i];
                    rhs[j] = six * (delta[i] - delta[i - 1]);
                }
                for j in 1..k {
                    let w = h[j] / diag[j - 1];
                    diag[j] -= w * upper[j - 1];
                    rhs[j] = rhs[j] - w * rhs[j - 1];
                }
                m[k] = rhs[k - 1] / diag[k - 1];
                for j in (0..k - 1).rev() {
                    m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
                }
            }
            for i in 0..n - 1 {
                slopes[i][comp] = delta[i] - (two * m[i] + m[i + 1]) * h[i] / six;
            }
            slopes[n - 1][comp] = delta[n - 2] + (m[n - 2] + two * m[n - 1]) * h[n - 2] / six;
        }
        Ok(Self { xs, values, slopes })
    }

    /// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
    pub fn monotone(xs: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        let p = validate(&xs, &values)?;
        let n = xs.len();
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut slopes = vec![vec![T::zero(); p]; n];
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        for comp in 0..p {
            let y: Vec<T> = values.iter().map(|v| v[comp]).collect();
            let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
            if n == 2 {
                slopes[0][comp] = delta[0];
                slopes[1][comp] = delta[0];
                continue;
            }
            for i in 1..n - 1 {
                let (d0, d1) = (delta[i - 1], delta[i]);
                slopes[i][comp] = if d0 * d1 <= T::zero() {
                    T::zero()
                } else {
                    let w1 = two * h[i] + h[i - 1];
                    let w2 = h[i] + two * h[i - 1];
                    (w1 + w2) / (w1 / d0 + w2 / d1)
                };
            }
            let end = |h0: T, h1: T, d0: T, d1: T| {
                let s = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
                if s * d0 <= T::zero() {
                    T::zero()
                } else if d0 * d1 <= T::zero() && s.abs() > three * d0.abs() {
                    three * d0
                } else {
                    s
                }
            };
            slopes[0][comp] = end(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1][comp] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, values, slopes })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn knots(&self) -> &[T] {
        &self.xs
    }

    pub fn knot_values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn start(&self) -> T {
        self.xs[0]
    }

    pub fn end(&self) -> T {
        self.xs[self.xs.len() - 1]
    }

    fn segment(&self, x: T) -> usize {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x);
        i.clamp(1, n - 1) - 1
    }

    /// Value and derivative at `x` (the end segments extend outside the range).
    pub fn eval(&self, x: T) -> (Vec<T>, Vec<T>) {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + one;
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        let d00 = (six * s2 - six * s) / h;
        let d10 = three * s2 - T::lit(4.0) * s + one;
        let d01 = (-six * s2 + six * s) / h;
        let d11 = three * s2 - two * s;
        let (y0, y1) = (&self.values[i], &self.values[i + 1]);
        let (m0, m1) = (&self.slopes[i], &self.slopes[i + 1]);
        let p = self.dim();
        let mut val = Vec::with_capacity(p);
        let mut der = Vec::with_capacity(p);
        for k in 0..p {
            val.push(h00 * y0[k] + h10 * h * m0[k] + h01 * y1[k] + h11 * h * m1[k]);
            der.push(d00 * y0[k] + d10 * m0[k] + d01 * y1[k] + d11 * m1[k]);
        }
        (val, der)
    }
}
