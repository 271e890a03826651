//! Composite Simpson rules used for every time integral.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cumulative integral on a grid where each step `[t_k, t_{k+1}]` also has a
/// midpoint sample: `out[k] = ∫_{t_0}^{t_k} f`, exact for cubics per step.
pub fn cumulative_simpson_midpoint<T: Real>(times: &[T], nodes: &[T], mids: &[T]) -> Result<Vec<T>> {
    if nodes.len() != times.len() || mids.len() + 1 != times.len() {
        return Err(Error::InvalidGrid(format!(
            "{} times need {} node samples and {} midpoint samples (got {} and {})",
            times.len(),
            times.len(),
            times.len().saturating_sub(1),
            nodes.len(),
            mids.len()
        )));
    }
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let mut out = Vec::with_capacity(times.len());
    let mut acc = T::zero();
    out.push(acc);
    for k in 0..mids.len() {
        let h = times[k + 1] - times[k];
        acc += h / six * (nodes[k] + four * mids[k] + nodes[k + 1]);
        out.push(acc);
    }
    Ok(out)
}

/// Cumulative integral of uniformly spaced samples with spacing `h`.
///
/// Even indices carry the composite Simpson value; odd indices add the
/// one-interval integral of the quadratic through the neighbouring triple.
pub fn cumulative_simpson<T: Real>(values: &[T], h: T) -> Result<Vec<T>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidGrid(format!("Simpson needs at least 3 samples, got {n}")));
    }
    let (three, twelve) = (T::lit(3.0), T::lit(12.0));
    let (four, five, eight) = (T::lit(4.0), T::lit(5.0), T::lit(8.0));
    let mut out = vec![T::zero(); n];
    let mut k = 0;
    while k + 2 < n {
        let (f0, f1, f2) = (values[k], values[k + 1], values[k + 2]);
        out[k + 1] = out[k] + h / twelve * (five * f0 + eight * f1 - f2);
        out[k + 2] = out[k] + h / three * (f0 + four * f1 + f2);
        k += 2;
    }
    if k + 1 < n {
        let (f0, f1, f2) = (values[k - 1], values[k], values[k + 1]);
        out[k + 1] = out[k] + h / twelve * (-f0 + eight * f1 + five * f2);
    }
    Ok(out)
}

pub fn simpson<T: Real>(values: &[T], h: T) -> Result<T> {
    Ok(*cumulative_simpson(values, h)?.last().unwrap())
}
