//! Dense complex operator primitives: Hermitian eigendecomposition, operator
//! norm, the unitary step `exp(-i A dt)` and a few matrix helpers.
//!
//! ħ = 1 throughout; times are in inverse energy units.

use nalgebra::linalg::{SymmetricEigen, SVD};
use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::scalar::{c, cr, CMatrix, Real};

const MAX_ITER: usize = 10_000;

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
///
/// Column `k` of `vectors` is the eigenvector belonging to `values[k]`.
#[derive(Debug, Clone)]
pub struct HermitianEig<T: Real> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEig<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(values) V†`.
    pub fn reconstruct(&self) -> CMatrix<T> {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let v = self.values[j];
            scaled.column_mut(j).iter_mut().for_each(|z| *z = z.scale(v));
        }
        &scaled * self.vectors.adjoint()
    }
}

pub fn identity<T: Real>(d: usize) -> CMatrix<T> {
    CMatrix::<T>::identity(d, d)
}

pub fn zeros<T: Real>(d: usize) -> CMatrix<T> {
    CMatrix::<T>::zeros(d, d)
}

/// `[A, B] = AB - BA`.
pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

pub fn frobenius<T: Real>(a: &CMatrix<T>) -> T {
    a.iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr())
        .sqrt()
}

pub fn is_finite<T: Real>(a: &CMatrix<T>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square<T: Real>(a: &CMatrix<T>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

fn check_finite<T: Real>(a: &CMatrix<T>) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `‖A - A†‖_F / max(‖A‖_F, tiny)`.
pub fn hermiticity_residual<T: Real>(a: &CMatrix<T>) -> T {
    let scale = frobenius(a);
    let diff = frobenius(&(a - a.adjoint()));
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}

/// Rejects non-square, non-finite or non-Hermitian input; returns `(A + A†)/2`.
pub fn check_hermitian<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    check_square(a)?;
    check_finite(a)?;
    let residual = hermiticity_residual(a);
    if residual > T::check_tol() {
        return Err(Error::NotHermitian {
            residual: residual.as_f64(),
        });
    }
    Ok(symmetrize(a))
}

pub fn symmetrize<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    (a + a.adjoint()).scale(T::lit(0.5))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig<T: Real>(a: &CMatrix<T>) -> Result<HermitianEig<T>> {
    let sym = check_hermitian(a)?;
    eig_of_symmetrized(sym)
}

pub(crate) fn eig_of_symmetrized<T: Real>(sym: CMatrix<T>) -> Result<HermitianEig<T>> {
    let d = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, T::default_epsilon(), MAX_ITER).ok_or(Error::EigenFailed)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(d, d, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok(HermitianEig { values, vectors })
}

/// Largest singular value.
pub fn operator_norm<T: Real>(a: &CMatrix<T>) -> Result<T> {
    check_finite(a)?;
    Ok(spectral_norm(a))
}

/// Largest singular value of a (possibly rectangular) matrix assumed finite.
pub(crate) fn spectral_norm<T: Real>(a: &CMatrix<T>) -> T {
    if a.nrows() == 0 || a.ncols() == 0 {
        return T::zero();
    }
    if a.ncols() == 1 || a.nrows() == 1 {
        return frobenius(a);
    }
    match SVD::try_new(a.clone(), false, false, T::default_epsilon(), MAX_ITER) {
        Some(svd) => svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s)),
        // Fall back to the Gram matrix; only reachable on pathological input.
        None => {
            let gram = symmetrize(&(a.adjoint() * a));
            eig_of_symmetrized(gram)
                .map(|e| e.values.last().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
                .unwrap_or_else(|_| frobenius(a))
        }
    }
}

/// Sum of singular values.
pub(crate) fn nuclear_norm<T: Real>(a: &CMatrix<T>) -> Result<T> {
    check_finite(a)?;
    match SVD::try_new(a.clone(), false, false, T::default_epsilon(), MAX_ITER) {
        Some(svd) => Ok(svd.singular_values.iter().fold(T::zero(), |acc, &s| acc + s)),
        None => {
            let gram = symmetrize(&(a.adjoint() * a));
            let e = eig_of_symmetrized(gram)?;
            Ok(e.values.iter().fold(T::zero(), |acc, &v| acc + v.max(T::zero()).sqrt()))
        }
    }
}

/// `exp(-i A dt)` for Hermitian `A`.
pub fn expi_step<T: Real>(a: &CMatrix<T>, dt: T) -> Result<CMatrix<T>> {
    let eig = hermitian_eig(a)?;
    Ok(expi_from_eig(&eig, dt))
}

pub(crate) fn expi_from_eig<T: Real>(eig: &HermitianEig<T>, dt: T) -> CMatrix<T> {
    let d = eig.dim();
    let mut scaled = eig.vectors.clone();
    for j in 0..d {
        let phase = -eig.values[j] * dt;
        let z = c(phase.cos(), phase.sin());
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= z);
    }
    &scaled * eig.vectors.adjoint()
}

/// `‖U†U - 1‖`.
pub fn unitarity_residual<T: Real>(u: &CMatrix<T>) -> T {
    let d = u.nrows();
    spectral_norm(&(u.adjoint() * u - identity::<T>(d)))
}

/// `Tr[A]` as a complex number.
pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    (0..a.nrows().min(a.ncols())).fold(cr(T::zero()), |acc, i| acc + a[(i, i)])
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<T: Real>(factors: &[CMatrix<T>]) -> CMatrix<T> {
    factors
        .iter()
        .fold(CMatrix::<T>::identity(1, 1), |acc, f| acc.kronecker(f))
}

pub mod pauli {
    use super::*;

    pub fn x<T: Real>() -> CMatrix<T> {
        let (o, l) = (cr(T::zero()), cr(T::one()));
        CMatrix::from_row_slice(2, 2, &[o, l, l, o])
    }

    pub fn y<T: Real>() -> CMatrix<T> {
        let o = cr(T::zero());
        CMatrix::from_row_slice(2, 2, &[o, c(T::zero(), -T::one()), c(T::zero(), T::one()), o])
    }

    pub fn z<T: Real>() -> CMatrix<T> {
        let (o, l) = (cr(T::zero()), cr(T::one()));
        CMatrix::from_row_slice(2, 2, &[l, o, o, -l])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, random_matrix, rng};
    use rand::Rng;

    fn diag(v: &[f64]) -> CMatrix<f64> {
        let d = v.len();
        CMatrix::from_fn(d, d, |i, j| if i == j { cr(v[i]) } else { cr(0.0) })
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = hermitian_eig(&diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pauli_x_eigenvectors_are_hadamard_columns() {
        let e = hermitian_eig(&pauli::x::<f64>()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let s = 0.5f64.sqrt();
        // up to a global phase per column
        let minus = [s, -s];
        let plus = [s, s];
        for (k, target) in [minus, plus].iter().enumerate() {
            let overlap = e.vectors[(0, k)].conj() * target[0] + e.vectors[(1, k)].conj() * target[1];
            assert!((overlap.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut r = rng(7);
        for _ in 0..5 {
            let a = random_hermitian(&mut r, 8, 1.0);
            let e = hermitian_eig(&a).unwrap();
            let scale = operator_norm(&a).unwrap();
            assert!(frobenius(&(e.reconstruct() - &a)) <= 1e-10 * scale);
            assert!(unitarity_residual(&e.vectors) <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut a = pauli::x::<f64>();
        a[(0, 1)] = cr(2.0);
        assert!(matches!(hermitian_eig(&a), Err(Error::NotHermitian { .. })));
        let mut b = pauli::z::<f64>();
        b[(0, 0)] = cr(f64::NAN);
        assert!(matches!(hermitian_eig(&b), Err(Error::NonFinite)));
        assert!(matches!(operator_norm(&b), Err(Error::NonFinite)));
        let rect = CMatrix::<f64>::zeros(2, 3);
        assert!(matches!(hermitian_eig(&rect), Err(Error::NotSquare { .. })));
        assert!(matches!(expi_step(&a, 0.1), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn norm_of_simple_operators() {
        for d in 1..6 {
            assert!((operator_norm(&identity::<f64>(d)).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((operator_norm(&pauli::y::<f64>()).unwrap() - 1.0).abs() < 1e-14);
    }

    /// Sampling oracle: the supremum of ‖Av‖ over unit vectors, estimated from
    /// 10⁴ random vectors and then polished by power iteration on A†A starting
    /// from the best sample.
    fn sampled_sup(a: &CMatrix<f64>, seed: u64) -> (f64, f64) {
        let mut r = rng(seed);
        let d = a.ncols();
        let mut best = 0.0;
        let mut best_v = None;
        for _ in 0..10_000 {
            let v = crate::random::random_unit_vector(&mut r, d);
            let n = (a * &v).norm();
            if n > best {
                best = n;
                best_v = Some(v);
            }
        }
        let mut v = best_v.unwrap();
        let gram = a.adjoint() * a;
        let mut polished = best;
        for _ in 0..20_000 {
            let w = &gram * &v;
            v = w.unscale(w.norm());
            polished = (a * &v).norm();
        }
        (best, polished)
    }

    #[test]
    fn norm_matches_sampled_supremum() {
        let mut r = rng(11);
        for seed in 0..3 {
            let a = random_matrix(&mut r, 6, 1.0);
            let norm = operator_norm(&a).unwrap();
            let (raw, polished) = sampled_sup(&a, 100 + seed);
            assert!(raw <= norm + 1e-12);
            assert!((polished - norm).abs() < 1e-6, "{polished} vs {norm}");
        }
    }

    #[test]
    fn norm_properties() {
        let mut r = rng(3);
        for _ in 0..20 {
            let a = random_matrix(&mut r, 5, 1.0);
            let b = random_matrix(&mut r, 5, 2.0);
            let na = operator_norm(&a).unwrap();
            let nb = operator_norm(&b).unwrap();
            assert!(operator_norm(&(&a * &b)).unwrap() <= na * nb * (1.0 + 1e-12));
            assert!((operator_norm(&a.adjoint()).unwrap() - na).abs() < 1e-12 * na);
            // rank-k projector from random orthonormal columns
            let h = random_hermitian(&mut r, 5, 1.0);
            let e = hermitian_eig(&h).unwrap();
            let k = r.random_range(1..5);
            let cols = e.vectors.columns(0, k);
            let p = &cols * cols.adjoint();
            assert!((operator_norm(&p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expi_step_cases() {
        let u = expi_step(&zeros::<f64>(3), 0.7).unwrap();
        assert!(frobenius(&(u - identity::<f64>(3))) < 1e-15);
        let u = expi_step(&pauli::z::<f64>(), std::f64::consts::PI).unwrap();
        assert!(frobenius(&(u + identity::<f64>(2))) < 1e-14);
        let mut r = rng(5);
        for d in [2, 4, 7] {
            let a = random_hermitian(&mut r, d, 3.0);
            let u = expi_step(&a, 0.1).unwrap();
            assert!(unitarity_residual(&u) <= 1e-12 * d as f64);
            let u1 = expi_step(&a, 0.3).unwrap();
            let u2 = expi_step(&a, -0.45).unwrap();
            let u12 = expi_step(&a, -0.15).unwrap();
            assert!(frobenius(&(&u1 * &u2 - u12)) < 1e-10);
        }
    }

    #[test]
    fn single_precision_paths_work() {
        let e = hermitian_eig(&pauli::x::<f32>()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-6);
        assert!((operator_norm(&pauli::y::<f32>()).unwrap() - 1.0).abs() < 1e-6);
        let u = expi_step(&pauli::z::<f32>(), 0.3).unwrap();
        assert!(unitarity_residual(&u) < 1e-5);
    }
}
