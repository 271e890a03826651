//! Hamiltonian families `H(λ)` and their evaluation along a schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::CubicCurve;
use crate::linalg::{check_hermitian, identity, kron_all, pauli, zeros};
use crate::scalar::{c, CMatrix, Real};
use crate::schedule::{check_time, Schedule};

/// Largest supported Ising chain (d = 256).
pub const MAX_ISING_SPINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    TwoLevelField,
    LandauZener,
    TransverseFieldIsing,
    DenseTabulated,
    /// User-assembled families (affine, conjugated spectra, ...).
    Custom,
}

/// A Hermitian generator depending on a parameter vector.
pub trait Hamiltonian<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn family(&self) -> ModelFamily;
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>>;

    /// `∂H/∂λ^(k)`. The default is a central difference with step
    /// `max(1e-5, 1e-5·‖λ‖)`.
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        finite_difference_derivative(self, lambda, k)
    }

    fn has_analytic_derivative(&self) -> bool {
        false
    }
}

pub fn finite_difference_derivative<T: Real, M: Hamiltonian<T> + ?Sized>(
    model: &M,
    lambda: &[T],
    k: usize,
) -> Result<CMatrix<T>> {
    check_params(model.n_params(), lambda)?;
    if k >= lambda.len() {
        return Err(Error::InvalidArgument(format!("parameter index {k} out of range")));
    }
    let norm = lambda.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    let h = T::lit(1e-5).max(T::lit(1e-5) * norm);
    let mut up = lambda.to_vec();
    let mut dn = lambda.to_vec();
    up[k] += h;
    dn[k] -= h;
    let diff = model.evaluate(&up)? - model.evaluate(&dn)?;
    Ok(diff.unscale(h + h))
}

fn check_params<T: Real>(expected: usize, lambda: &[T]) -> Result<()> {
    if lambda.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: lambda.len(),
        });
    }
    if lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite parameter".into()));
    }
    Ok(())
}

/// `H = h_x X + h_y Y + h_z Z`, `λ = (h_x, h_y, h_z)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoLevelField;

impl<T: Real> Hamiltonian<T> for TwoLevelField {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        3
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::TwoLevelField
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        check_params(3, lambda)?;
        let (x, y, z) = (lambda[0], lambda[1], lambda[2]);
        Ok(CMatrix::from_row_slice(
            2,
            2,
            &[c(z, T::zero()), c(x, -y), c(x, y), c(-z, T::zero())],
        ))
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        check_params(3, lambda)?;
        match k {
            0 => Ok(pauli::x()),
            1 => Ok(pauli::y()),
            2 => Ok(pauli::z()),
            _ => Err(Error::InvalidArgument(format!("parameter index {k} out of range"))),
        }
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// `H = (ε/2) Z + (Δ/2) X`, `λ = (ε, Δ)`: bias and tunnelling coupling.
#[derive(Debug, Clone, Copy, Default)]
pub struct LandauZener;

impl<T: Real> Hamiltonian<T> for LandauZener {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        2
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::LandauZener
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        check_params(2, lambda)?;
        let half = T::lit(0.5);
        Ok(pauli::z::<T>().scale(half * lambda[0]) + pauli::x::<T>().scale(half * lambda[1]))
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        check_params(2, lambda)?;
        let half = T::lit(0.5);
        match k {
            0 => Ok(pauli::z::<T>().scale(half)),
            1 => Ok(pauli::x::<T>().scale(half)),
            _ => Err(Error::InvalidArgument(format!("parameter index {k} out of range"))),
        }
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// Open transverse-field Ising chain
/// `H = -J Σ Z_i Z_{i+1} - Γ Σ X_i - Σ h_i Z_i`, `λ = (J, Γ)`.
///
/// The longitudinal fields `h_i` are fixed model constants; nonzero values
/// break the parity and reflection symmetries that otherwise produce exact
/// level crossings.
#[derive(Debug, Clone)]
pub struct TransverseFieldIsing<T: Real> {
    n: usize,
    longitudinal: Vec<T>,
    coupling: CMatrix<T>,
    transverse: CMatrix<T>,
    fields: CMatrix<T>,
}

fn site_operator<T: Real>(n: usize, site: usize, op: &CMatrix<T>) -> CMatrix<T> {
    let factors: Vec<CMatrix<T>> = (0..n)
        .map(|k| if k == site { op.clone() } else { identity(2) })
        .collect();
    kron_all(&factors)
}

impl<T: Real> TransverseFieldIsing<T> {
    pub fn new(n: usize, longitudinal: Vec<T>) -> Result<Self> {
        if n == 0 || n > MAX_ISING_SPINS {
            return Err(Error::InvalidModel(format!(
                "Ising chain length must be in 1..={MAX_ISING_SPINS}, got {n}"
            )));
        }
        let longitudinal = if longitudinal.is_empty() {
            vec![T::zero(); n]
        } else {
            longitudinal
        };
        if longitudinal.len() != n {
            return Err(Error::InvalidModel("one longitudinal field per spin required".into()));
        }
        let d = 1 << n;
        let zs: Vec<CMatrix<T>> = (0..n).map(|i| site_operator(n, i, &pauli::z())).collect();
        let mut coupling = zeros::<T>(d);
        for i in 0..n.saturating_sub(1) {
            coupling -= &zs[i] * &zs[i + 1];
        }
        let mut transverse = zeros::<T>(d);
        for i in 0..n {
            transverse -= site_operator(n, i, &pauli::x());
        }
        let mut fields = zeros::<T>(d);
        for (z, &h) in zs.iter().zip(&longitudinal) {
            fields -= z.scale(h);
        }
        Ok(Self {
            n,
            longitudinal,
            coupling,
            transverse,
            fields,
        })
    }

    pub fn spins(&self) -> usize {
        self.n
    }

    pub fn longitudinal(&self) -> &[T] {
        &self.longitudinal
    }
}

impl<T: Real> Hamiltonian<T> for TransverseFieldIsing<T> {
    fn dim(&self) -> usize {
        1 << self.n
    }
    fn n_params(&self) -> usize {
        2
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::TransverseFieldIsing
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        check_params(2, lambda)?;
        Ok(self.coupling.scale(lambda[0]) + self.transverse.scale(lambda[1]) + &self.fields)
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        check_params(2, lambda)?;
        match k {
            0 => Ok(self.coupling.clone()),
            1 => Ok(self.transverse.clone()),
            _ => Err(Error::InvalidArgument(format!("parameter index {k} out of range"))),
        }
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// Affine family `H(λ) = H_0 + Σ_k λ^(k) H_k`.
#[derive(Debug, Clone)]
pub struct AffineModel<T: Real> {
    base: CMatrix<T>,
    terms: Vec<CMatrix<T>>,
}

impl<T: Real> AffineModel<T> {
    pub fn new(base: CMatrix<T>, terms: Vec<CMatrix<T>>) -> Result<Self> {
        let base = check_hermitian(&base)?;
        let d = base.nrows();
        let terms = terms
            .iter()
            .map(|h| {
                if h.nrows() != d || h.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: h.nrows(),
                    });
                }
                check_hermitian(h)
            })
            .collect::<Result<Vec<_>>>()?;
        if terms.is_empty() {
            return Err(Error::InvalidModel("affine model needs at least one driven term".into()));
        }
        Ok(Self { base, terms })
    }
}

impl<T: Real> Hamiltonian<T> for AffineModel<T> {
    fn dim(&self) -> usize {
        self.base.nrows()
    }
    fn n_params(&self) -> usize {
        self.terms.len()
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Custom
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        check_params(self.terms.len(), lambda)?;
        let mut h = self.base.clone();
        for (term, &l) in self.terms.iter().zip(lambda) {
            h += term.scale(l);
        }
        Ok(h)
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        check_params(self.terms.len(), lambda)?;
        self.terms
            .get(k)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter index {k} out of range")))
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// Fixed spectrum rotated by a one-parameter unitary group,
/// `H(λ) = e^{-iλG} D e^{iλG}`. Degeneracies of `D` persist for every λ.
#[derive(Debug, Clone)]
pub struct ConjugatedSpectrum<T: Real> {
    diagonal: CMatrix<T>,
    generator: CMatrix<T>,
}

impl<T: Real> ConjugatedSpectrum<T> {
    pub fn new(energies: &[T], generator: CMatrix<T>) -> Result<Self> {
        let d = energies.len();
        let generator = check_hermitian(&generator)?;
        if generator.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: generator.nrows(),
            });
        }
        let diagonal = CMatrix::from_fn(d, d, |i, j| if i == j { c(energies[i], T::zero()) } else { c(T::zero(), T::zero()) });
        Ok(Self { diagonal, generator })
    }
}

impl<T: Real> Hamiltonian<T> for ConjugatedSpectrum<T> {
    fn dim(&self) -> usize {
        self.diagonal.nrows()
    }
    fn n_params(&self) -> usize {
        1
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Custom
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        check_params(1, lambda)?;
        let u = crate::linalg::expi_step(&self.generator, lambda[0])?;
        Ok(crate::linalg::symmetrize(&(&u * &self.diagonal * u.adjoint())))
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        if k != 0 {
            return Err(Error::InvalidArgument(format!("parameter index {k} out of range")));
        }
        let h = self.evaluate(lambda)?;
        // dH/dλ = -i [G, H]
        let comm = crate::linalg::commutator(&self.generator, &h);
        Ok(comm.map(|z| c(z.im, -z.re)))
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// Matrices tabulated at sample values of a single parameter, interpolated
/// entrywise by monotone cubics.
#[derive(Debug, Clone)]
pub struct DenseTabulated<T: Real> {
    dim: usize,
    curve: CubicCurve<T>,
}

impl<T: Real> DenseTabulated<T> {
    pub fn new(dim: usize, samples: Vec<(T, CMatrix<T>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        let mut samples = samples;
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut xs = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        for (lam, h) in samples {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "tabulated matrix is {}x{}, expected {dim}x{dim}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            let h = check_hermitian(&h)?;
            xs.push(lam);
            values.push(h.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<T>>());
        }
        let curve = CubicCurve::monotone(xs, values).map_err(|e| Error::InvalidModel(e.to_string()))?;
        Ok(Self { dim, curve })
    }

    pub fn range(&self) -> (T, T) {
        (self.curve.start(), self.curve.end())
    }

    fn unpack(&self, flat: &[T]) -> CMatrix<T> {
        let d = self.dim;
        // column-major flattening, matching nalgebra's storage order
        let m = CMatrix::from_fn(d, d, |i, j| {
            let k = 2 * (j * d + i);
            c(flat[k], flat[k + 1])
        });
        crate::linalg::symmetrize(&m)
    }

    fn check_range(&self, lambda: &[T]) -> Result<T> {
        check_params(1, lambda)?;
        let (lo, hi) = self.range();
        let x = lambda[0];
        if x < lo || x > hi {
            return Err(Error::InvalidModel(format!(
                "parameter {x} outside tabulated range [{lo}, {hi}]"
            )));
        }
        Ok(x)
    }
}

impl<T: Real> Hamiltonian<T> for DenseTabulated<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_params(&self) -> usize {
        1
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::DenseTabulated
    }
    fn evaluate(&self, lambda: &[T]) -> Result<CMatrix<T>> {
        let x = self.check_range(lambda)?;
        Ok(self.unpack(&self.curve.eval(x).0))
    }
    fn param_derivative(&self, lambda: &[T], k: usize) -> Result<CMatrix<T>> {
        let x = self.check_range(lambda)?;
        if k != 0 {
            return Err(Error::InvalidArgument(format!("parameter index {k} out of range")));
        }
        Ok(self.unpack(&self.curve.eval(x).1))
    }
    fn has_analytic_derivative(&self) -> bool {
        true
    }
}

/// On-disk tabulated model:
/// `{"dim": d, "params": 1, "matrices": [{"lambda": [x], "H": [[re, im], ...]}]}`
/// with `H` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dim: usize,
    pub params: usize,
    pub matrices: Vec<TabulatedMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedMatrix {
    pub lambda: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<[f64; 2]>,
}

impl ModelFile {
    pub fn into_model<T: Real>(self) -> Result<DenseTabulated<T>> {
        if self.params != 1 {
            return Err(Error::InvalidModel(format!(
                "tabulated models support a single parameter, got {}",
                self.params
            )));
        }
        let d = self.dim;
        let samples = self
            .matrices
            .into_iter()
            .map(|m| {
                if m.lambda.len() != 1 {
                    return Err(Error::InvalidModel("each matrix needs one lambda value".into()));
                }
                if m.h.len() != d * d {
                    return Err(Error::InvalidModel(format!(
                        "matrix has {} entries, expected {}",
                        m.h.len(),
                        d * d
                    )));
                }
                let h = CMatrix::from_fn(d, d, |i, j| {
                    let [re, im] = m.h[i * d + j];
                    c(T::lit(re), T::lit(im))
                });
                Ok((T::lit(m.lambda[0]), h))
            })
            .collect::<Result<Vec<_>>>()?;
        DenseTabulated::new(d, samples)
    }
}

/// `H(λ_t)`.
pub fn hamiltonian_at<T: Real>(model: &dyn Hamiltonian<T>, sched: &dyn Schedule<T>, t: T) -> Result<CMatrix<T>> {
    let t = check_time(sched, t)?;
    check_compat(model, sched)?;
    let h = model.evaluate(&sched.value(t))?;
    check_hermitian(&h)
}

/// `Ḣ = Σ_k λ̇^(k) ∂H/∂λ^(k)`.
pub fn time_derivative_h<T: Real>(
    model: &dyn Hamiltonian<T>,
    sched: &dyn Schedule<T>,
    t: T,
) -> Result<CMatrix<T>> {
    let t = check_time(sched, t)?;
    check_compat(model, sched)?;
    let lambda = sched.value(t);
    let rate = sched.derivative(t);
    let mut out = zeros::<T>(model.dim());
    for (k, &r) in rate.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::InvalidSchedule(format!("non-finite derivative at t = {t}")));
        }
        if r != T::zero() {
            out += model.param_derivative(&lambda, k)?.scale(r);
        }
    }
    check_hermitian(&out)
}

fn check_compat<T: Real>(model: &dyn Hamiltonian<T>, sched: &dyn Schedule<T>) -> Result<()> {
    if model.n_params() != sched.n_params() {
        return Err(Error::DimensionMismatch {
            expected: model.n_params(),
            got: sched.n_params(),
        });
    }
    Ok(())
}
