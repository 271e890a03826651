//! Bures angle between density matrices and the speed-limit chain
//! `L ≤ ∫ ΔH_cd dt ≤ ∫ ‖(1 - P_m) Ṗ_m‖ dt` for adiabatically transported states.

use serde::{Deserialize, Serialize};

use crate::dynamics::{FrameSeries, PropagatorPair};
use crate::error::{Error, Result};
use crate::linalg::{
    check_hermitian, eig_of_symmetrized, expi_step, identity, nuclear_norm, spectral_norm, symmetrize, trace, HermitianEig,
};
use crate::quadrature::cumulative_simpson_midpoint;
use crate::spectral::SpectralFrame;
use crate::scalar::{cr, CMatrix, Real};

/// Tolerance for positivity, trace and support checks on density matrices.
pub const STATE_TOL: f64 = 1e-10;

fn state_eig<T: Real>(rho: &CMatrix<T>) -> Result<HermitianEig<T>> {
    let sym = check_hermitian(rho).map_err(|e| Error::InvalidState(e.to_string()))?;
    let tr = trace(&sym).re;
    let tol = T::lit(STATE_TOL).max(T::check_tol());
    if (tr - T::one()).abs() > tol {
        return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
    }
    let eig = eig_of_symmetrized(sym)?;
    if eig.values[0] < -tol {
        return Err(Error::InvalidState(format!("negative eigenvalue {}", eig.values[0])));
    }
    Ok(eig)
}

fn sqrt_psd<T: Real>(eig: &HermitianEig<T>) -> CMatrix<T> {
    // eigenvalues at roundoff level would contribute their square roots
    let floor = T::default_epsilon() * T::lit(10.0 * eig.dim() as f64);
    let mut scaled = eig.vectors.clone();
    for (j, &v) in eig.values.iter().enumerate() {
        let s = if v > floor { v.sqrt() } else { T::zero() };
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= cr(s));
    }
    &scaled * eig.vectors.adjoint()
}

fn is_pure<T: Real>(eig: &HermitianEig<T>) -> bool {
    let d = eig.values.len();
    let tol = T::lit(STATE_TOL).max(T::check_tol());
    eig.values[..d - 1].iter().all(|v| v.abs() <= tol)
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity<T: Real>(rho: &CMatrix<T>, sigma: &CMatrix<T>) -> Result<T> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            got: sigma.nrows(),
        });
    }
    let a = state_eig(rho)?;
    let b = state_eig(sigma)?;
    if is_pure(&a) || is_pure(&b) {
        // F = ⟨ψ|σ|ψ⟩ when either state is pure
        let (pure, other) = if is_pure(&a) { (&a, sigma) } else { (&b, rho) };
        let psi = pure.vectors.column(pure.values.len() - 1);
        let f = (psi.adjoint() * other * psi)[(0, 0)].re;
        return Ok(f.max(T::zero()).min(T::one()));
    }
    // Tr √(√ρ σ √ρ) is the sum of singular values of √ρ √σ
    let s = nuclear_norm(&(sqrt_psd(&a) * sqrt_psd(&b)))?;
    Ok((s * s).min(T::one()))
}

/// Bures angle `arccos √F`, in `[0, π/2]`.
pub fn bures_angle<T: Real>(rho: &CMatrix<T>, sigma: &CMatrix<T>) -> Result<T> {
    let f = fidelity(rho, sigma)?;
    Ok(f.sqrt().min(T::one()).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QslChain<T> {
    pub bures_angle: T,
    pub cd_std_integral: T,
    pub qgt_integral: T,
}

impl<T: Real> QslChain<T> {
    /// Both inequalities of the chain hold within `slack`.
    pub fn is_ordered(&self, slack: T) -> bool {
        self.bures_angle <= self.cd_std_integral + slack && self.cd_std_integral <= self.qgt_integral + slack
    }
}

/// Speed-limit chain for `ρ_m(0)` supported in level `m`, evaluated at
/// node `k`. The state is carried by the adiabatic propagator (a half step
/// reaches the midpoints) and projected back onto level `m` to remove the
/// integrator's leakage. Integrals use the same Simpson rule as the bounds.
pub fn qsl_chain<T: Real>(
    frames: &FrameSeries<T>,
    pair: &PropagatorPair<T>,
    m: usize,
    rho0: &CMatrix<T>,
    k: usize,
) -> Result<QslChain<T>> {
    let f0 = frames.node(0);
    let d = f0.dim();
    state_eig(rho0)?;
    if rho0.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho0.nrows(),
        });
    }
    let outside = identity::<T>(d) - f0.projector(m)?;
    let leak = spectral_norm(&(outside * rho0));
    if leak > T::lit(STATE_TOL).max(T::check_tol()) {
        return Err(Error::InvalidState(format!("state leaks {:e} outside level {m}", leak.as_f64())));
    }
    let grid = frames.grid();
    if k > grid.steps() {
        return Err(Error::InvalidGrid(format!("node {k} beyond {} steps", grid.steps())));
    }
    let spread = |frame: &SpectralFrame<T>, u: &CMatrix<T>| -> Result<(T, CMatrix<T>)> {
        let p = frame.projector(m)?;
        let moved = &p * (u * rho0 * u.adjoint()) * &p;
        let rho = moved.unscale(trace(&moved).re);
        let hc = frame.h_cd();
        let mean = trace(&(hc * &rho)).re;
        let second = trace(&(hc * hc * &rho)).re;
        Ok(((second - mean * mean).max(T::zero()).sqrt(), rho))
    };
    let mut cd_nodes = Vec::with_capacity(k + 1);
    let mut cd_mids = Vec::with_capacity(k);
    let mut rho_k = rho0.clone();
    for j in 0..=k {
        let (s, rho) = spread(frames.node(j), pair.adiabatic(j))?;
        cd_nodes.push(s);
        if j == k {
            rho_k = symmetrize(&rho);
            break;
        }
        let mid = frames.mid(j);
        let g = mid.eig().reconstruct() + mid.h_cd();
        let half = expi_step(&g, grid.step(j) / T::lit(2.0))? * pair.adiabatic(j);
        cd_mids.push(spread(mid, &half)?.0);
    }
    let times = &grid.times()[..=k];
    let qgt_nodes: Vec<T> = frames.nodes()[..=k].iter().map(|f| f.qgt_norm(m)).collect::<Result<_>>()?;
    let qgt_mids: Vec<T> = frames.mids()[..k].iter().map(|f| f.qgt_norm(m)).collect::<Result<_>>()?;
    let last = |v: Vec<T>| *v.last().unwrap();
    Ok(QslChain {
        bures_angle: bures_angle(rho0, &rho_k)?,
        cd_std_integral: last(cumulative_simpson_midpoint(times, &cd_nodes, &cd_mids)?),
        qgt_integral: last(cumulative_simpson_midpoint(times, &qgt_nodes, &qgt_mids)?),
    })
}
