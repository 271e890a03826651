//! Seeded random operators, states and schedules for tests and certification runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{expi_step, symmetrize};
use crate::scalar::{c, CMatrix, CVector};
use crate::schedule::ParameterSchedule;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

/// Ginibre matrix with entries of standard deviation `scale`.
pub fn random_matrix<R: Rng>(r: &mut R, d: usize, scale: f64) -> CMatrix<f64> {
    CMatrix::from_fn(d, d, |_, _| c(gauss(r) * scale, gauss(r) * scale))
}

pub fn random_hermitian<R: Rng>(r: &mut R, d: usize, scale: f64) -> CMatrix<f64> {
    symmetrize(&random_matrix(r, d, scale))
}

pub fn random_unitary<R: Rng>(r: &mut R, d: usize) -> CMatrix<f64> {
    let h = random_hermitian(r, d, 2.0);
    expi_step(&h, 1.0).expect("random Hermitian is Hermitian")
}

pub fn random_unit_vector<R: Rng>(r: &mut R, d: usize) -> CVector<f64> {
    let v = CVector::from_fn(d, |_, _| c(gauss(r), gauss(r)));
    let n = v.norm();
    v.unscale(n)
}

/// Random density matrix `G G† / Tr` of the given rank.
pub fn random_density<R: Rng>(r: &mut R, d: usize, rank: usize) -> CMatrix<f64> {
    let g = CMatrix::from_fn(d, rank, |_, _| c(gauss(r), gauss(r)));
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho.unscale(tr)
}

/// Smooth random schedule: a natural cubic spline through `n_knots` random
/// control points around `center`, each coordinate displaced by at most
/// `spread`.
pub fn random_spline_schedule<R: Rng>(
    r: &mut R,
    center: &[f64],
    spread: f64,
    n_knots: usize,
    duration: f64,
) -> ParameterSchedule<f64> {
    let n_knots = n_knots.max(2);
    let knots: Vec<(f64, Vec<f64>)> = (0..n_knots)
        .map(|k| {
            let t = duration * k as f64 / (n_knots - 1) as f64;
            let lam = center
                .iter()
                .map(|&x| x + spread * (2.0 * r.random::<f64>() - 1.0))
                .collect();
            (t, lam)
        })
        .collect();
    ParameterSchedule::piecewise_cubic(knots).expect("valid random knots")
}
