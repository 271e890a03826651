//! Instantaneous spectral frames: degeneracy-grouped projectors, their time
//! derivatives, the counterdiabatic Hamiltonian and quantum-geometric-tensor
//! norms.
//!
//! Everything is evaluated in the instantaneous eigenbasis `V` with
//! `W = V† Ḣ V`. For levels `m ≠ n` the blocks of `Ṗ_n` are
//! `W_ab / (E_n - E_m)`, which is gauge-free because only whole level blocks
//! enter.

use std::ops::Range;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, eig_of_symmetrized, spectral_norm, HermitianEig};
use crate::model::{hamiltonian_at, time_derivative_h, Hamiltonian};
use crate::scalar::{c, CMatrix, Real};
use crate::schedule::Schedule;

/// Relative degeneracy tolerance used when none is supplied.
pub const DEFAULT_DELTA_DEG_REL: f64 = 1e-8;

/// Gaps below this multiple of `delta_deg` are flagged as near crossings.
pub const NEAR_CROSSING_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Level<T: Real> {
    pub energy: T,
    pub multiplicity: usize,
    columns: Range<usize>,
}

impl<T: Real> Level<T> {
    pub fn columns(&self) -> Range<usize> {
        self.columns.clone()
    }
}

/// Spectral data at one instant, including the rate of change `Ḣ`.
#[derive(Debug, Clone)]
pub struct SpectralFrame<T: Real> {
    pub t: T,
    pub delta_deg: T,
    eig: HermitianEig<T>,
    levels: Vec<Level<T>>,
    level_of: Vec<usize>,
    w: CMatrix<T>,
    h_cd: CMatrix<T>,
    min_gap: Option<T>,
}

fn group_levels<T: Real>(values: &[T], delta: T) -> Vec<Level<T>> {
    let mut levels: Vec<Level<T>> = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > delta {
            let slice = &values[start..k];
            let mean = slice.iter().fold(T::zero(), |a, &x| a + x) / T::lit(slice.len() as f64);
            levels.push(Level {
                energy: mean,
                multiplicity: k - start,
                columns: start..k,
            });
            start = k;
        }
    }
    levels
}

impl<T: Real> SpectralFrame<T> {
    /// Builds a frame from `H` and `Ḣ` at time `t`. `delta_deg` defaults to
    /// `1e-8·‖H‖`.
    pub fn from_matrices(t: T, h: &CMatrix<T>, h_dot: &CMatrix<T>, delta_deg: Option<T>) -> Result<Self> {
        let h = check_hermitian(h)?;
        let eig = eig_of_symmetrized(h)?;
        Self::from_eig(t, eig, h_dot, delta_deg)
    }

    /// Builds a frame from an existing eigendecomposition (any orthonormal
    /// basis inside each degenerate eigenspace is accepted).
    pub fn from_eig(t: T, eig: HermitianEig<T>, h_dot: &CMatrix<T>, delta_deg: Option<T>) -> Result<Self> {
        let d = eig.dim();
        let h_dot = check_hermitian(h_dot)?;
        if h_dot.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: h_dot.nrows(),
            });
        }
        let scale = eig
            .values
            .iter()
            .fold(T::zero(), |m, &e| m.max(e.abs()));
        let delta = match delta_deg {
            Some(x) if x >= T::zero() => x,
            Some(_) => return Err(Error::InvalidArgument("delta_deg must be nonnegative".into())),
            None => (T::lit(DEFAULT_DELTA_DEG_REL) * scale).max(T::default_epsilon()),
        };
        let levels = group_levels(&eig.values, delta);
        let mut min_gap: Option<T> = None;
        for (k, pair) in levels.windows(2).enumerate() {
            let gap = pair[1].energy - pair[0].energy;
            if gap <= delta {
                return Err(Error::GapClosure {
                    t: t.as_f64(),
                    lower: k,
                    upper: k + 1,
                    gap: gap.as_f64(),
                    delta_deg: delta.as_f64(),
                });
            }
            min_gap = Some(min_gap.map_or(gap, |g| g.min(gap)));
        }
        let mut level_of = vec![0; d];
        for (n, lvl) in levels.iter().enumerate() {
            for a in lvl.columns() {
                level_of[a] = n;
            }
        }
        let w = eig.vectors.adjoint() * &h_dot * &eig.vectors;
        let mut frame = Self {
            t,
            delta_deg: delta,
            eig,
            levels,
            level_of,
            w,
            h_cd: CMatrix::zeros(d, d),
            min_gap,
        };
        frame.h_cd = frame.build_cd();
        Ok(frame)
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    pub fn levels(&self) -> &[Level<T>] {
        &self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn eig(&self) -> &HermitianEig<T> {
        &self.eig
    }

    /// `V† Ḣ V`.
    pub fn rate_in_eigenbasis(&self) -> &CMatrix<T> {
        &self.w
    }

    /// Smallest gap between adjacent levels (`None` for a single level).
    pub fn min_gap(&self) -> Option<T> {
        self.min_gap
    }

    pub fn near_crossing(&self) -> bool {
        self.min_gap
            .is_some_and(|g| g < T::lit(NEAR_CROSSING_FACTOR) * self.delta_deg)
    }

    pub fn check_level(&self, n: usize) -> Result<&Level<T>> {
        self.levels.get(n).ok_or(Error::InvalidLevel {
            index: n,
            count: self.levels.len(),
        })
    }

    /// Orthonormal basis (d × multiplicity) of level `n`.
    pub fn level_basis(&self, n: usize) -> Result<CMatrix<T>> {
        let lvl = self.check_level(n)?;
        Ok(self.eig.vectors.columns(lvl.columns.start, lvl.multiplicity).into_owned())
    }

    pub fn projector(&self, n: usize) -> Result<CMatrix<T>> {
        let basis = self.level_basis(n)?;
        Ok(&basis * basis.adjoint())
    }

    pub fn projectors(&self) -> Vec<CMatrix<T>> {
        (0..self.n_levels()).map(|n| self.projector(n).unwrap()).collect()
    }

    fn to_lab(&self, k: &CMatrix<T>) -> CMatrix<T> {
        &self.eig.vectors * k * self.eig.vectors.adjoint()
    }

    /// `Ṗ_n` in the eigenbasis for a given `W = V† Ḣ V`.
    fn projector_rate_eigenbasis(&self, w: &CMatrix<T>, n: usize) -> CMatrix<T> {
        let d = self.dim();
        let en = self.levels[n].energy;
        CMatrix::from_fn(d, d, |a, b| {
            let (la, lb) = (self.level_of[a], self.level_of[b]);
            if la == n && lb != n {
                w[(a, b)].unscale(en - self.levels[lb].energy)
            } else if lb == n && la != n {
                w[(a, b)].unscale(en - self.levels[la].energy)
            } else {
                c(T::zero(), T::zero())
            }
        })
    }

    /// `Ṗ_n = Σ_{m≠n} (P_m Ḣ P_n + P_n Ḣ P_m) / (E_n - E_m)`.
    pub fn projector_derivative(&self, n: usize) -> Result<CMatrix<T>> {
        self.check_level(n)?;
        Ok(self.to_lab(&self.projector_rate_eigenbasis(&self.w, n)))
    }

    pub fn projector_derivatives(&self) -> Vec<CMatrix<T>> {
        (0..self.n_levels())
            .map(|n| self.to_lab(&self.projector_rate_eigenbasis(&self.w, n)))
            .collect()
    }

    fn build_cd(&self) -> CMatrix<T> {
        // H_cd = i Σ_{m≠n} P_m Ḣ P_n / (E_n - E_m)
        let d = self.dim();
        let k = CMatrix::from_fn(d, d, |a, b| {
            let (la, lb) = (self.level_of[a], self.level_of[b]);
            if la == lb {
                c(T::zero(), T::zero())
            } else {
                let z = self.w[(a, b)].unscale(self.levels[lb].energy - self.levels[la].energy);
                c(-z.im, z.re)
            }
        });
        crate::linalg::symmetrize(&self.to_lab(&k))
    }

    /// Counterdiabatic Hamiltonian `(i/2) Σ_n [Ṗ_n, P_n]`.
    pub fn h_cd(&self) -> &CMatrix<T> {
        &self.h_cd
    }

    /// Reduced counterdiabatic Hamiltonian `i [Ṗ_n, P_n]`.
    pub fn reduced_cd_hamiltonian(&self, n: usize) -> Result<CMatrix<T>> {
        let p = self.projector(n)?;
        let pd = self.projector_derivative(n)?;
        let comm = &pd * &p - &p * &pd;
        Ok(crate::linalg::symmetrize(&comm.map(|z| c(-z.im, z.re))))
    }

    /// `‖(1 - P_m) Ṗ_m‖`: for a non-degenerate level the square root of the
    /// Abelian quantum geometric tensor along the path; for a degenerate
    /// level its maximal in-level expectation.
    pub fn qgt_norm(&self, m: usize) -> Result<T> {
        let lvl = self.check_level(m)?;
        let d = self.dim();
        let em = lvl.energy;
        let outside: Vec<usize> = (0..d).filter(|&a| self.level_of[a] != m).collect();
        if outside.is_empty() {
            return Ok(T::zero());
        }
        let block = CMatrix::from_fn(outside.len(), lvl.multiplicity, |i, j| {
            let a = outside[i];
            let b = lvl.columns.start + j;
            self.w[(a, b)].unscale(em - self.levels[self.level_of[a]].energy)
        });
        Ok(spectral_norm(&block))
    }

    /// `‖H_cd‖`.
    pub fn cd_norm(&self) -> T {
        spectral_norm(&self.h_cd)
    }

    /// `Tr[P_n(self) P_n(other)]`, used to follow levels between frames.
    pub fn level_overlap(&self, other: &SpectralFrame<T>, n: usize) -> Result<T> {
        let a = self.level_basis(n)?;
        let b = other.level_basis(n)?;
        let m = a.adjoint() * b;
        Ok(m.iter().fold(T::zero(), |acc, z: &Complex<T>| acc + z.norm_sqr()))
    }
}

/// `Ṗ_n` for every level of `frame`, for an arbitrary rate `h_dot`.
pub fn projector_derivatives<T: Real>(frame: &SpectralFrame<T>, h_dot: &CMatrix<T>) -> Result<Vec<CMatrix<T>>> {
    let h_dot = check_hermitian(h_dot)?;
    if h_dot.nrows() != frame.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.dim(),
            got: h_dot.nrows(),
        });
    }
    let w = frame.eig.vectors.adjoint() * &h_dot * &frame.eig.vectors;
    Ok((0..frame.n_levels())
        .map(|n| frame.to_lab(&frame.projector_rate_eigenbasis(&w, n)))
        .collect())
}

/// Frame of `model` along `sched` at time `t`.
pub fn spectral_frame<T: Real>(
    model: &dyn Hamiltonian<T>,
    sched: &dyn Schedule<T>,
    t: T,
    delta_deg: Option<T>,
) -> Result<SpectralFrame<T>> {
    let h = hamiltonian_at(model, sched, t)?;
    let h_dot = time_derivative_h(model, sched, t)?;
    SpectralFrame::from_matrices(t, &h, &h_dot, delta_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, identity, operator_norm, pauli};
    use crate::model::{AffineModel, ConjugatedSpectrum, TransverseFieldIsing, TwoLevelField};
    use crate::random::{random_hermitian, random_unitary, rng};
    use crate::scalar::cr;
    use crate::schedule::{FnSchedule, ParameterSchedule};

    fn rotating(omega: f64) -> FnSchedule<f64> {
        FnSchedule::new(
            10.0,
            3,
            move |t: f64| vec![(omega * t).cos(), (omega * t).sin(), 0.0],
            move |t: f64| vec![-omega * (omega * t).sin(), omega * (omega * t).cos(), 0.0],
        )
    }

    fn check_frame_invariants(f: &SpectralFrame<f64>) {
        let d = f.dim();
        let ps = f.projectors();
        let pds = f.projector_derivatives();
        let mut sum = CMatrix::<f64>::zeros(d, d);
        let mut sum_d = CMatrix::<f64>::zeros(d, d);
        for (n, (p, pd)) in ps.iter().zip(&pds).enumerate() {
            assert!(frobenius(&(p * p - p)) < 1e-10);
            assert!(frobenius(&(p - p.adjoint())) < 1e-12);
            assert!((p.trace().re - f.levels()[n].multiplicity as f64).abs() < 1e-8);
            for (m, q) in ps.iter().enumerate() {
                if m != n {
                    assert!(frobenius(&(p * q)) < 1e-10);
                }
            }
            let scale = 1.0 + frobenius(pd);
            assert!(frobenius(&(pd - (pd * p + p * pd))) < 1e-8 * scale);
            assert!(frobenius(&(p * f.h_cd() * p)) < 1e-8 * (1.0 + frobenius(f.h_cd())));
            sum += p;
            sum_d += pd;
        }
        assert!(frobenius(&(sum - identity::<f64>(d))) < 1e-10);
        assert!(frobenius(&sum_d) < 1e-8);
        assert!(frobenius(&(f.h_cd() - f.h_cd().adjoint())) < 1e-12);
    }

    fn diag(v: &[f64]) -> CMatrix<f64> {
        let d = v.len();
        CMatrix::from_fn(d, d, |i, j| if i == j { cr(v[i]) } else { cr(0.0) })
    }

    #[test]
    fn minus_z_levels() {
        let f = SpectralFrame::from_matrices(0.0, &(-pauli::z::<f64>()), &CMatrix::zeros(2, 2), None).unwrap();
        assert_eq!(f.n_levels(), 2);
        assert_eq!(f.levels()[0].energy, -1.0);
        assert!(frobenius(&(f.projector(0).unwrap() - diag(&[1.0, 0.0]))) < 1e-15);
        assert!(frobenius(&(f.projector(1).unwrap() - diag(&[0.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn exact_double_degeneracy() {
        let f = SpectralFrame::from_matrices(0.0, &diag(&[1.0, 1.0, 2.0]), &CMatrix::zeros(3, 3), None).unwrap();
        assert_eq!(f.n_levels(), 2);
        assert_eq!(f.levels()[0].multiplicity, 2);
        assert!(frobenius(&(f.projector(0).unwrap() - diag(&[1.0, 1.0, 0.0]))) < 1e-14);
        assert!(f.projector(2).is_err());
        assert!(f.qgt_norm(5).is_err());
        assert!(f.reduced_cd_hamiltonian(3).is_err());
    }

    #[test]
    fn ising_classical_limit_matches_basis_enumeration() {
        let (n, j) = (3usize, 1.3);
        let model = TransverseFieldIsing::new(n, vec![]).unwrap();
        let sched = ParameterSchedule::constant(1.0, vec![j, 0.0]).unwrap();
        let f = spectral_frame(&model, &sched, 0.5, None).unwrap();
        // enumerate computational basis states: bit k set means spin k down
        let energy = |s: usize| -> f64 {
            let z = |k: usize| if s >> (n - 1 - k) & 1 == 1 { -1.0 } else { 1.0 };
            -j * (0..n - 1).map(|k| z(k) * z(k + 1)).sum::<f64>()
        };
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for s in 0..(1 << n) {
            let e = energy(s);
            match groups.iter_mut().find(|g| (g.0 - e).abs() < 1e-12) {
                Some(g) => g.1.push(s),
                None => groups.push((e, vec![s])),
            }
        }
        groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_eq!(f.n_levels(), groups.len());
        for (lvl, (e, states)) in groups.iter().enumerate() {
            assert!((f.levels()[lvl].energy - e).abs() < 1e-12);
            let mut expected = vec![0.0; 1 << n];
            for &s in states {
                expected[s] = 1.0;
            }
            assert!(frobenius(&(f.projector(lvl).unwrap() - diag(&expected))) < 1e-12);
        }
    }

    #[test]
    fn constant_schedule_gives_zero_rates() {
        let model = TransverseFieldIsing::new(2, vec![0.1, 0.2]).unwrap();
        let sched = ParameterSchedule::constant(1.0, vec![1.0, 0.7]).unwrap();
        let f = spectral_frame(&model, &sched, 0.3, None).unwrap();
        for pd in f.projector_derivatives() {
            assert_eq!(frobenius(&pd), 0.0);
        }
        assert_eq!(frobenius(f.h_cd()), 0.0);
        for n in 0..f.n_levels() {
            assert_eq!(f.qgt_norm(n).unwrap(), 0.0);
            assert_eq!(frobenius(&f.reduced_cd_hamiltonian(n).unwrap()), 0.0);
        }
    }

    #[test]
    fn rotating_field_values() {
        for omega in [1.0, 2.5] {
            let f = spectral_frame(&TwoLevelField, &rotating(omega), 0.0, None).unwrap();
            check_frame_invariants(&f);
            for n in 0..2 {
                let pd = f.projector_derivative(n).unwrap();
                assert!((operator_norm(&pd).unwrap() - omega / 2.0).abs() < 1e-12);
                assert!((f.qgt_norm(n).unwrap() - omega / 2.0).abs() < 1e-12);
            }
            assert!((f.cd_norm() - omega / 2.0).abs() < 1e-12);
            for n in 0..2 {
                let red = f.reduced_cd_hamiltonian(n).unwrap();
                assert!(operator_norm(&(red - f.h_cd())).unwrap() <= 1e-10);
            }
        }
    }

    fn random_model(seed: u64, d: usize) -> (AffineModel<f64>, ParameterSchedule<f64>) {
        let mut r = rng(seed);
        let model = AffineModel::new(
            random_hermitian(&mut r, d, 1.0),
            vec![random_hermitian(&mut r, d, 1.0), random_hermitian(&mut r, d, 1.0)],
        )
        .unwrap();
        let sched = crate::random::random_spline_schedule(&mut r, &[0.0, 0.0], 0.8, 5, 2.0);
        (model, sched)
    }

    #[test]
    fn projector_derivative_matches_finite_difference() {
        let (model, sched) = random_model(31, 5);
        for t in [0.3, 0.9, 1.55] {
            let f = spectral_frame(&model, &sched, t, None).unwrap();
            check_frame_invariants(&f);
            let h = 1e-5;
            let up = spectral_frame(&model, &sched, t + h, None).unwrap();
            let dn = spectral_frame(&model, &sched, t - h, None).unwrap();
            for n in 0..f.n_levels() {
                let fd = (up.projector(n).unwrap() - dn.projector(n).unwrap()).unscale(2.0 * h);
                let pd = f.projector_derivative(n).unwrap();
                let scale = 1.0 + operator_norm(&pd).unwrap();
                assert!(operator_norm(&(fd - pd)).unwrap() < 1e-6 * scale);
            }
        }
    }

    #[test]
    fn cd_hamiltonian_equals_commutator_sum() {
        let (model, sched) = random_model(32, 4);
        let f = spectral_frame(&model, &sched, 0.8, None).unwrap();
        let mut sum = CMatrix::<f64>::zeros(4, 4);
        for (p, pd) in f.projectors().iter().zip(f.projector_derivatives()) {
            sum += &pd * p - p * &pd;
        }
        let cd = sum.map(|z| c(-z.im / 2.0, z.re / 2.0));
        assert!(frobenius(&(cd - f.h_cd())) < 1e-12);
        let h_dot = time_derivative_h(&model, &sched, 0.8).unwrap();
        for (a, b) in projector_derivatives(&f, &h_dot).unwrap().iter().zip(f.projector_derivatives()) {
            assert!(frobenius(&(a - b)) < 1e-14);
        }
    }

    #[test]
    fn qgt_norm_matches_matrix_elements() {
        let (model, sched) = random_model(33, 4);
        for t in [0.1, 1.0, 1.9] {
            let f = spectral_frame(&model, &sched, t, None).unwrap();
            assert_eq!(f.n_levels(), 4);
            let h_dot = time_derivative_h(&model, &sched, t).unwrap();
            let v = &f.eig().vectors;
            let e = &f.eig().values;
            for m in 0..4 {
                let mut acc = 0.0;
                for n in 0..4 {
                    if n != m {
                        let elem = (v.column(n).adjoint() * &h_dot * v.column(m))[(0, 0)];
                        acc += elem.norm_sqr() / (e[m] - e[n]).powi(2);
                    }
                }
                assert!((f.qgt_norm(m).unwrap() - acc.sqrt()).abs() < 1e-8);
                // ‖H_cd P_m‖ = ‖(1 - P_m) Ṗ_m‖
                let hp = operator_norm(&(f.h_cd() * f.projector(m).unwrap())).unwrap();
                assert!((hp - f.qgt_norm(m).unwrap()).abs() < 1e-8);
                let pd = f.projector_derivative(m).unwrap();
                let dense = operator_norm(&((identity::<f64>(4) - f.projector(m).unwrap()) * pd)).unwrap();
                assert!((dense - f.qgt_norm(m).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_frame_is_gauge_free() {
        let mut r = rng(34);
        let model = ConjugatedSpectrum::new(&[-1.0, -1.0, 0.5, 2.0], random_hermitian(&mut r, 4, 1.0)).unwrap();
        let sched = ParameterSchedule::linear(1.0, vec![0.0], vec![1.3]).unwrap();
        let f = spectral_frame(&model, &sched, 0.4, None).unwrap();
        assert_eq!(f.levels()[0].multiplicity, 2);
        check_frame_invariants(&f);
        let mut eig = f.eig().clone();
        let u = random_unitary(&mut r, 2);
        let mixed = eig.vectors.columns(0, 2) * &u;
        eig.vectors.columns_mut(0, 2).copy_from(&mixed);
        let h_dot = time_derivative_h(&model, &sched, 0.4).unwrap();
        let g = SpectralFrame::from_eig(0.4, eig, &h_dot, Some(f.delta_deg)).unwrap();
        for m in 0..f.n_levels() {
            assert!((f.qgt_norm(m).unwrap() - g.qgt_norm(m).unwrap()).abs() < 1e-10);
        }
        assert!(frobenius(&(f.h_cd() - g.h_cd())) < 1e-10);
        for m in 0..f.n_levels() {
            let hp = operator_norm(&(f.h_cd() * f.projector(m).unwrap())).unwrap();
            assert!((hp - f.qgt_norm(m).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn two_level_cd_projection_is_tight() {
        let (model, sched) = (TwoLevelField, crate::random::random_spline_schedule(&mut rng(35), &[0.2, 0.5, -0.3], 1.0, 6, 3.0));
        for k in 0..20 {
            let t = 3.0 * k as f64 / 19.0;
            let f = spectral_frame(&model, &sched, t, None).unwrap();
            for m in 0..2 {
                let pm = operator_norm(&(f.projector(m).unwrap() * f.h_cd())).unwrap();
                assert!((pm - f.cd_norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grouping_respects_tolerance() {
        let h = diag(&[0.0, 1e-12, 1.0]);
        let f = SpectralFrame::from_matrices(0.0, &h, &CMatrix::zeros(3, 3), None).unwrap();
        assert_eq!(f.n_levels(), 2);
        let f = SpectralFrame::from_matrices(0.0, &h, &CMatrix::zeros(3, 3), Some(0.0)).unwrap();
        assert_eq!(f.n_levels(), 3);
        assert!(f.near_crossing() == false || f.min_gap().unwrap() < 10.0 * f.delta_deg);
        let h = diag(&[0.0, 5e-3, 1.0]);
        let f = SpectralFrame::from_matrices(0.0, &h, &CMatrix::zeros(3, 3), Some(1e-3)).unwrap();
        assert!(f.near_crossing());
    }
}
