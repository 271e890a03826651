//! Two-level analytics for `H = h·σ` and the projection of a many-level
//! model onto its lowest two instantaneous levels.

use serde::{Deserialize, Serialize};

use crate::dynamics::{transition_rate, FrameSeries, PropagatorPair, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{expi_step, identity};
use crate::model::{Hamiltonian, TwoLevelField};
use crate::quadrature::cumulative_simpson;
use crate::scalar::{c, CMatrix, Real};
use crate::schedule::Schedule;
use crate::spectral::{spectral_frame, SpectralFrame};

type Vec3<T> = [T; 3];

fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

/// `‖(1 - P_±) Ṗ_±‖ = |h × ḣ| / (2|h|²)`.
pub fn bloch_rate<T: Real>(h: &Vec3<T>, h_dot: &Vec3<T>) -> Result<T> {
    let r2 = dot(h, h);
    if !(r2 > T::zero()) || !r2.is_finite() {
        return Err(Error::Degenerate("field vanishes, direction undefined".into()));
    }
    Ok(norm(&cross(h, h_dot)) / (T::lit(2.0) * r2))
}

/// Spherical coordinates of the field direction, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BlochPath<T: Real> {
    pub t: Vec<T>,
    pub energy: Vec<T>,
    pub theta: Vec<T>,
    pub phi: Vec<T>,
    pub theta_dot: Vec<T>,
    pub phi_dot: Vec<T>,
}

impl<T: Real> BlochPath<T> {
    /// Builds a path from field samples and their time derivatives at
    /// uniformly spaced times.
    pub fn from_samples(t: Vec<T>, h: &[Vec3<T>], h_dot: &[Vec3<T>]) -> Result<Self> {
        if t.len() < 3 || h.len() != t.len() || h_dot.len() != t.len() {
            return Err(Error::InvalidArgument("need at least 3 matching samples".into()));
        }
        let step = t[1] - t[0];
        if t.windows(2).any(|w| (w[1] - w[0] - step).abs() > T::lit(1e-9) * step.abs()) || !(step > T::zero()) {
            return Err(Error::InvalidGrid("Bloch path samples must be uniformly spaced".into()));
        }
        let n = t.len();
        let mut path = Self {
            t,
            energy: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            theta_dot: Vec::with_capacity(n),
            phi_dot: Vec::with_capacity(n),
        };
        let two_pi = T::two_pi();
        let pole_tol = T::lit(1e-12);
        let mut prev_phi: Option<T> = None;
        for (hv, hd) in h.iter().zip(h_dot) {
            let r = norm(hv);
            if !(r > T::zero()) {
                return Err(Error::Degenerate(format!("field vanishes at t = {}", path.t[path.energy.len()])));
            }
            let rho = (hv[0] * hv[0] + hv[1] * hv[1]).sqrt();
            let theta = rho.atan2(hv[2]);
            let (theta_dot, phi, phi_dot) = if rho <= pole_tol * r {
                // at a pole only the polar speed |ḣ_⊥| / |h| is defined
                let along = dot(hd, hv) / r;
                let perp = (dot(hd, hd) - along * along).max(T::zero()).sqrt();
                (perp / r, prev_phi.unwrap_or(T::zero()), T::zero())
            } else {
                let raw = hv[1].atan2(hv[0]);
                let phi = match prev_phi {
                    Some(p) => raw + two_pi * ((p - raw) / two_pi).round(),
                    None => raw,
                };
                let (st, ct) = (theta.sin(), theta.cos());
                let (sp, cp) = (phi.sin(), phi.cos());
                let e_theta = [ct * cp, ct * sp, -st];
                let e_phi = [-sp, cp, T::zero()];
                (dot(hd, &e_theta) / r, phi, dot(hd, &e_phi) / (r * st))
            };
            prev_phi = Some(phi);
            path.energy.push(r);
            path.theta.push(theta);
            path.phi.push(phi);
            path.theta_dot.push(theta_dot);
            path.phi_dot.push(phi_dot);
        }
        Ok(path)
    }

    /// Samples a three-parameter field schedule at the nodes and midpoints
    /// of a uniform grid.
    pub fn sample(sched: &dyn Schedule<T>, grid: &TimeGrid<T>) -> Result<Self> {
        if sched.n_params() != 3 {
            return Err(Error::InvalidSchedule(format!(
                "a Bloch path needs 3 field components, schedule has {}",
                sched.n_params()
            )));
        }
        let k = grid.steps();
        let times: Vec<T> = (0..=2 * k)
            .map(|j| if j % 2 == 0 { grid.times()[j / 2] } else { grid.midpoint(j / 2) })
            .collect();
        let as3 = |v: Vec<T>| [v[0], v[1], v[2]];
        let h: Vec<Vec3<T>> = times.iter().map(|&t| as3(sched.value(t))).collect();
        let hd: Vec<Vec3<T>> = times.iter().map(|&t| as3(sched.derivative(t))).collect();
        Self::from_samples(times, &h, &hd)
    }

    /// `√(θ̇² + φ̇² sin²θ)` at every sample.
    pub fn speed(&self) -> Vec<T> {
        (0..self.t.len())
            .map(|j| {
                let s = self.theta[j].sin() * self.phi_dot[j];
                (self.theta_dot[j] * self.theta_dot[j] + s * s).sqrt()
            })
            .collect()
    }

    pub fn start_direction(&self) -> Vec3<T> {
        direction(self.theta[0], self.phi[0])
    }

    pub fn end_direction(&self) -> Vec3<T> {
        let j = self.t.len() - 1;
        direction(self.theta[j], self.phi[j])
    }
}

fn direction<T: Real>(theta: T, phi: T) -> Vec3<T> {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Half the length of the direction's trajectory on the unit sphere.
pub fn trajectory_length<T: Real>(path: &BlochPath<T>) -> Result<T> {
    let h = path.t[1] - path.t[0];
    let cum = cumulative_simpson(&path.speed(), h)?;
    Ok(*cum.last().unwrap() / T::lit(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingCheck<T> {
    pub length_half: T,
    pub bound: T,
    pub measured_p: T,
}

/// Endpoint tolerance (relative to `|h|`) for the x̂ → ẑ annealing check.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Compares the transition rate from the lower to the upper level of an
/// x̂ → ẑ annealing path with the squared half trajectory length.
pub fn annealing_bound_check<T: Real>(sched: &dyn Schedule<T>, grid: &TimeGrid<T>, eps: T) -> Result<AnnealingCheck<T>> {
    let path = BlochPath::sample(sched, grid)?;
    let start = sched.value(T::zero());
    let end = sched.value(sched.duration());
    let tol = T::lit(ENDPOINT_TOL);
    let r0 = norm(&[start[0], start[1], start[2]]);
    let r1 = norm(&[end[0], end[1], end[2]]);
    if start[1].abs() > tol * r0 || start[2].abs() > tol * r0 {
        return Err(Error::InvalidSchedule(format!("field must start along x, got {start:?}")));
    }
    if end[0].abs() > tol * r1 || end[1].abs() > tol * r1 {
        return Err(Error::InvalidSchedule(format!("field must end along z, got {end:?}")));
    }
    let length_half = trajectory_length(&path)?;
    let bound = length_half * length_half;
    let model = TwoLevelField;
    let frames = FrameSeries::build(&model, sched, grid, None)?;
    let pair = PropagatorPair::build(&frames, &model, sched)?;
    let k = grid.steps();
    let measured_p = transition_rate(pair.dynamical(k), frames.node(0), frames.node(k), 0, 1)?;
    let check = AnnealingCheck {
        length_half,
        bound,
        measured_p,
    };
    if measured_p > bound + eps {
        return Err(Error::Certification(format!(
            "measured p = {measured_p} exceeds bound {bound} by more than {eps}"
        )));
    }
    Ok(check)
}

/// Pauli decomposition of the reduced generator from gauge-fixed lowest pair.
fn reduced_hamiltonian<T: Real>(frame: &SpectralFrame<T>, phases: [nalgebra::Complex<T>; 2]) -> CMatrix<T> {
    let levels = frame.levels();
    let (e0, e1) = (levels[0].energy, levels[1].energy);
    let w = frame.rate_in_eigenbasis();
    let a = (phases[0].conj() * w[(0, 1)] * phases[1]).unscale(e1 - e0);
    let half = (e0 - e1) / T::lit(2.0);
    // Im a·X + Re a·Y + half·Z
    CMatrix::from_row_slice(
        2,
        2,
        &[
            c(half, T::zero()),
            c(a.im, -a.re),
            c(a.im, a.re),
            c(-half, T::zero()),
        ],
    )
}

fn check_bottom_pair<T: Real>(frame: &SpectralFrame<T>) -> Result<()> {
    let levels = frame.levels();
    if levels.len() < 2 || levels[0].multiplicity != 1 || levels[1].multiplicity != 1 {
        return Err(Error::Degenerate(format!(
            "lowest two levels at t = {} are not a non-degenerate pair",
            frame.t
        )));
    }
    Ok(())
}

/// Phase making the largest-magnitude component of `v` real and positive.
fn canonical_phase<T: Real>(v: nalgebra::DVectorView<'_, nalgebra::Complex<T>>) -> nalgebra::Complex<T> {
    let mut best = v[0];
    for z in v.iter() {
        if z.norm_sqr() > best.norm_sqr() {
            best = *z;
        }
    }
    let r = best.norm_sqr().sqrt();
    if r > T::zero() {
        best.conj().unscale(r)
    } else {
        c(T::one(), T::zero())
    }
}

/// Reduced two-level Hamiltonian at a single instant, with each eigenvector's
/// largest component taken real and positive.
pub fn project_two_level<T: Real>(
    model: &dyn Hamiltonian<T>,
    sched: &dyn Schedule<T>,
    t: T,
    delta_deg: Option<T>,
) -> Result<CMatrix<T>> {
    let frame = spectral_frame(model, sched, t, delta_deg)?;
    check_bottom_pair(&frame)?;
    let v = &frame.eig().vectors;
    let phases = [canonical_phase(v.column(0)), canonical_phase(v.column(1))];
    Ok(reduced_hamiltonian(&frame, phases))
}

/// Reduced Hamiltonians along a grid with eigenvector phases carried by
/// discrete parallel transport (each overlap with the previous sample real
/// and positive).
#[derive(Debug, Clone)]
pub struct ProjectedTwoLevel<T: Real> {
    grid: TimeGrid<T>,
    nodes: Vec<CMatrix<T>>,
    mids: Vec<CMatrix<T>>,
}

impl<T: Real> ProjectedTwoLevel<T> {
    pub fn build(
        model: &dyn Hamiltonian<T>,
        sched: &dyn Schedule<T>,
        grid: &TimeGrid<T>,
        delta_deg: Option<T>,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let k = grid.steps();
        let frames: Vec<SpectralFrame<T>> = (0..=2 * k)
            .into_par_iter()
            .map(|j| {
                let t = if j % 2 == 0 { grid.times()[j / 2] } else { grid.midpoint(j / 2) };
                let f = spectral_frame(model, sched, t, delta_deg)?;
                check_bottom_pair(&f)?;
                Ok(f)
            })
            .collect::<Result<_>>()?;
        let mut nodes = Vec::with_capacity(k + 1);
        let mut mids = Vec::with_capacity(k);
        let mut prev: Option<[nalgebra::DVector<nalgebra::Complex<T>>; 2]> = None;
        for (j, f) in frames.iter().enumerate() {
            let v = &f.eig().vectors;
            let mut phases = [c(T::one(), T::zero()); 2];
            let mut fixed: [nalgebra::DVector<nalgebra::Complex<T>>; 2] = [v.column(0).into_owned(), v.column(1).into_owned()];
            for n in 0..2 {
                phases[n] = match &prev {
                    None => canonical_phase(v.column(n)),
                    Some(p) => {
                        let ov = p[n].dotc(&v.column(n));
                        let r = ov.norm_sqr().sqrt();
                        if r < T::lit(0.5) {
                            return Err(Error::LevelTracking {
                                t_prev: frames[j - 1].t.as_f64(),
                                t: f.t.as_f64(),
                                detail: format!("eigenvector {n} overlap {} below 1/2", r.as_f64()),
                            });
                        }
                        ov.conj().unscale(r)
                    }
                };
                fixed[n] = v.column(n) * phases[n];
            }
            let h = reduced_hamiltonian(f, phases);
            if j % 2 == 0 {
                nodes.push(h);
            } else {
                mids.push(h);
            }
            prev = Some(fixed);
        }
        Ok(Self {
            grid: grid.clone(),
            nodes,
            mids,
        })
    }

    pub fn node(&self, k: usize) -> &CMatrix<T> {
        &self.nodes[k]
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Midpoint-rule propagators of the reduced Hamiltonian at every node.
    pub fn propagate(&self) -> Result<Vec<CMatrix<T>>> {
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(identity::<T>(2));
        for (k, h) in self.mids.iter().enumerate() {
            let step = expi_step(h, self.grid.step(k))?;
            let next = step * out.last().unwrap();
            out.push(next);
        }
        Ok(out)
    }

    /// Ground-to-first-excited transition probability at every node.
    pub fn transition_series(&self) -> Result<Vec<T>> {
        Ok(self.propagate()?.iter().map(|u| u[(1, 0)].norm_sqr()).collect())
    }
}

/// Population escaping the lowest two levels, `1 - p_00 - p_01`, for the
/// full propagator `u` between two frames.
pub fn leakage<T: Real>(u: &CMatrix<T>, initial: &SpectralFrame<T>, final_frame: &SpectralFrame<T>) -> Result<T> {
    let p00 = transition_rate(u, initial, final_frame, 0, 0)?;
    let p01 = transition_rate(u, initial, final_frame, 0, 1)?;
    Ok(T::one() - p00 - p01)
}
