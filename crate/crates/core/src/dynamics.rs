//! Unitary propagation on a shared time grid and level-to-level transition
//! rates.
//!
//! Every scheme is the midpoint exponential rule
//! `U[k+1] = exp(-i G(t_mid) Δt) U[k]`, with `G = H` (dynamical),
//! `G = H + H_cd` (adiabatic) or `G = H + H_cd^(n)` (reduced adiabatic).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{expi_from_eig, expi_step, identity, spectral_norm, unitarity_residual};
use crate::model::{hamiltonian_at, Hamiltonian};
use crate::scalar::{CMatrix, Real};
use crate::schedule::Schedule;
use crate::spectral::{spectral_frame, SpectralFrame};

/// Number of steps used when neither a step count nor `dt_max` is given.
pub const DEFAULT_STEPS: usize = 2000;

/// Strictly increasing times from 0 to the schedule duration.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T: Real> {
    times: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn uniform(duration: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        if !(duration.is_finite() && duration > T::zero()) {
            return Err(Error::InvalidGrid(format!("duration must be positive, got {duration}")));
        }
        let k = T::lit(steps as f64);
        let mut times: Vec<T> = (0..=steps).map(|i| duration * T::lit(i as f64) / k).collect();
        times[steps] = duration;
        Ok(Self { times })
    }

    /// Uniform grid with at least `min_steps` steps and no step above
    /// `dt_max` (default `duration / 2000`).
    pub fn with_dt_max(duration: T, min_steps: Option<usize>, dt_max: Option<T>) -> Result<Self> {
        let dt_max = dt_max.unwrap_or(duration / T::lit(DEFAULT_STEPS as f64));
        if !(dt_max.is_finite() && dt_max > T::zero()) {
            return Err(Error::InvalidGrid(format!("dt_max must be positive, got {dt_max}")));
        }
        let needed = (duration / dt_max).as_f64().ceil();
        if needed > 1e8 {
            return Err(Error::InvalidGrid(format!("dt_max {dt_max} needs {needed:e} steps")));
        }
        Self::uniform(duration, (needed as usize).max(min_steps.unwrap_or(1)))
    }

    pub fn from_times(times: Vec<T>) -> Result<Self> {
        if times.len() < 2 || times[0] != T::zero() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("times must start at 0 and increase strictly".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn duration(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn midpoint(&self, k: usize) -> T {
        (self.times[k] + self.times[k + 1]) / T::lit(2.0)
    }

    pub fn step(&self, k: usize) -> T {
        self.times[k + 1] - self.times[k]
    }

    pub fn dt_max(&self) -> T {
        (0..self.steps()).fold(T::zero(), |m, k| m.max(self.step(k)))
    }

    /// `count` node indices spread evenly over the grid, ending at the last node.
    pub fn checkpoints(&self, count: usize) -> Vec<usize> {
        let k = self.steps();
        let count = count.clamp(1, k);
        let mut idx: Vec<usize> = (1..=count).map(|j| (j * k + count / 2) / count).collect();
        idx.dedup();
        idx
    }
}

/// Spectral frames at every grid node and every step midpoint, with levels
/// tracked across the whole grid.
#[derive(Debug, Clone)]
pub struct FrameSeries<T: Real> {
    grid: TimeGrid<T>,
    nodes: Vec<SpectralFrame<T>>,
    mids: Vec<SpectralFrame<T>>,
}

fn first_error<X>(items: Vec<Result<X>>) -> Result<Vec<X>> {
    items.into_iter().collect()
}

fn check_tracking<T: Real>(a: &SpectralFrame<T>, b: &SpectralFrame<T>) -> Result<()> {
    let fail = |detail: String| Error::LevelTracking {
        t_prev: a.t.as_f64(),
        t: b.t.as_f64(),
        detail,
    };
    let ma: Vec<usize> = a.levels().iter().map(|l| l.multiplicity).collect();
    let mb: Vec<usize> = b.levels().iter().map(|l| l.multiplicity).collect();
    if ma != mb {
        // two levels merged within delta_deg on one side of the step
        let (merged, split) = if ma.len() < mb.len() { (a, b) } else { (b, a) };
        let lower = merged
            .levels()
            .iter()
            .zip(split.levels())
            .position(|(x, y)| x.multiplicity != y.multiplicity)
            .unwrap_or(0);
        if ma.len() == mb.len() {
            return Err(fail(format!("level multiplicities changed from {ma:?} to {mb:?}")));
        }
        let gap = split.levels()[lower + 1].energy - split.levels()[lower].energy;
        return Err(Error::GapClosure {
            t: merged.t.as_f64(),
            lower,
            upper: lower + 1,
            gap: gap.as_f64(),
            delta_deg: merged.delta_deg.as_f64(),
        });
    }
    for (n, &mult) in ma.iter().enumerate() {
        let overlap = a.level_overlap(b, n)?;
        if overlap < T::lit(mult as f64 / 2.0) {
            return Err(fail(format!(
                "level {n} overlap {overlap:.3} below {:.1}",
                mult as f64 / 2.0
            )));
        }
    }
    Ok(())
}

impl<T: Real> FrameSeries<T> {
    pub fn build(
        model: &dyn Hamiltonian<T>,
        sched: &dyn Schedule<T>,
        grid: &TimeGrid<T>,
        delta_deg: Option<T>,
    ) -> Result<Self> {
        if grid.duration() > sched.duration() + T::lit(1e-12) * sched.duration().max(T::one()) {
            return Err(Error::InvalidGrid(format!(
                "grid ends at {} beyond schedule duration {}",
                grid.duration(),
                sched.duration()
            )));
        }
        let k = grid.steps();
        // interleaved times: node 0, mid 0, node 1, ..., node K
        let results: Vec<Result<SpectralFrame<T>>> = (0..=2 * k)
            .into_par_iter()
            .map(|j| {
                let t = if j % 2 == 0 { grid.times[j / 2] } else { grid.midpoint(j / 2) };
                spectral_frame(model, sched, t, delta_deg)
            })
            .collect();
        let all = first_error(results)?;
        let checks: Vec<Result<()>> = all.par_windows(2).map(|w| check_tracking(&w[0], &w[1])).collect();
        first_error(checks)?;
        let mut nodes = Vec::with_capacity(k + 1);
        let mut mids = Vec::with_capacity(k);
        for (j, f) in all.into_iter().enumerate() {
            if j % 2 == 0 {
                nodes.push(f);
            } else {
                mids.push(f);
            }
        }
        Ok(Self {
            grid: grid.clone(),
            nodes,
            mids,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn node(&self, k: usize) -> &SpectralFrame<T> {
        &self.nodes[k]
    }

    pub fn mid(&self, k: usize) -> &SpectralFrame<T> {
        &self.mids[k]
    }

    pub fn nodes(&self) -> &[SpectralFrame<T>] {
        &self.nodes
    }

    pub fn mids(&self) -> &[SpectralFrame<T>] {
        &self.mids
    }

    pub fn n_levels(&self) -> usize {
        self.nodes[0].n_levels()
    }

    /// Times (nodes and midpoints) at which adjacent levels come within the
    /// near-crossing threshold.
    pub fn near_crossings(&self) -> Vec<T> {
        let mut ts: Vec<T> = self
            .nodes
            .iter()
            .chain(&self.mids)
            .filter(|f| f.near_crossing())
            .map(|f| f.t)
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMode {
    Dynamical,
    Adiabatic,
    ReducedAdiabatic(usize),
}

fn generator<T: Real>(h: &CMatrix<T>, frame: &SpectralFrame<T>, mode: PropagationMode) -> Result<CMatrix<T>> {
    Ok(match mode {
        PropagationMode::Dynamical => h.clone(),
        PropagationMode::Adiabatic => h + frame.h_cd(),
        PropagationMode::ReducedAdiabatic(n) => h + frame.reduced_cd_hamiltonian(n)?,
    })
}

fn accumulate<T: Real>(d: usize, steps: Vec<CMatrix<T>>) -> Vec<CMatrix<T>> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(identity::<T>(d));
    for s in steps {
        let next = s * out.last().unwrap();
        out.push(next);
    }
    out
}

/// Propagators at every grid node for a single mode.
pub fn propagate<T: Real>(
    model: &dyn Hamiltonian<T>,
    sched: &dyn Schedule<T>,
    grid: &TimeGrid<T>,
    mode: PropagationMode,
    delta_deg: Option<T>,
) -> Result<Vec<CMatrix<T>>> {
    let steps: Vec<Result<CMatrix<T>>> = (0..grid.steps())
        .into_par_iter()
        .map(|k| {
            let t = grid.midpoint(k);
            let g = match mode {
                PropagationMode::Dynamical => hamiltonian_at(model, sched, t)?,
                _ => {
                    let frame = spectral_frame(model, sched, t, delta_deg)?;
                    generator(&frame.eig().reconstruct(), &frame, mode)?
                }
            };
            expi_step(&g, grid.step(k))
        })
        .collect();
    Ok(accumulate(model.dim(), first_error(steps)?))
}

/// Propagators of `mode` driven by precomputed midpoint frames.
pub fn propagate_frames<T: Real>(
    frames: &FrameSeries<T>,
    model: &dyn Hamiltonian<T>,
    sched: &dyn Schedule<T>,
    mode: PropagationMode,
) -> Result<Vec<CMatrix<T>>> {
    if let PropagationMode::ReducedAdiabatic(n) = mode {
        frames.node(0).check_level(n)?;
    }
    let grid = frames.grid();
    let steps: Vec<Result<CMatrix<T>>> = (0..grid.steps())
        .into_par_iter()
        .map(|k| {
            let frame = frames.mid(k);
            let dt = grid.step(k);
            match mode {
                PropagationMode::Dynamical => Ok(expi_from_eig(frame.eig(), dt)),
                _ => {
                    let h = hamiltonian_at(model, sched, frame.t)?;
                    expi_step(&generator(&h, frame, mode)?, dt)
                }
            }
        })
        .collect();
    Ok(accumulate(model.dim(), first_error(steps)?))
}

/// Dynamical and adiabatic propagators on one grid.
#[derive(Debug, Clone)]
pub struct PropagatorPair<T: Real> {
    grid: TimeGrid<T>,
    u_d: Vec<CMatrix<T>>,
    u_a: Vec<CMatrix<T>>,
}

impl<T: Real> PropagatorPair<T> {
    pub fn build(frames: &FrameSeries<T>, model: &dyn Hamiltonian<T>, sched: &dyn Schedule<T>) -> Result<Self> {
        Ok(Self {
            grid: frames.grid().clone(),
            u_d: propagate_frames(frames, model, sched, PropagationMode::Dynamical)?,
            u_a: propagate_frames(frames, model, sched, PropagationMode::Adiabatic)?,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn dt_max(&self) -> T {
        self.grid.dt_max()
    }

    pub fn dynamical(&self, k: usize) -> &CMatrix<T> {
        &self.u_d[k]
    }

    pub fn adiabatic(&self, k: usize) -> &CMatrix<T> {
        &self.u_a[k]
    }

    /// `‖(U_A† U_D)† (U_A† U_D) - 1‖` at node `k`.
    pub fn intertwiner_residual(&self, k: usize) -> T {
        unitarity_residual(&(self.u_a[k].adjoint() * &self.u_d[k]))
    }

    /// Largest unitarity defect over both propagator lists.
    pub fn max_unitarity_residual(&self) -> T {
        self.u_d
            .iter()
            .chain(&self.u_a)
            .fold(T::zero(), |m, u| m.max(unitarity_residual(u)))
    }
}

/// `p_nm = ‖P_m(t) U P_n(0)‖²`, the squared largest singular value of the
/// level-to-level block of `u`.
pub fn transition_rate<T: Real>(
    u: &CMatrix<T>,
    initial: &SpectralFrame<T>,
    final_frame: &SpectralFrame<T>,
    n: usize,
    m: usize,
) -> Result<T> {
    let vn = initial.level_basis(n)?;
    let vm = final_frame.level_basis(m)?;
    if u.nrows() != vn.nrows() || u.ncols() != vn.nrows() {
        return Err(Error::DimensionMismatch {
            expected: vn.nrows(),
            got: u.nrows(),
        });
    }
    let block = vm.adjoint() * u * vn;
    let s = spectral_norm(&block);
    Ok((s * s).min(T::one()))
}

/// `‖U P_n(0) U† - P_n(t)‖`.
pub fn transport_residual<T: Real>(
    u: &CMatrix<T>,
    initial: &SpectralFrame<T>,
    final_frame: &SpectralFrame<T>,
    n: usize,
) -> Result<T> {
    let p0 = initial.projector(n)?;
    let pt = final_frame.projector(n)?;
    Ok(spectral_norm(&(u * p0 * u.adjoint() - pt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, pauli};
    use crate::model::{AffineModel, TwoLevelField};
    use crate::random::{random_hermitian, random_unit_vector, rng};
    use crate::scalar::c;
    use crate::schedule::ParameterSchedule;

    fn annealing(duration: f64) -> ParameterSchedule<f64> {
        ParameterSchedule::two_level_annealing(duration, -1.0, -1.0, false).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.midpoint(1), 0.75);
        let g = TimeGrid::with_dt_max(1.0, Some(10), Some(0.03)).unwrap();
        assert_eq!(g.steps(), 34);
        assert!(g.dt_max() <= 0.03);
        assert_eq!(TimeGrid::with_dt_max(3.0, None, None).unwrap().steps(), 2000);
        assert_eq!(g.checkpoints(20).last(), Some(&34));
        assert_eq!(g.checkpoints(20).len(), 20);
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(-1.0, 3).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn static_phase_evolution() {
        let model = TwoLevelField;
        let sched = ParameterSchedule::constant(std::f64::consts::PI, vec![0.0, 0.0, 1.0]).unwrap();
        let grid = TimeGrid::uniform(std::f64::consts::PI, 7).unwrap();
        let u = propagate(&model, &sched, &grid, PropagationMode::Dynamical, None).unwrap();
        let pi = std::f64::consts::PI;
        let expected = CMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c((-pi).cos(), (-pi).sin()),
            (1, 1) => c(pi.cos(), pi.sin()),
            _ => c(0.0, 0.0),
        });
        assert!(frobenius(&(&u[7] - expected)) < 1e-12);
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        for k in 0..=7 {
            assert!(frobenius(&(pair.dynamical(k) - pair.adiabatic(k))) < 1e-12);
        }
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let model = TwoLevelField;
        let sched = annealing(3.0);
        let final_u = |k: usize| {
            let grid = TimeGrid::uniform(3.0, k).unwrap();
            let mut u = propagate(&model, &sched, &grid, PropagationMode::Dynamical, None).unwrap();
            u.pop().unwrap()
        };
        let (a, b, r) = (final_u(100), final_u(200), final_u(1600));
        let ratio = frobenius(&(&a - &r)) / frobenius(&(&b - &r));
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
        let grid = TimeGrid::uniform(3.0, 100).unwrap();
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let ua = |k| {
            let g = TimeGrid::uniform(3.0, k).unwrap();
            let f = FrameSeries::build(&model, &sched, &g, None).unwrap();
            propagate_frames(&f, &model, &sched, PropagationMode::Adiabatic).unwrap().pop().unwrap()
        };
        let (a, b, r) = (ua(100), ua(200), ua(1600));
        let ratio = frobenius(&(&a - &r)) / frobenius(&(&b - &r));
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
        let pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        assert!(pair.max_unitarity_residual() < 1e-10 * 2.0);
    }

    #[test]
    fn quench_limit_is_one_half() {
        let model = TwoLevelField;
        let sched = annealing(1e-4);
        let grid = TimeGrid::uniform(1e-4, 200).unwrap();
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        let p = transition_rate(pair.dynamical(200), frames.node(0), frames.node(200), 0, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-3, "p = {p}");
        assert_eq!(transition_rate(pair.dynamical(0), frames.node(0), frames.node(0), 0, 1).unwrap(), 0.0);
        assert!((transition_rate(pair.dynamical(0), frames.node(0), frames.node(0), 1, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!(transition_rate(pair.dynamical(0), frames.node(0), frames.node(0), 2, 1).is_err());
    }

    #[test]
    fn adiabatic_mode_follows_every_level() {
        let mut r = rng(41);
        let model = AffineModel::new(random_hermitian(&mut r, 3, 1.0), vec![random_hermitian(&mut r, 3, 1.0)]).unwrap();
        let sched = ParameterSchedule::linear(2.0, vec![0.0], vec![1.0]).unwrap();
        let residuals = |k: usize, mode: PropagationMode| -> Vec<f64> {
            let grid = TimeGrid::uniform(2.0, k).unwrap();
            let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
            let u = propagate_frames(&frames, &model, &sched, mode).unwrap();
            (0..3)
                .map(|n| transport_residual(&u[k], frames.node(0), frames.node(k), n).unwrap())
                .collect()
        };
        let coarse = residuals(200, PropagationMode::Adiabatic);
        let fine = residuals(400, PropagationMode::Adiabatic);
        for n in 0..3 {
            let ratio = coarse[n] / fine[n];
            assert!((ratio - 4.0).abs() < 0.5, "level {n}: ratio {ratio}");
        }
        let reduced = residuals(200, PropagationMode::ReducedAdiabatic(1));
        let reduced_fine = residuals(400, PropagationMode::ReducedAdiabatic(1));
        let ratio = reduced[1] / reduced_fine[1];
        assert!((ratio - 4.0).abs() < 0.5, "reduced ratio {ratio}");
        assert!(reduced[0].max(reduced[2]) > 10.0 * reduced[1], "{reduced:?}");
    }

    #[test]
    fn rows_sum_to_one_for_nondegenerate_spectra() {
        let mut r = rng(42);
        let model = AffineModel::new(random_hermitian(&mut r, 4, 1.0), vec![random_hermitian(&mut r, 4, 1.0)]).unwrap();
        let sched = ParameterSchedule::linear(1.5, vec![0.0], vec![1.0]).unwrap();
        let grid = TimeGrid::uniform(1.5, 300).unwrap();
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        for k in [0, 150, 300] {
            for n in 0..4 {
                let row: f64 = (0..4)
                    .map(|m| transition_rate(pair.dynamical(k), frames.node(0), frames.node(k), n, m).unwrap())
                    .sum();
                assert!((row - 1.0).abs() < 1e-8);
            }
            assert!(pair.intertwiner_residual(k) < 1e-12);
        }
    }

    #[test]
    fn degenerate_rate_is_the_maximum_over_initial_states() {
        let mut r = rng(43);
        let e = crate::model::ConjugatedSpectrum::new(&[-1.0, -1.0, 0.3, 1.5], random_hermitian(&mut r, 4, 1.0)).unwrap();
        let sched = ParameterSchedule::linear(1.0, vec![0.0], vec![1.5]).unwrap();
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let frames = FrameSeries::build(&e, &sched, &grid, None).unwrap();
        let pair = PropagatorPair::build(&frames, &e, &sched).unwrap();
        let u = pair.dynamical(200);
        let (f0, f1) = (frames.node(0), frames.node(200));
        for m in 1..3 {
            let rate = transition_rate(u, f0, f1, 0, m).unwrap();
            let p_m = f1.projector(m).unwrap();
            let basis = f0.level_basis(0).unwrap();
            let mut best = 0.0f64;
            for _ in 0..10_000 {
                let coeffs = random_unit_vector(&mut r, 2);
                let psi = &basis * coeffs;
                let out = &p_m * (u * psi);
                best = best.max(out.norm_squared());
            }
            assert!(best <= rate + 1e-12);
            assert!(rate - best < 1e-3 * rate.max(1e-3), "rate {rate} best {best}");
            let full = spectral_norm(&(&p_m * u * f0.projector(0).unwrap()));
            assert!((full * full - rate).abs() < 1e-12);
        }
    }

    #[test]
    fn intertwiner_detects_non_unitarity() {
        let model = TwoLevelField;
        let sched = annealing(2.0);
        let grid = TimeGrid::uniform(2.0, 200).unwrap();
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let mut pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        assert_eq!(pair.intertwiner_residual(0), 0.0);
        assert!(pair.intertwiner_residual(200) < 1e-8);
        pair.u_d[200] = pair.u_d[200].scale(1.0 + 1e-3);
        let res = pair.intertwiner_residual(200);
        assert!((res - 2.001e-3).abs() < 1e-8, "{res}");
    }

    #[test]
    fn crossing_aborts_with_time() {
        // H = (1 - 2.5 t) Z crosses at t = 0.4
        let model = AffineModel::new(pauli::z(), vec![pauli::z()]).unwrap();
        let sched = ParameterSchedule::linear(1.0, vec![0.0], vec![-2.5]).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let err = FrameSeries::build(&model, &sched, &grid, Some(1e-9)).unwrap_err();
        assert!(matches!(err, Error::GapClosure { .. }), "{err}");
        assert!((err.failure_time().unwrap() - 0.4).abs() < 1e-12);
        let grid = TimeGrid::uniform(1.0, 6).unwrap();
        let err = FrameSeries::build(&model, &sched, &grid, Some(1e-9)).unwrap_err();
        assert!(matches!(err, Error::LevelTracking { .. }), "{err}");
        assert!(propagate(&model, &sched, &grid, PropagationMode::Dynamical, None).is_ok());
    }
}
