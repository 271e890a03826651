//! Path optimization for the level-`m` transition bound.
//!
//! The objective `∫ ‖(1 - P_m) Ṗ_m‖ dt` is invariant under monotone
//! reparameterization, so only the geometric path matters: interior knots of
//! a natural cubic spline over `s ∈ [0, 1]` are searched by a Nelder–Mead
//! simplex with restarts, and the winning path is retimed to traverse the
//! bound integrand at a constant rate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::qgt_integral_series;
use crate::dynamics::{FrameSeries, TimeGrid};
use crate::error::{Error, Result};
use crate::model::Hamiltonian;
use crate::random::rng;
use crate::scalar::Real;
use crate::schedule::{ParameterSchedule, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Total knot count including both endpoints.
    pub n_knots: usize,
    /// Maximum number of objective evaluations over all restarts.
    pub budget: usize,
    /// Restarts after the first descent.
    pub restarts: usize,
    /// Quadrature steps per spline segment.
    pub steps_per_segment: usize,
    pub seed: u64,
    /// Convergence threshold on the spread of simplex values.
    pub ftol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            n_knots: 6,
            budget: 2000,
            restarts: 3,
            steps_per_segment: 24,
            seed: 0,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PathCandidate<T: Real> {
    /// All knots on `s ∈ [0, 1]`, endpoints included.
    pub knots: Vec<Vec<T>>,
    pub objective: T,
    /// `(evaluation, best objective so far)` whenever the best improves.
    pub trace: Vec<(usize, T)>,
    pub evaluations: usize,
}

impl<T: Real> PathCandidate<T> {
    /// The path as a schedule of the given duration with uniformly spaced knots.
    pub fn schedule(&self, duration: T) -> Result<ParameterSchedule<T>> {
        knots_schedule(&self.knots, duration)
    }
}

fn knots_schedule<T: Real>(knots: &[Vec<T>], duration: T) -> Result<ParameterSchedule<T>> {
    let n = knots.len();
    let pts = knots
        .iter()
        .enumerate()
        .map(|(j, k)| {
            let s = if j == n - 1 {
                duration
            } else {
                duration * T::lit(j as f64 / (n - 1) as f64)
            };
            (s, k.clone())
        })
        .collect();
    ParameterSchedule::piecewise_cubic(pts)
}

/// Relative step-doubling change accepted by [`path_objective`].
pub const OBJECTIVE_REFINEMENT_TOL: f64 = 1e-7;

/// Step doublings tried before a path is declared unresolved.
pub const MAX_REFINEMENTS: usize = 4;

/// `∫ ‖(1 - P_m) Ṗ_m‖` along the spline through `knots`.
///
/// The quadrature grid is doubled until the step-doubling estimate agrees to
/// [`OBJECTIVE_REFINEMENT_TOL`]. Paths on which levels close, cannot be
/// tracked, or stay unresolved score `+∞`, so a search cannot exploit
/// under-sampled sharp turns.
pub fn path_objective<T: Real>(
    model: &dyn Hamiltonian<T>,
    knots: &[Vec<T>],
    m: usize,
    steps_per_segment: usize,
    delta_deg: Option<T>,
) -> T {
    let eval = |steps: usize| -> Result<(T, bool)> {
        let sched = knots_schedule(knots, T::one())?;
        let grid = TimeGrid::uniform(T::one(), (knots.len() - 1) * steps)?;
        let frames = FrameSeries::build(model, &sched, &grid, delta_deg)?;
        let series = qgt_integral_series(&frames, m)?;
        let resolved = series.refinement.is_none_or(|r| r <= T::lit(OBJECTIVE_REFINEMENT_TOL));
        Ok((series.total(), resolved))
    };
    let mut steps = steps_per_segment.max(2);
    for _ in 0..=MAX_REFINEMENTS {
        match eval(steps) {
            Ok((v, true)) if v.is_finite() => return v,
            Ok((_, false)) => steps *= 2,
            _ => break,
        }
    }
    T::lit(f64::INFINITY)
}

struct Search<'a, T: Real> {
    model: &'a dyn Hamiltonian<T>,
    start: Vec<T>,
    end: Vec<T>,
    interior: usize,
    m: usize,
    opts: &'a OptimizeOptions,
    delta_deg: Option<T>,
    evals: usize,
    /// Evaluation count at which the current descent stops.
    limit: usize,
    best: (Vec<f64>, f64),
    trace: Vec<(usize, f64)>,
}

impl<T: Real> Search<'_, T> {
    fn knots(&self, x: &[f64]) -> Vec<Vec<T>> {
        let p = self.start.len();
        let mut out = Vec::with_capacity(self.interior + 2);
        out.push(self.start.clone());
        for j in 0..self.interior {
            out.push(x[j * p..(j + 1) * p].iter().map(|&v| T::lit(v)).collect());
        }
        out.push(self.end.clone());
        out
    }

    fn remaining(&self) -> usize {
        self.limit.saturating_sub(self.evals)
    }

    /// Evaluates a batch in parallel and records improvements in order.
    fn eval_batch(&mut self, xs: &[Vec<f64>]) -> Vec<f64> {
        let vals: Vec<f64> = xs
            .par_iter()
            .map(|x| {
                let k = self.knots(x);
                path_objective(self.model, &k, self.m, self.opts.steps_per_segment, self.delta_deg).as_f64()
            })
            .collect();
        for (x, &v) in xs.iter().zip(&vals) {
            self.evals += 1;
            if v < self.best.1 {
                self.best = (x.clone(), v);
                self.trace.push((self.evals, v));
            }
        }
        vals
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.eval_batch(&[x.to_vec()])[0]
    }

    fn nelder_mead(&mut self, x0: Vec<f64>, step: &[f64]) {
        let n = x0.len();
        if n == 0 || self.remaining() < n + 1 {
            return;
        }
        let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
        for i in 0..n {
            let mut v = x0.clone();
            v[i] += step[i];
            simplex.push(v);
        }
        let mut vals = self.eval_batch(&simplex);
        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();
            let spread = vals[n] - vals[0];
            if (vals[0].is_finite() && spread.abs() <= self.opts.ftol * vals[0].abs().max(1.0)) || self.remaining() == 0 {
                return;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|i| simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64)
                .collect();
            let along = |coef: f64| -> Vec<f64> {
                (0..n).map(|i| centroid[i] + coef * (simplex[n][i] - centroid[i])).collect()
            };
            let xr = along(-1.0);
            let fr = self.eval(&xr);
            if fr < vals[0] {
                if self.remaining() == 0 {
                    simplex[n] = xr;
                    vals[n] = fr;
                    continue;
                }
                let xe = along(-2.0);
                let fe = self.eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    vals[n] = fe;
                } else {
                    simplex[n] = xr;
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                simplex[n] = xr;
                vals[n] = fr;
                continue;
            }
            if self.remaining() == 0 {
                return;
            }
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = self.eval(&xc);
                (xc, fc.min(f64::INFINITY))
            } else {
                let xc = along(0.5);
                let fc = self.eval(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
                continue;
            }
            // shrink towards the best vertex
            if self.remaining() < n {
                return;
            }
            let best = simplex[0].clone();
            let shrunk: Vec<Vec<f64>> = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect())
                .collect();
            let new_vals = self.eval_batch(&shrunk);
            for (i, (v, f)) in shrunk.into_iter().zip(new_vals).enumerate() {
                simplex[i + 1] = v;
                vals[i + 1] = f;
            }
        }
    }
}

/// Minimizes the level-`m` bound integral over paths from `start` to `end`.
///
/// The first descent starts from the straight line; each restart begins at
/// the best point found so far, randomly displaced, with a fresh simplex.
/// `initial` overrides the starting interior knots.
pub fn optimize_schedule<T: Real>(
    model: &dyn Hamiltonian<T>,
    start: &[T],
    end: &[T],
    m: usize,
    opts: &OptimizeOptions,
    initial: Option<Vec<Vec<T>>>,
    delta_deg: Option<T>,
) -> Result<PathCandidate<T>> {
    let p = model.n_params();
    if start.len() != p || end.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: start.len().max(end.len()),
        });
    }
    if opts.n_knots < 2 {
        return Err(Error::InvalidArgument("need at least two knots".into()));
    }
    if m >= model.dim() {
        return Err(Error::InvalidLevel {
            index: m,
            count: model.dim(),
        });
    }
    let interior = opts.n_knots - 2;
    let x0: Vec<f64> = match initial {
        Some(knots) => {
            if knots.len() != interior || knots.iter().any(|k| k.len() != p) {
                return Err(Error::InvalidArgument(format!(
                    "initial path needs {interior} interior knots of length {p}"
                )));
            }
            knots.iter().flatten().map(|x| x.as_f64()).collect()
        }
        None => (1..=interior)
            .flat_map(|j| {
                let s = j as f64 / (interior + 1) as f64;
                start.iter().zip(end).map(move |(a, b)| a.as_f64() + s * (b.as_f64() - a.as_f64()))
            })
            .collect(),
    };
    let scale = start
        .iter()
        .zip(end)
        .map(|(a, b)| (b.as_f64() - a.as_f64()).abs())
        .fold(0.0, f64::max)
        .max(start.iter().chain(end).map(|x| x.as_f64().abs()).fold(0.0, f64::max))
        .max(1e-3);
    let mut search = Search {
        model,
        start: start.to_vec(),
        end: end.to_vec(),
        interior,
        m,
        opts,
        delta_deg,
        evals: 0,
        limit: opts.budget,
        best: (x0.clone(), f64::INFINITY),
        trace: Vec::new(),
    };
    search.eval(&x0);
    let mut r = rng(opts.seed);
    for round in 0..=opts.restarts {
        let left = opts.budget.saturating_sub(search.evals);
        if left == 0 {
            break;
        }
        search.limit = search.evals + left / (opts.restarts + 1 - round);
        let step_size = 0.25 * scale / (1 << round.min(4)) as f64;
        let mut origin = search.best.0.clone();
        if round > 0 || !search.best.1.is_finite() {
            for v in origin.iter_mut() {
                *v += step_size * (2.0 * r.random::<f64>() - 1.0);
            }
        }
        let step: Vec<f64> = (0..origin.len())
            .map(|_| if r.random::<bool>() { step_size } else { -step_size })
            .collect();
        search.nelder_mead(origin, &step);
    }
    let (x, objective) = search.best.clone();
    if !objective.is_finite() {
        return Err(Error::GapClosure {
            t: f64::NAN,
            lower: m.saturating_sub(1),
            upper: m,
            gap: 0.0,
            delta_deg: delta_deg.map_or(0.0, |d| d.as_f64()),
        });
    }
    Ok(PathCandidate {
        knots: search.knots(&x),
        objective: T::lit(objective),
        trace: search.trace.into_iter().map(|(e, v)| (e, T::lit(v))).collect(),
        evaluations: search.evals,
    })
}

/// Retimes `path` so that `‖(1 - P_m) Ṗ_m‖` is constant in time, keeping the
/// duration and the geometric path.
pub fn arc_length_reparameterize<T: Real>(
    model: &dyn Hamiltonian<T>,
    path: &ParameterSchedule<T>,
    m: usize,
    steps: usize,
    delta_deg: Option<T>,
) -> Result<ParameterSchedule<T>> {
    let duration = path.duration();
    let grid = TimeGrid::uniform(duration, steps)?;
    let frames = FrameSeries::build(model, path, &grid, delta_deg)?;
    let series = qgt_integral_series(&frames, m)?;
    let total = series.total();
    if !(total > T::zero()) {
        return Err(Error::Degenerate("path has zero length".into()));
    }
    let floor = total * T::lit(1e-12);
    let mut samples: Vec<(T, T)> = vec![(T::zero(), T::zero())];
    let times = grid.times();
    for k in 1..times.len() {
        let t_new = if k == times.len() - 1 {
            duration
        } else {
            duration * series.cumulative[k] / total
        };
        let last = samples.last().unwrap().0;
        if t_new - last > floor * duration || k == times.len() - 1 {
            if k == times.len() - 1 && t_new - last <= floor * duration {
                samples.pop();
            }
            samples.push((t_new, times[k]));
        }
    }
    let last = samples.len() - 1;
    samples[last] = (duration, duration);
    ParameterSchedule::retimed(path.clone(), samples)
}
