//! Transition-rate bounds, instantaneous rates and certified reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{transition_rate, FrameSeries, PropagatorPair};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::quadrature::{cumulative_simpson, cumulative_simpson_midpoint};
use crate::qsl::QslChain;
use crate::scalar::Real;
use crate::spectral::SpectralFrame;

/// Default certification slack for the default grids.
pub const DEFAULT_CERT_EPS: f64 = 1e-3;

/// Relative tolerance of the Simpson refinement check.
pub const REFINEMENT_TOL: f64 = 1e-4;

/// Running integral of a nonnegative rate over the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSeries<T: Real> {
    /// Integrand at every node.
    pub integrand: Vec<T>,
    /// `∫_0^{t_k}` at every node.
    pub cumulative: Vec<T>,
    /// Relative change of the final value when the midpoint samples are
    /// dropped (step doubled); `None` when the grid is not uniform or the
    /// integral vanishes.
    pub refinement: Option<T>,
}

impl<T: Real> IntegralSeries<T> {
    pub fn total(&self) -> T {
        *self.cumulative.last().unwrap()
    }

    /// `(∫_0^{t_k})²`.
    pub fn squared(&self, k: usize) -> T {
        self.cumulative[k] * self.cumulative[k]
    }

    pub fn needs_refinement(&self) -> bool {
        self.refinement.is_some_and(|r| r > T::lit(REFINEMENT_TOL))
    }
}

fn integrate_series<T: Real>(
    frames: &FrameSeries<T>,
    f: impl Fn(&SpectralFrame<T>) -> Result<T> + Sync,
) -> Result<IntegralSeries<T>> {
    let nodes: Vec<T> = frames.nodes().par_iter().map(&f).collect::<Result<_>>()?;
    let mids: Vec<T> = frames.mids().par_iter().map(&f).collect::<Result<_>>()?;
    let grid = frames.grid();
    let cumulative = cumulative_simpson_midpoint(grid.times(), &nodes, &mids)?;
    let total = *cumulative.last().unwrap();
    let h = grid.step(0);
    let uniform = (0..grid.steps()).all(|k| (grid.step(k) - h).abs() <= T::lit(1e-9) * h);
    let refinement = if uniform && nodes.len() >= 3 && total > T::zero() {
        let coarse = *cumulative_simpson(&nodes, h)?.last().unwrap();
        Some((coarse - total).abs() / total)
    } else {
        None
    };
    Ok(IntegralSeries {
        integrand: nodes,
        cumulative,
        refinement,
    })
}

/// `∫ ‖(1 - P_m) Ṗ_m‖ dt` along the grid.
pub fn qgt_integral_series<T: Real>(frames: &FrameSeries<T>, m: usize) -> Result<IntegralSeries<T>> {
    frames.node(0).check_level(m)?;
    integrate_series(frames, |f| f.qgt_norm(m))
}

/// `∫ ‖H_cd‖ dt` along the grid.
pub fn cd_integral_series<T: Real>(frames: &FrameSeries<T>) -> Result<IntegralSeries<T>> {
    integrate_series(frames, |f| Ok(f.cd_norm()))
}

/// `[∫_0^{t_k} ‖(1 - P_m) Ṗ_m‖ dt]²`, bounding every `p_nm(t_k)` with `n ≠ m`.
pub fn qgt_bound_integral<T: Real>(frames: &FrameSeries<T>, m: usize, k: usize) -> Result<T> {
    Ok(qgt_integral_series(frames, m)?.squared(k))
}

/// `1 - [∫_0^{t_k} ‖(1 - P_n) Ṗ_n‖ dt]²`, a lower bound on `p_nn(t_k)`. May
/// be negative, in which case it is vacuous.
pub fn remaining_bound<T: Real>(frames: &FrameSeries<T>, n: usize, k: usize) -> Result<T> {
    Ok(T::one() - qgt_bound_integral(frames, n, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalBounds<T> {
    pub transition: T,
    pub remaining: T,
}

/// Level-independent bounds from `∫ ‖H_cd‖ dt`.
pub fn universal_bounds<T: Real>(frames: &FrameSeries<T>, k: usize) -> Result<UniversalBounds<T>> {
    let transition = cd_integral_series(frames)?.squared(k);
    Ok(UniversalBounds {
        transition,
        remaining: T::one() - transition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AptRates<T> {
    /// `δt² ‖P_n Ṗ_m‖²`
    pub pair_rate: T,
    /// `δt² ‖(1 - P_m) Ṗ_m‖²`
    pub level_rate: T,
}

pub fn apt_instantaneous_rates<T: Real>(frame: &SpectralFrame<T>, delta_t: T, n: usize, m: usize) -> Result<AptRates<T>> {
    if !(delta_t.is_finite() && delta_t > T::zero()) {
        return Err(Error::InvalidArgument(format!("delta_t must be positive, got {delta_t}")));
    }
    let pn = frame.projector(n)?;
    let pdm = frame.projector_derivative(m)?;
    let pair = spectral_norm(&(pn * pdm));
    let level = frame.qgt_norm(m)?;
    let dt2 = delta_t * delta_t;
    Ok(AptRates {
        pair_rate: dt2 * pair * pair,
        level_rate: dt2 * level * level,
    })
}

/// `‖P_m(t+δt) P_n(t) P_m(t+δt)‖` from the two frames.
pub fn quench_transfer<T: Real>(before: &SpectralFrame<T>, after: &SpectralFrame<T>, n: usize, m: usize) -> Result<T> {
    let pn = before.projector(n)?;
    let pm = after.projector(m)?;
    if pn.nrows() != pm.nrows() {
        return Err(Error::DimensionMismatch {
            expected: pn.nrows(),
            got: pm.nrows(),
        });
    }
    Ok(spectral_norm(&(&pm * pn * &pm)))
}

/// One row of the long-format report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub qgt_bound: Option<f64>,
    pub universal_bound: Option<f64>,
    pub remaining_bound: Option<f64>,
    pub universal_remaining: Option<f64>,
    /// `qgt_bound - p` for `n ≠ m`, `p - remaining_bound` for `n = m`.
    pub margin: Option<f64>,
    pub warn: String,
}

/// Bound integrand and running bound of one level along the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub level: usize,
    pub t: Vec<f64>,
    pub integrand: Vec<f64>,
    pub running_bound: Vec<f64>,
    pub refinement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AptRecord {
    pub t: f64,
    pub delta_t: f64,
    pub n: usize,
    pub m: usize,
    pub pair_rate: f64,
    pub level_rate: f64,
    pub quench_transfer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslRecord {
    pub t: f64,
    pub level: usize,
    pub bures_angle: f64,
    pub cd_std_integral: f64,
    pub qgt_integral: f64,
}

impl QslRecord {
    pub fn from_chain<T: Real>(t: T, level: usize, chain: &QslChain<T>) -> Self {
        Self {
            t: t.as_f64(),
            level,
            bures_angle: chain.bures_angle.as_f64(),
            cd_std_integral: chain.cd_std_integral.as_f64(),
            qgt_integral: chain.qgt_integral.as_f64(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub records: Vec<RateRecord>,
    pub levels: Vec<LevelSeries>,
    pub apt: Vec<AptRecord>,
    pub qsl: Vec<QslRecord>,
    pub warnings: Vec<String>,
    pub max_unitarity_residual: f64,
    pub max_intertwiner_residual: f64,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "run_id",
    "t",
    "n",
    "m",
    "p",
    "qgt_bound",
    "universal_bound",
    "remaining_bound",
    "margin",
    "warn",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub qgt_bound: Option<f64>,
    pub universal_bound: Option<f64>,
    pub remaining_bound: Option<f64>,
    pub margin: Option<f64>,
    pub warn: String,
}

/// What to put in a report.
#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Initial levels `n`; every final level `m` is reported.
    pub levels: Vec<usize>,
    /// Grid node indices at which rates are recorded.
    pub checkpoints: Vec<usize>,
    /// Attach bound columns (otherwise only measured rates).
    pub bounds: bool,
}

impl BoundReport {
    /// Measured rates at every checkpoint, optionally with all bounds.
    pub fn assemble<T: Real>(frames: &FrameSeries<T>, pair: &PropagatorPair<T>, opts: &ReportOptions) -> Result<Self> {
        let n_levels = frames.n_levels();
        for &n in &opts.levels {
            frames.node(0).check_level(n)?;
        }
        let steps = frames.grid().steps();
        if let Some(&k) = opts.checkpoints.iter().find(|&&k| k > steps) {
            return Err(Error::InvalidGrid(format!("checkpoint {k} beyond {steps} steps")));
        }
        let times = frames.grid().times();
        let mut warnings = Vec::new();
        let near = frames.near_crossings();
        if let Some(t0) = near.first() {
            warnings.push(format!(
                "near-crossing: {} frames with gap below threshold, first at t = {}",
                near.len(),
                t0
            ));
        }
        let (series, universal) = if opts.bounds {
            let series: Vec<IntegralSeries<T>> = (0..n_levels)
                .into_par_iter()
                .map(|m| qgt_integral_series(frames, m))
                .collect::<Result<_>>()?;
            (series, Some(cd_integral_series(frames)?))
        } else {
            (Vec::new(), None)
        };
        for (m, s) in series.iter().enumerate() {
            if let Some(r) = s.refinement.filter(|_| s.needs_refinement()) {
                warnings.push(format!("refine: level {m} bound integral changes by {:.2e} relative under step doubling", r.as_f64()));
            }
        }
        let triples: Vec<(usize, usize, usize)> = opts
            .checkpoints
            .iter()
            .flat_map(|&k| opts.levels.iter().flat_map(move |&n| (0..n_levels).map(move |m| (k, n, m))))
            .collect();
        let records: Vec<RateRecord> = triples
            .par_iter()
            .map(|&(k, n, m)| {
                let t = times[k];
                let p = transition_rate(pair.dynamical(k), frames.node(0), frames.node(k), n, m)?;
                let mut warn: Vec<&str> = Vec::new();
                if near.first().is_some_and(|&t0| t0 <= t) {
                    warn.push("near-crossing");
                }
                let mut rec = RateRecord {
                    t: t.as_f64(),
                    n,
                    m,
                    p: p.as_f64(),
                    qgt_bound: None,
                    universal_bound: None,
                    remaining_bound: None,
                    universal_remaining: None,
                    margin: None,
                    warn: String::new(),
                };
                if let Some(u) = &universal {
                    let qgt = series[m].squared(k);
                    let uni = u.squared(k);
                    rec.qgt_bound = Some(qgt.as_f64());
                    rec.universal_bound = Some(uni.as_f64());
                    if series[m].needs_refinement() {
                        warn.push("refine");
                    }
                    if n == m {
                        let rem = T::one() - qgt;
                        rec.remaining_bound = Some(rem.as_f64());
                        rec.universal_remaining = Some((T::one() - uni).as_f64());
                        rec.margin = Some((p - rem).as_f64());
                        if rem < T::zero() {
                            warn.push("vacuous");
                        }
                    } else {
                        rec.margin = Some((qgt - p).as_f64());
                        if qgt > T::one() {
                            warn.push("vacuous");
                        }
                    }
                }
                rec.warn = warn.join(";");
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        let levels = series
            .iter()
            .enumerate()
            .map(|(m, s)| LevelSeries {
                level: m,
                t: times.iter().map(|t| t.as_f64()).collect(),
                integrand: s.integrand.iter().map(|x| x.as_f64()).collect(),
                running_bound: (0..times.len()).map(|k| s.squared(k).as_f64()).collect(),
                refinement: s.refinement.map(|r| r.as_f64()),
            })
            .collect();
        let max_intertwiner = opts
            .checkpoints
            .iter()
            .map(|&k| pair.intertwiner_residual(k).as_f64())
            .fold(0.0, f64::max);
        Ok(Self {
            records,
            levels,
            apt: Vec::new(),
            qsl: Vec::new(),
            warnings,
            max_unitarity_residual: pair.max_unitarity_residual().as_f64(),
            max_intertwiner_residual: max_intertwiner,
        })
    }

    /// Fails on the first record whose margin is below `-eps`.
    pub fn certify(&self, eps: f64) -> Result<()> {
        match self.records.iter().find(|r| r.margin.is_some_and(|m| m < -eps)) {
            None => Ok(()),
            Some(r) => Err(Error::Certification(serde_json::to_string(r)?)),
        }
    }

    pub fn csv_rows(&self, run_id: &str) -> Vec<CsvRow> {
        self.records
            .iter()
            .map(|r| CsvRow {
                run_id: run_id.to_string(),
                t: r.t,
                n: r.n,
                m: r.m,
                p: r.p,
                qgt_bound: r.qgt_bound,
                universal_bound: r.universal_bound,
                remaining_bound: r.remaining_bound,
                margin: r.margin,
                warn: r.warn.clone(),
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, run_id: &str, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in self.csv_rows(run_id) {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
            return Err(Error::InvalidArgument(format!("unexpected CSV header {headers:?}")));
        }
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// APT rates and quench transfers for `(n, m)` at node `k`, with the quench
/// taken over `delta_t` using the frame at `t_k + delta_t`.
pub fn apt_record<T: Real>(
    before: &SpectralFrame<T>,
    after: &SpectralFrame<T>,
    n: usize,
    m: usize,
) -> Result<AptRecord> {
    let dt = after.t - before.t;
    let rates = apt_instantaneous_rates(before, dt, n, m)?;
    Ok(AptRecord {
        t: before.t.as_f64(),
        delta_t: dt.as_f64(),
        n,
        m,
        pair_rate: rates.pair_rate.as_f64(),
        level_rate: rates.level_rate.as_f64(),
        quench_transfer: quench_transfer(before, after, n, m)?.as_f64(),
    })
}
