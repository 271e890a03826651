//! Task execution and artifact writing for a single run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nadbound_core::bounds::{apt_record, AptRecord, QslRecord};
use nadbound_core::dynamics::transition_rate;
use nadbound_core::linalg::trace;
use nadbound_core::optimize::arc_length_reparameterize;
use nadbound_core::random::{random_density, rng};
use nadbound_core::twolevel::leakage;
use nadbound_core::{
    optimize_schedule, propagate, qsl_chain, spectral_frame, BoundReport, FrameSeries, Grid64, Hamiltonian, Matrix64,
    PropagationMode, PropagatorPair, ProjectedTwoLevel, ReportOptions, Schedule, Schedule64, ScheduleFile,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{QslState, RunConfig, Task};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const REPORT_FILE: &str = "report.json";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const LOG_FILE: &str = "run.log";
pub const OPTIMIZED_SCHEDULE_FILE: &str = "optimized_schedule.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub duration: f64,
    pub steps: usize,
    pub dt_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub level: usize,
    /// Path length `∫ ‖(1 - P_m) Ṗ_m‖ dt` of the best path.
    pub objective: f64,
    /// Its square, the transition bound at `T`.
    pub bound: f64,
    pub evaluations: usize,
    pub knots: Vec<Vec<f64>>,
    pub trace: Vec<(usize, f64)>,
}

/// Optimized schedule in the schedule-file format, with the optimizer result alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedSchedule {
    #[serde(flatten)]
    pub schedule: ScheduleFile,
    pub objective: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduce2Record {
    pub t: f64,
    pub p01_reduced: f64,
    pub p01_full: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduce2Report {
    pub records: Vec<Reduce2Record>,
    /// `|p_reduced - p_full| / p_full` at the final time.
    pub final_relative_error: f64,
    pub max_leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub run_id: String,
    pub tasks: Vec<Task>,
    pub grid: GridInfo,
    pub rates: BoundReport,
    pub optimize: Option<OptimizeReport>,
    pub reduce2: Option<Reduce2Report>,
    pub config: RunConfig,
}

/// Stable identifier of a configuration, independent of where outputs go.
pub fn run_id(cfg: &RunConfig) -> String {
    let mut anon = cfg.clone();
    anon.output_dir = PathBuf::new();
    let canonical = serde_json::to_string(&anon).expect("config serializes");
    let digest = Sha256::digest(format!("nadbound {VERSION}\n{canonical}").as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

struct RunLog(BufWriter<File>);

impl RunLog {
    fn line(&mut self, msg: impl AsRef<str>) -> Result<(), CliError> {
        writeln!(self.0, "{}", msg.as_ref())?;
        Ok(())
    }
}

/// Executes every configured task and writes the artifacts into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let sched = cfg.build_schedule()?;
    let p = model.n_params();
    if sched.start().len() != p {
        return Err(CliError::Config(format!(
            "field 'schedule': {} parameters, the model takes {p}",
            sched.start().len()
        )));
    }
    let duration = sched.duration();
    let grid = match cfg.grid.dt_max {
        None => Grid64::uniform(duration, cfg.grid.steps),
        Some(dt) => Grid64::with_dt_max(duration, Some(cfg.grid.steps), Some(dt)),
    }
    .map_err(|e| CliError::Config(format!("field 'grid': {e}")))?;

    fs::create_dir_all(&cfg.output_dir)?;
    let id = run_id(cfg);
    let mut log = RunLog(BufWriter::new(File::create(cfg.output_dir.join(LOG_FILE))?));
    log.line(format!("nadbound {VERSION}"))?;
    log.line(format!("run_id {id}"))?;
    log.line("config:")?;
    log.line(serde_json::to_string_pretty(cfg).map_err(nadbound_core::Error::from)?)?;
    log.line(format!(
        "grid: T = {duration}, {} steps, dt_max = {:e}",
        grid.steps(),
        grid.dt_max()
    ))?;

    let result = execute(cfg, model.as_ref(), &sched, &grid, &id, &mut log);
    match &result {
        Ok(_) => log.line("status: ok")?,
        Err(e) => log.line(format!("status: exit {} ({e})", e.exit_code()))?,
    }
    log.0.flush()?;
    result
}

fn execute(
    cfg: &RunConfig,
    model: &dyn Hamiltonian<f64>,
    sched: &Schedule64,
    grid: &Grid64,
    id: &str,
    log: &mut RunLog,
) -> Result<RunReport, CliError> {
    let has = |t: Task| cfg.tasks.contains(&t);
    let delta = cfg.delta_deg;
    let checkpoints = grid.checkpoints(cfg.checkpoints);
    let mut rates = BoundReport::default();

    if has(Task::Simulate) || has(Task::Bounds) || has(Task::Qsl) || has(Task::Apt) {
        let frames = FrameSeries::build(model, sched, grid, delta)?;
        let pair = PropagatorPair::build(&frames, model, sched)?;
        log.line(format!("frames: {} levels at t = 0", frames.n_levels()))?;
        let opts = ReportOptions {
            levels: cfg.levels.clone(),
            checkpoints: if has(Task::Simulate) || has(Task::Bounds) {
                checkpoints.clone()
            } else {
                Vec::new()
            },
            bounds: has(Task::Bounds),
        };
        rates = BoundReport::assemble(&frames, &pair, &opts)?;
        log.line(format!("rates: {} records", rates.records.len()))?;
        if has(Task::Qsl) {
            rates.qsl = qsl_records(cfg, &frames, &pair, &checkpoints)?;
            log.line(format!("qsl: {} records", rates.qsl.len()))?;
        }
        if has(Task::Apt) {
            rates.apt = apt_records(cfg, model, sched, &frames, &checkpoints)?;
            log.line(format!("apt: {} records", rates.apt.len()))?;
        }
    }
    for w in &rates.warnings {
        log.line(format!("warning: {w}"))?;
    }

    let optimize = if has(Task::Optimize) {
        let r = run_optimize(cfg, model, sched, grid)?;
        log.line(format!(
            "optimize: objective {:.9} (bound {:.9}) after {} evaluations",
            r.objective, r.bound, r.evaluations
        ))?;
        Some(r)
    } else {
        None
    };

    let reduce2 = if has(Task::Reduce2) {
        let r = run_reduce2(cfg, model, sched, grid, &checkpoints)?;
        log.line(format!(
            "reduce2: final relative error {:.3e}, max leakage {:.3e}",
            r.final_relative_error, r.max_leakage
        ))?;
        Some(r)
    } else {
        None
    };

    let report = RunReport {
        version: VERSION.to_string(),
        run_id: id.to_string(),
        tasks: cfg.tasks.clone(),
        grid: GridInfo {
            duration: grid.duration(),
            steps: grid.steps(),
            dt_max: grid.dt_max(),
        },
        rates,
        optimize,
        reduce2,
        config: cfg.clone(),
    };
    write_artifacts(&cfg.output_dir, &report)?;

    if has(Task::Bounds) {
        report.rates.certify(cfg.certify_eps)?;
        log.line(format!("certified: all margins above -{:e}", cfg.certify_eps))?;
    }
    if let Some(q) = report
        .rates
        .qsl
        .iter()
        .find(|q| !(q.bures_angle <= q.cd_std_integral + cfg.qsl.slack && q.cd_std_integral <= q.qgt_integral + cfg.qsl.slack))
    {
        return Err(CliError::Certification(serde_json::to_string(q).map_err(nadbound_core::Error::from)?));
    }
    Ok(report)
}

pub fn write_artifacts(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).map_err(nadbound_core::Error::from)?;
    fs::write(dir.join(REPORT_FILE), json + "\n")?;
    let csv = BufWriter::new(File::create(dir.join(TIMESERIES_FILE))?);
    report.rates.write_csv(&report.run_id, csv)?;
    Ok(())
}

fn initial_state(cfg: &RunConfig, frames: &FrameSeries<f64>, n: usize) -> Result<Matrix64, CliError> {
    let basis = frames.node(0).level_basis(n)?;
    let mult = basis.ncols();
    let inner = match cfg.qsl.state {
        QslState::Uniform => Matrix64::identity(mult, mult).unscale(mult as f64),
        QslState::Random => random_density(&mut rng(cfg.seed ^ n as u64), mult, mult),
    };
    let rho = &basis * inner * basis.adjoint();
    let tr = trace(&rho).re;
    Ok(rho.unscale(tr))
}

fn qsl_records(
    cfg: &RunConfig,
    frames: &FrameSeries<f64>,
    pair: &PropagatorPair<f64>,
    checkpoints: &[usize],
) -> Result<Vec<QslRecord>, CliError> {
    let mut out = Vec::new();
    for &n in &cfg.levels {
        let rho0 = initial_state(cfg, frames, n)?;
        let recs: Vec<QslRecord> = checkpoints
            .par_iter()
            .map(|&k| {
                let chain = qsl_chain(frames, pair, n, &rho0, k)?;
                Ok(QslRecord::from_chain(frames.grid().times()[k], n, &chain))
            })
            .collect::<Result<_, nadbound_core::Error>>()?;
        out.extend(recs);
    }
    Ok(out)
}

fn apt_records(
    cfg: &RunConfig,
    model: &dyn Hamiltonian<f64>,
    sched: &Schedule64,
    frames: &FrameSeries<f64>,
    checkpoints: &[usize],
) -> Result<Vec<AptRecord>, CliError> {
    let grid = frames.grid();
    let dt = cfg.apt.delta_t.unwrap_or(grid.dt_max());
    if !(dt > 0.0) {
        return Err(CliError::Config(format!("field 'apt.delta_t': {dt} is not positive")));
    }
    let n_levels = frames.n_levels();
    let usable: Vec<usize> = checkpoints
        .iter()
        .copied()
        .filter(|&k| grid.times()[k] + dt <= grid.duration())
        .collect();
    let per_k: Vec<Vec<AptRecord>> = usable
        .par_iter()
        .map(|&k| {
            let before = frames.node(k);
            let after = spectral_frame(model, sched, before.t + dt, cfg.delta_deg)?;
            let mut recs = Vec::new();
            for &n in &cfg.levels {
                for m in (0..n_levels).filter(|&m| m != n) {
                    recs.push(apt_record(before, &after, n, m)?);
                }
            }
            Ok(recs)
        })
        .collect::<Result<_, nadbound_core::Error>>()?;
    Ok(per_k.into_iter().flatten().collect())
}

fn run_optimize(
    cfg: &RunConfig,
    model: &dyn Hamiltonian<f64>,
    sched: &Schedule64,
    grid: &Grid64,
) -> Result<OptimizeReport, CliError> {
    let level = cfg.optimize.level;
    let best = optimize_schedule(
        model,
        &sched.start(),
        &sched.end(),
        level,
        &cfg.optimize_options(),
        None,
        cfg.delta_deg,
    )?;
    let path = best.schedule(sched.duration())?;
    let exported = if best.objective > 0.0 {
        arc_length_reparameterize(model, &path, level, grid.steps(), cfg.delta_deg)?
    } else {
        path
    };
    let file = OptimizedSchedule {
        schedule: ScheduleFile::from_schedule(&exported),
        objective: best.objective,
        bound: best.objective * best.objective,
    };
    let json = serde_json::to_string_pretty(&file).map_err(nadbound_core::Error::from)?;
    fs::write(cfg.output_dir.join(OPTIMIZED_SCHEDULE_FILE), json + "\n")?;
    Ok(OptimizeReport {
        level,
        objective: best.objective,
        bound: best.objective * best.objective,
        evaluations: best.evaluations,
        knots: best.knots,
        trace: best.trace,
    })
}

fn run_reduce2(
    cfg: &RunConfig,
    model: &dyn Hamiltonian<f64>,
    sched: &Schedule64,
    grid: &Grid64,
    checkpoints: &[usize],
) -> Result<Reduce2Report, CliError> {
    let reduced = ProjectedTwoLevel::build(model, sched, grid, cfg.delta_deg)?.transition_series()?;
    let full = propagate(model, sched, grid, PropagationMode::Dynamical, cfg.delta_deg)?;
    let f0 = spectral_frame(model, sched, 0.0, cfg.delta_deg)?;
    let records: Vec<Reduce2Record> = checkpoints
        .par_iter()
        .map(|&k| {
            let t = grid.times()[k];
            let fk = spectral_frame(model, sched, t, cfg.delta_deg)?;
            Ok(Reduce2Record {
                t,
                p01_reduced: reduced[k],
                p01_full: transition_rate(&full[k], &f0, &fk, 0, 1)?,
                leakage: leakage(&full[k], &f0, &fk)?,
            })
        })
        .collect::<Result<_, nadbound_core::Error>>()?;
    let last = records.last().expect("at least two checkpoints");
    Ok(Reduce2Report {
        final_relative_error: (last.p01_reduced - last.p01_full).abs() / last.p01_full,
        max_leakage: records.iter().map(|r| r.leakage).fold(0.0, f64::max),
        records,
    })
}
