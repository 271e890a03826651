//! Control-parameter schedules `t ↦ λ_t` on `[0, T]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::CubicCurve;
use crate::scalar::Real;

/// A smooth map from time to a control-parameter vector.
pub trait Schedule<T: Real>: Send + Sync {
    fn duration(&self) -> T;
    fn n_params(&self) -> usize;
    /// `λ_t`; callers are expected to stay inside `[0, T]`.
    fn value(&self, t: T) -> Vec<T>;
    /// `dλ/dt`.
    fn derivative(&self, t: T) -> Vec<T>;
}

/// Rejects times outside `[0, T]`, allowing roundoff-sized overshoot.
pub fn check_time<T: Real>(sched: &dyn Schedule<T>, t: T) -> Result<T> {
    let dur = sched.duration();
    let slack = T::lit(1e-12) * dur.max(T::one());
    if !t.is_finite() || t < -slack || t > dur + slack {
        return Err(Error::TimeOutOfRange {
            t: t.as_f64(),
            duration: dur.as_f64(),
        });
    }
    Ok(t.max(T::zero()).min(dur))
}

/// Schedule kinds with a file representation.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterSchedule<T: Real> {
    /// `λ_t = (1 - s) λ_0 + s λ_T`, `s = t / T`.
    Linear { duration: T, from: Vec<T>, to: Vec<T> },
    /// `λ_t = cos(πs/2) λ_0 + sin(πs/2) λ_T`; with `|λ_0| = |λ_T|` and orthogonal
    /// endpoints this traverses a circular arc at constant angular speed.
    TrigAnnealing { duration: T, from: Vec<T>, to: Vec<T> },
    /// Natural cubic spline through control points (C² in time).
    PiecewiseCubic(CubicCurve<T>),
    /// Monotone cubic interpolation of tabulated samples (C¹ in time).
    Tabulated(CubicCurve<T>),
    /// `base` evaluated at a warped time `τ(t)`, `τ` monotone.
    Retimed {
        base: Box<ParameterSchedule<T>>,
        time_map: CubicCurve<T>,
    },
}

fn check_endpoints<T: Real>(duration: T, from: &[T], to: &[T]) -> Result<()> {
    if !(duration > T::zero()) || !duration.is_finite() {
        return Err(Error::InvalidSchedule("duration must be positive and finite".into()));
    }
    if from.is_empty() || from.len() != to.len() {
        return Err(Error::InvalidSchedule("endpoints must have equal nonzero length".into()));
    }
    if from.iter().chain(to).any(|x| !x.is_finite()) {
        return Err(Error::InvalidSchedule("non-finite endpoint".into()));
    }
    Ok(())
}

fn check_curve_origin<T: Real>(curve: &CubicCurve<T>) -> Result<()> {
    if curve.start() != T::zero() {
        return Err(Error::InvalidSchedule("first knot must sit at t = 0".into()));
    }
    Ok(())
}

impl<T: Real> ParameterSchedule<T> {
    pub fn linear(duration: T, from: Vec<T>, to: Vec<T>) -> Result<Self> {
        check_endpoints(duration, &from, &to)?;
        Ok(Self::Linear { duration, from, to })
    }

    pub fn constant(duration: T, lambda: Vec<T>) -> Result<Self> {
        Self::linear(duration, lambda.clone(), lambda)
    }

    pub fn trig_annealing(duration: T, from: Vec<T>, to: Vec<T>) -> Result<Self> {
        check_endpoints(duration, &from, &to)?;
        Ok(Self::TrigAnnealing { duration, from, to })
    }

    /// Two-level annealing preset: `h_0 = (h0x, 0, 0)` to `h_T = (0, 0, hTz)`.
    pub fn two_level_annealing(duration: T, h0x: T, htz: T, trig: bool) -> Result<Self> {
        if h0x == T::zero() || htz == T::zero() {
            return Err(Error::InvalidSchedule("annealing fields must be nonzero".into()));
        }
        let z = T::zero();
        let (from, to) = (vec![h0x, z, z], vec![z, z, htz]);
        if trig {
            Self::trig_annealing(duration, from, to)
        } else {
            Self::linear(duration, from, to)
        }
    }

    pub fn piecewise_cubic(knots: Vec<(T, Vec<T>)>) -> Result<Self> {
        let (xs, ys) = knots.into_iter().unzip();
        let curve = CubicCurve::natural(xs, ys)?;
        check_curve_origin(&curve)?;
        Ok(Self::PiecewiseCubic(curve))
    }

    pub fn tabulated(knots: Vec<(T, Vec<T>)>) -> Result<Self> {
        let (xs, ys) = knots.into_iter().unzip();
        let curve = CubicCurve::monotone(xs, ys)?;
        check_curve_origin(&curve)?;
        Ok(Self::Tabulated(curve))
    }

    /// Retimes `base` by the monotone map given as `(t, τ)` samples with
    /// `τ(0) = 0` and `τ(T_new) = T_base`.
    pub fn retimed(base: ParameterSchedule<T>, samples: Vec<(T, T)>) -> Result<Self> {
        let (ts, taus): (Vec<T>, Vec<T>) = samples.into_iter().unzip();
        if taus.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSchedule("time map must be monotone".into()));
        }
        let first = *taus.first().ok_or_else(|| Error::InvalidSchedule("empty time map".into()))?;
        let last = *taus.last().unwrap();
        if first != T::zero() || last != base.duration() {
            return Err(Error::InvalidSchedule("time map must cover the base schedule".into()));
        }
        let time_map = CubicCurve::monotone(ts, taus.into_iter().map(|x| vec![x]).collect())?;
        check_curve_origin(&time_map)?;
        Ok(Self::Retimed {
            base: Box::new(base),
            time_map,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::TrigAnnealing { .. } => "trig-annealing",
            Self::PiecewiseCubic(_) => "piecewise-cubic",
            Self::Tabulated(_) => "tabulated",
            Self::Retimed { .. } => "retimed",
        }
    }

    pub fn start(&self) -> Vec<T> {
        self.value(T::zero())
    }

    pub fn end(&self) -> Vec<T> {
        self.value(self.duration())
    }

    fn trig_weights(duration: T, t: T) -> (T, T, T) {
        // exact endpoints, smooth in between
        let s = t / duration;
        if s <= T::zero() {
            return (T::one(), T::zero(), T::frac_pi_2() / duration);
        }
        if s >= T::one() {
            return (T::zero(), T::one(), T::frac_pi_2() / duration);
        }
        let a = T::frac_pi_2() * s;
        (a.cos(), a.sin(), T::frac_pi_2() / duration)
    }
}

impl<T: Real> Schedule<T> for ParameterSchedule<T> {
    fn duration(&self) -> T {
        match self {
            Self::Linear { duration, .. } | Self::TrigAnnealing { duration, .. } => *duration,
            Self::PiecewiseCubic(c) | Self::Tabulated(c) => c.end(),
            Self::Retimed { time_map, .. } => time_map.end(),
        }
    }

    fn n_params(&self) -> usize {
        match self {
            Self::Linear { from, .. } | Self::TrigAnnealing { from, .. } => from.len(),
            Self::PiecewiseCubic(c) | Self::Tabulated(c) => c.dim(),
            Self::Retimed { base, .. } => base.n_params(),
        }
    }

    fn value(&self, t: T) -> Vec<T> {
        match self {
            Self::Linear { duration, from, to } => {
                let s = t / *duration;
                if s >= T::one() {
                    return to.clone();
                }
                from.iter()
                    .zip(to)
                    .map(|(&a, &b)| a + (b - a) * s)
                    .collect()
            }
            Self::TrigAnnealing { duration, from, to } => {
                let (ca, sa, _) = Self::trig_weights(*duration, t);
                from.iter().zip(to).map(|(&a, &b)| ca * a + sa * b).collect()
            }
            Self::PiecewiseCubic(c) | Self::Tabulated(c) => c.eval(t).0,
            Self::Retimed { base, time_map } => {
                let tau = time_map.eval(t).0[0];
                base.value(tau.max(T::zero()).min(base.duration()))
            }
        }
    }

    fn derivative(&self, t: T) -> Vec<T> {
        match self {
            Self::Linear { duration, from, to } => {
                from.iter().zip(to).map(|(&a, &b)| (b - a) / *duration).collect()
            }
            Self::TrigAnnealing { duration, from, to } => {
                let s = (t / *duration).max(T::zero()).min(T::one());
                let a = T::frac_pi_2() * s;
                let w = T::frac_pi_2() / *duration;
                from.iter()
                    .zip(to)
                    .map(|(&x, &y)| w * (-a.sin() * x + a.cos() * y))
                    .collect()
            }
            Self::PiecewiseCubic(c) | Self::Tabulated(c) => c.eval(t).1,
            Self::Retimed { base, time_map } => {
                let (tau, rate) = time_map.eval(t);
                let tau = tau[0].max(T::zero()).min(base.duration());
                base.derivative(tau).into_iter().map(|x| x * rate[0]).collect()
            }
        }
    }
}

/// Schedule defined by closures; handy for analytic test paths.
#[derive(Clone)]
pub struct FnSchedule<T: Real> {
    duration: T,
    n_params: usize,
    value: Arc<dyn Fn(T) -> Vec<T> + Send + Sync>,
    derivative: Arc<dyn Fn(T) -> Vec<T> + Send + Sync>,
}

impl<T: Real> FnSchedule<T> {
    pub fn new(
        duration: T,
        n_params: usize,
        value: impl Fn(T) -> Vec<T> + Send + Sync + 'static,
        derivative: impl Fn(T) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            duration,
            n_params,
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }
}

impl<T: Real> Schedule<T> for FnSchedule<T> {
    fn duration(&self) -> T {
        self.duration
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn value(&self, t: T) -> Vec<T> {
        (self.value)(t)
    }
    fn derivative(&self, t: T) -> Vec<T> {
        (self.derivative)(t)
    }
}

/// On-disk schedule: `{"T": .., "kind": .., "knots": [{"t": .., "lambda": [..]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    #[serde(rename = "T")]
    pub duration: f64,
    pub kind: String,
    pub knots: Vec<Knot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub lambda: Vec<f64>,
}

/// Knot count used when a retimed schedule is flattened to a table.
pub const EXPORT_SAMPLES: usize = 401;

impl ScheduleFile {
    pub fn into_schedule<T: Real>(self) -> Result<ParameterSchedule<T>> {
        let knots: Vec<(T, Vec<T>)> = self
            .knots
            .iter()
            .map(|k| (T::lit(k.t), k.lambda.iter().map(|&x| T::lit(x)).collect()))
            .collect();
        let duration = T::lit(self.duration);
        let two_point = |knots: &[(T, Vec<T>)]| -> Result<(Vec<T>, Vec<T>)> {
            if knots.len() != 2 || knots[0].0 != T::zero() || knots[1].0 != duration {
                return Err(Error::InvalidSchedule(format!(
                    "kind '{}' needs exactly two knots at t = 0 and t = T",
                    self.kind
                )));
            }
            Ok((knots[0].1.clone(), knots[1].1.clone()))
        };
        let sched = match self.kind.as_str() {
            "linear" => {
                let (a, b) = two_point(&knots)?;
                ParameterSchedule::linear(duration, a, b)?
            }
            "trig-annealing" => {
                let (a, b) = two_point(&knots)?;
                ParameterSchedule::trig_annealing(duration, a, b)?
            }
            "piecewise-cubic" | "tabulated" => {
                if knots.last().map(|k| k.0) != Some(duration) {
                    return Err(Error::InvalidSchedule("last knot must sit at t = T".into()));
                }
                if self.kind == "tabulated" {
                    ParameterSchedule::tabulated(knots)?
                } else {
                    ParameterSchedule::piecewise_cubic(knots)?
                }
            }
            other => return Err(Error::InvalidSchedule(format!("unknown schedule kind '{other}'"))),
        };
        Ok(sched)
    }

    pub fn from_schedule<T: Real>(sched: &ParameterSchedule<T>) -> Self {
        let to64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let duration = sched.duration().as_f64();
        let knot = |t: T, lam: &[T]| Knot {
            t: t.as_f64(),
            lambda: to64(lam),
        };
        match sched {
            ParameterSchedule::Linear { from, to, .. } | ParameterSchedule::TrigAnnealing { from, to, .. } => Self {
                duration,
                kind: sched.kind_name().into(),
                knots: vec![knot(T::zero(), from), knot(sched.duration(), to)],
            },
            ParameterSchedule::PiecewiseCubic(c) | ParameterSchedule::Tabulated(c) => Self {
                duration,
                kind: sched.kind_name().into(),
                knots: c.knots().iter().zip(c.knot_values()).map(|(&t, v)| knot(t, v)).collect(),
            },
            ParameterSchedule::Retimed { .. } => {
                let n = EXPORT_SAMPLES;
                let knots = (0..n)
                    .map(|k| {
                        let t = if k == n - 1 {
                            sched.duration()
                        } else {
                            sched.duration() * T::lit(k as f64 / (n - 1) as f64)
                        };
                        knot(t, &sched.value(t))
                    })
                    .collect();
                Self {
                    duration,
                    kind: "tabulated".into(),
                    knots,
                }
            }
        }
    }
}
