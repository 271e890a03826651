//! Numerical toolkit for nonadiabatic transitions in parameter-driven
//! finite-dimensional quantum systems.
//!
//! The numerical core is generic over the real scalar ([`Real`], implemented
//! for `f32` and `f64`); the `*64` aliases below fix double precision, which
//! is what the tolerances in the test suites assume.

pub mod dynamics;
pub mod bounds;
pub mod error;
pub mod interp;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod qsl;
pub mod quadrature;
pub mod random;
pub mod scalar;
pub mod schedule;
pub mod spectral;
pub mod twolevel;

pub use bounds::{BoundReport, CsvRow, RateRecord, ReportOptions, CSV_COLUMNS, DEFAULT_CERT_EPS};
pub use dynamics::{propagate, FrameSeries, PropagationMode, PropagatorPair, TimeGrid};
pub use error::{Error, Result};
pub use linalg::{expi_step, hermitian_eig, operator_norm, HermitianEig};
pub use model::{
    hamiltonian_at, time_derivative_h, AffineModel, ConjugatedSpectrum, DenseTabulated, Hamiltonian, LandauZener, ModelFamily, ModelFile,
    TransverseFieldIsing, TwoLevelField,
};
pub use optimize::{optimize_schedule, OptimizeOptions, PathCandidate};
pub use qsl::{bures_angle, fidelity, qsl_chain, QslChain};
pub use scalar::{CMatrix, CVector, Real};
pub use schedule::{FnSchedule, ParameterSchedule, Schedule, ScheduleFile};
pub use spectral::{spectral_frame, SpectralFrame};
pub use twolevel::{annealing_bound_check, bloch_rate, trajectory_length, BlochPath, ProjectedTwoLevel};

pub type Matrix64 = CMatrix<f64>;
pub type Schedule64 = ParameterSchedule<f64>;
pub type Ising64 = TransverseFieldIsing<f64>;
pub type Frame64 = SpectralFrame<f64>;
pub type Frames64 = FrameSeries<f64>;
pub type Grid64 = TimeGrid<f64>;
