//! Batch front end: reads a JSON run configuration, runs the requested
//! pipelines and writes `report.json`, `timeseries.csv` and `run.log`.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Overrides, RunConfig, Task};
pub use error::CliError;
pub use pipeline::{run, run_id, RunReport};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NADBOUND_THREADS";

/// Installs the global worker pool, honoring [`THREADS_ENV`].
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}: '{value}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}
