//! Config parsing, presets, experiment orchestration and report writing
//! behind the `pdbsde` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod report;

pub use config::{parse_config, ConfigError, ExperimentConfig, FieldError};
pub use error::CliError;
pub use experiment::{run_experiment, run_figure1, run_flavors, FigurePoint, Report, Row};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "PDBSDE_THREADS";

/// Thread count from the flag, then [`THREADS_ENV`]; `None` means all cores.
pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return positive(n).map(Some);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => {
            let n = s
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={s} is not a thread count")))?;
            positive(n).map(Some)
        }
        Err(_) => Ok(None),
    }
}

fn positive(n: usize) -> Result<usize, CliError> {
    if n == 0 {
        Err(CliError::Usage("thread count must be at least 1".into()))
    } else {
        Ok(n)
    }
}

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(pool.install(f))
}
