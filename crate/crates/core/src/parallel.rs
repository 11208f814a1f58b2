//! Worker-count control. Results never depend on the count: parallel work
//! collects into index order and every reduction runs sequentially.

use thiserror::Error;

pub const THREADS_ENV: &str = "DUOGLASS_THREADS";

#[derive(Debug, Error)]
pub enum ThreadsError {
    #[error("{THREADS_ENV} must be a positive integer, found `{0}`")]
    Invalid(String),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Worker cap from [`THREADS_ENV`]; `None` when unset or empty.
pub fn threads_from_env() -> Result<Option<usize>, ThreadsError> {
    match std::env::var(THREADS_ENV) {
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ThreadsError::Invalid(s)),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool of `threads` workers, or rayon's default count.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, ThreadsError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()?;
    Ok(pool.install(f))
}
