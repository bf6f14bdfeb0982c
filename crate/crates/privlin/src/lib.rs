//! File formats, a wall clock and the batch runners behind the `privlin`
//! command-line tool.

pub mod bench;
pub mod error;
pub mod io;
pub mod runner;

pub use error::{CliError, CliResult};

use std::time::Instant;

use privlin_core::clock::Clock;

/// Monotonic clock measured from its creation.
#[derive(Clone, Copy, Debug)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock::new()
    }
}

impl Clock for WallClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Environment variable holding the dense-materialization cap in bytes.
pub const DENSE_CAP_ENV: &str = "PRIVLIN_DENSE_CAP_BYTES";

/// Applies the dense cap from the environment, if set.
pub fn apply_env_cap() -> CliResult<()> {
    if let Ok(v) = std::env::var(DENSE_CAP_ENV) {
        let bytes: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{DENSE_CAP_ENV} must be a byte count, got `{v}`")))?;
        privlin_core::matrix::set_dense_cap_bytes(bytes);
    }
    Ok(())
}
