//! Progress reporting and cooperative cancellation for long-running stages.

use crate::error::{Error, Result};

/// Long-running operations report progress through a `Monitor` and check for
/// cancellation at shard boundaries.
pub trait Monitor: Sync {
    /// `fraction` is in `[0, 1]`.
    fn progress(&self, _fraction: f64, _message: &str) {}

    fn is_cancelled(&self) -> bool {
        false
    }

    fn checkpoint(&self) -> Result<()> {
        if self.is_cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }
}

/// Ignores progress and never cancels.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl Monitor for Silent {}
