//! Configuration files, binary checkpoints and CSV logs.

mod checkpoint;
mod config;
mod logs;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{DataConfig, RunConfig};
pub use logs::{read_spike_log, read_update_log, write_spike_log, write_update_log, RunLog, RUN_LOG_COLUMNS};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
