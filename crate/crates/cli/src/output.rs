use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// `path` unchanged if absolute, otherwise under `out`.
pub fn resolve(out: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out.join(path)
    }
}

/// Creates `path` and its parent directories.
pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes with a core writer, mapping its errors to I/O failures on `path`.
pub fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> simplex_langevin_core::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Worker count: the configured value or the machine's parallelism, capped by
/// `SIMPLEX_LANGEVIN_WORKERS` when set.
pub fn worker_count(configured: Option<usize>, cap: Option<usize>) -> CliResult<usize> {
    let base = configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let n = cap.map_or(base, |c| base.min(c));
    if n == 0 {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    Ok(n)
}

pub fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Run(format!("cannot start worker pool: {e}")))
}
