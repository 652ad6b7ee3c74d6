//! On-disk cache of the slit reference solution.

use std::fs;
use std::path::Path;

use msnn_core::problems::reference_poisson_slit;
use msnn_core::CoarseSolution;

use crate::formats::{read_solution, write_solution};
use crate::RunError;

/// Reads the cached reference at `path`, computing and writing it first if
/// the file does not exist.
pub fn load_or_compute(path: &Path) -> Result<CoarseSolution, RunError> {
    if path.exists() {
        return Ok(read_solution(fs::File::open(path)?)?);
    }
    let sol = compute_and_store(path)?;
    Ok(sol)
}

/// Solves the reference problem and writes it to `path`, replacing any
/// existing file atomically.
pub fn compute_and_store(path: &Path) -> Result<CoarseSolution, RunError> {
    let sol = reference_poisson_slit().map_err(|e| RunError::Solve(e.into()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut buf = Vec::new();
    write_solution(&sol, &mut buf)?;
    fs::write(&tmp, buf)?;
    fs::rename(&tmp, path)?;
    Ok(sol)
}
