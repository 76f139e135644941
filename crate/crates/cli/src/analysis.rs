//! `gmki reference` and `gmki metrics`: grid oracles and TV tables.

use std::path::{Path, PathBuf};

use gmki_core::benchmarks;
use gmki_core::oracles::{grid_posterior, mixture_to_grid, tv_distance};
use rayon::prelude::*;

use crate::artifacts;
use crate::error::CliError;

/// Writes the grid posterior of a named benchmark. Bounds and resolution
/// default to the benchmark's reference grid; a single resolution applies
/// to every axis.
pub fn cmd_reference(
    problem: &str,
    bounds: &[(f64, f64)],
    resolution: &[usize],
    out: &Path,
) -> Result<usize, CliError> {
    let spec = benchmarks::by_name(problem)?;
    let bounds = if bounds.is_empty() { spec.reference_bounds.clone() } else { bounds.to_vec() };
    let resolution = match resolution {
        [] => spec.reference_resolution.clone(),
        [n] => vec![*n; bounds.len()],
        many => many.to_vec(),
    };
    let grid = grid_posterior(&spec.augmented(), &bounds, &resolution)?;
    artifacts::write_density(out, &grid)?;
    Ok(grid.len())
}

/// Per-iteration TV distance between each recorded mixture and the
/// reference density, on the reference grid. Returns the table path.
pub fn cmd_metrics(run: &Path, reference: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let records = artifacts::read_records(&run.join(artifacts::RECORDS))?;
    let reference = artifacts::read_density(reference)?;
    if let Some(r) = records.first() {
        if r.means.first().map_or(0, Vec::len) != reference.dim() {
            return Err(CliError::Config(format!(
                "run has dimension {} but the reference grid has {}",
                r.means.first().map_or(0, Vec::len),
                reference.dim()
            )));
        }
    }
    let tv = records
        .par_iter()
        .map(|r| {
            let mix = r.mixture()?;
            tv_distance(&mixture_to_grid(&mix, &reference.axes)?, &reference)
        })
        .collect::<gmki_core::Result<Vec<f64>>>()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let path = out.map_or_else(|| run.join("tv.csv"), Path::to_path_buf);
    let mut w = artifacts::create(&path)?;
    let io = |e| CliError::io(&path, e);
    use std::io::Write;
    writeln!(w, "iteration,tv").map_err(io)?;
    for (r, v) in records.iter().zip(&tv) {
        writeln!(w, "{},{v:.16e}", r.iteration).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}
