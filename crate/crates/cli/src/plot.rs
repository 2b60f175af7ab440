use std::fs::File;
use std::path::Path;

use simplex_langevin_core::io::{read_density_csv, read_trajectory_csv};

use crate::error::{CliError, CliResult};
use crate::output::create;

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Writes `source,series,x,y` rows: one series `p_k` per trajectory
/// coordinate against time, and `rho_star` against `x`.
pub fn run(trajectory: Option<&Path>, density: Option<&Path>, output: &Path) -> CliResult<()> {
    if trajectory.is_none() && density.is_none() {
        return Err(CliError::Config("plot-data needs --trajectory and/or --density".into()));
    }
    let mut w = csv::Writer::from_writer(create(output)?);
    let io = |e: csv::Error| CliError::io(output, e);
    w.write_record(["source", "series", "x", "y"]).map_err(io)?;
    if let Some(path) = trajectory {
        let table = read_trajectory_csv(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for k in 0..table.n {
            let series = format!("p_{k}");
            for (row, t) in table.times.iter().enumerate() {
                let y = table.states[row * table.n + k];
                w.write_record(["trajectory", &series, &t.to_string(), &y.to_string()]).map_err(io)?;
            }
        }
    }
    if let Some(path) = density {
        let grid = read_density_csv(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for (x, y) in grid {
            w.write_record(["density", "rho_star", &x.to_string(), &y.to_string()]).map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(output, e))
}
