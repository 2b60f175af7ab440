use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use simplex_langevin_core::dynamics::simulate;
use simplex_langevin_core::io::write_trajectory_csv;

use crate::config::{member_path, ExperimentConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::output::{pool, resolve, write_json, write_with};

#[derive(Debug, Serialize)]
struct MemberSummary {
    member: usize,
    trajectory: String,
    rows: usize,
    final_state: Vec<f64>,
    final_time: f64,
    boundary_hits: usize,
    max_mass_deviation: f64,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    steps: usize,
    dt: f64,
    beta: f64,
    mean: String,
    potential: String,
    ensemble: usize,
    boundary_hits: usize,
    max_mass_deviation: f64,
    members: Vec<MemberSummary>,
    wall_time_seconds: f64,
}

pub fn run(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<()> {
    let start = Instant::now();
    let inst = cfg.instance()?;
    let members: Vec<CliResult<MemberSummary>> = pool(workers)?.install(|| {
        (0..cfg.ensemble)
            .into_par_iter()
            .map(|m| {
                let traj = simulate(&inst.geometry, inst.potential.as_ref(), &inst.sde, &inst.p0, m as u64)
                    .map_err(CliError::run)?;
                let rel = member_path(&cfg.outputs.trajectory, m, cfg.ensemble);
                write_with(&resolve(out, &rel), |w| write_trajectory_csv(w, &traj))?;
                let s = traj.summary;
                Ok(MemberSummary {
                    member: m,
                    trajectory: rel.display().to_string(),
                    rows: traj.times.len(),
                    final_state: s.final_state,
                    final_time: s.final_time,
                    boundary_hits: s.boundary_hits,
                    max_mass_deviation: s.max_mass_deviation,
                })
            })
            .collect()
    });
    let members = members.into_iter().collect::<CliResult<Vec<_>>>()?;
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        seed: cfg.seed,
        steps: cfg.steps,
        dt: cfg.dt,
        beta: cfg.beta,
        mean: cfg.mean.clone(),
        potential: cfg.potential.clone(),
        ensemble: cfg.ensemble,
        boundary_hits: members.iter().map(|m| m.boundary_hits).sum(),
        max_mass_deviation: members.iter().map(|m| m.max_mass_deviation).fold(0.0, f64::max),
        members,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&resolve(out, &cfg.outputs.summary), &summary)?;
    eprintln!(
        "simulate: {} member(s), {} boundary hit(s), max |sum p - 1| = {:e}",
        summary.ensemble, summary.boundary_hits, summary.max_mass_deviation
    );
    Ok(())
}
