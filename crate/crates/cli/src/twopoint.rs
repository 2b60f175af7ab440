use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use simplex_langevin_core::dynamics::simulate;
use simplex_langevin_core::io::{write_density_csv, write_histogram_csv, write_trajectory_csv};
use simplex_langevin_core::twopoint::{discard_burn_in, occupancy};
use simplex_langevin_core::TwoPointModel;

use crate::config::{member_path, ExperimentConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::output::{pool, resolve, write_json, write_with};

#[derive(Debug, Serialize)]
struct TwoPointSummary {
    schema_version: u32,
    command: &'static str,
    #[serde(rename = "Z")]
    z: f64,
    l1_distance: f64,
    boundary_hits: usize,
    samples: usize,
    bins: usize,
    burn_in: f64,
    h: f64,
    beta: f64,
    mean: String,
    potential: String,
    seed: u64,
    steps: usize,
    dt: f64,
    ensemble: usize,
}

/// Per-member histogram counts after burn-in.
struct Occupancy {
    weights: Vec<f64>,
    samples: usize,
    hits: usize,
}

pub fn run(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<()> {
    let inst = cfg.instance()?;
    if inst.geometry.n() != 2 {
        return Err(CliError::Config(format!(
            "twopoint needs a two-vertex graph, got n = {}",
            inst.geometry.n()
        )));
    }
    let settings = &cfg.twopoint;
    if settings.bins == 0 || settings.grid_points == 0 || !(0.0..1.0).contains(&settings.burn_in) {
        return Err(CliError::Config("twopoint needs bins ≥ 1, grid_points ≥ 1 and burn_in in [0, 1)".into()));
    }
    let model = TwoPointModel::reduce(
        inst.geometry.graph(),
        inst.geometry.mean().clone(),
        inst.potential.clone(),
        cfg.beta,
    )
    .map_err(CliError::config)?;
    let density = model.stationary_density(settings.quadrature_nodes).map_err(CliError::run)?;
    let grid = density.grid(settings.grid_points).map_err(CliError::run)?;
    let analytic = density.bin_masses(settings.bins);

    // The histogram uses every step; files keep every `record_every`-th row.
    let mut full = inst.sde.clone();
    full.record_every = 1;
    let parts: Vec<CliResult<Occupancy>> = pool(workers)?.install(|| {
        (0..cfg.ensemble)
            .into_par_iter()
            .map(|m| {
                let traj = simulate(&inst.geometry, inst.potential.as_ref(), &full, &inst.p0, m as u64)
                    .map_err(CliError::run)?;
                let rel = member_path(&cfg.outputs.trajectory, m, cfg.ensemble);
                let thinned = traj.thinned(cfg.record_every);
                write_with(&resolve(out, &rel), |w| write_trajectory_csv(w, &thinned))?;
                let xs = traj.coordinate(0);
                let kept = discard_burn_in(&xs, settings.burn_in);
                let fractions = occupancy(kept, settings.bins).map_err(CliError::run)?;
                Ok(Occupancy {
                    weights: fractions.iter().map(|f| f * kept.len() as f64).collect(),
                    samples: kept.len(),
                    hits: traj.summary.boundary_hits,
                })
            })
            .collect()
    });
    let parts = parts.into_iter().collect::<CliResult<Vec<_>>>()?;
    let samples: usize = parts.iter().map(|p| p.samples).sum();
    let empirical: Vec<f64> = (0..settings.bins)
        .map(|k| parts.iter().map(|p| p.weights[k]).sum::<f64>() / samples as f64)
        .collect();
    let l1_distance = empirical.iter().zip(&analytic).map(|(e, a)| (e - a).abs()).sum();

    write_with(&resolve(out, &cfg.outputs.density), |w| write_density_csv(w, &grid))?;
    write_with(&resolve(out, &cfg.outputs.histogram), |w| write_histogram_csv(w, &empirical, &analytic))?;
    let summary = TwoPointSummary {
        schema_version: SCHEMA_VERSION,
        command: "twopoint",
        z: density.z,
        l1_distance,
        boundary_hits: parts.iter().map(|p| p.hits).sum(),
        samples,
        bins: settings.bins,
        burn_in: settings.burn_in,
        h: model.h,
        beta: model.beta,
        mean: cfg.mean.clone(),
        potential: cfg.potential.clone(),
        seed: cfg.seed,
        steps: cfg.steps,
        dt: cfg.dt,
        ensemble: cfg.ensemble,
    };
    write_json(&resolve(out, &cfg.outputs.twopoint_summary), &summary)?;
    eprintln!(
        "twopoint: Z = {:.6}, L1 = {:.4} over {} samples, {} boundary hit(s)",
        summary.z, summary.l1_distance, summary.samples, summary.boundary_hits
    );
    Ok(())
}
