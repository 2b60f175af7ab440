use nalgebra::DMatrix;
use serde::Serialize;

use simplex_langevin_core::markov::{row_sums, step_equivalence_residual, wasserstein_q};
use simplex_langevin_core::{generator, Geometry, NoiseStream, PhiDivergence, ProbabilityVector, QMatrix, WeightedGraph};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct Realized {
    p: Vec<f64>,
    beta: f64,
    dt: f64,
    seed: u64,
    generator: String,
    mean: String,
    qw: Vec<Vec<f64>>,
    antisymmetric_rates: Vec<Vec<f64>>,
    noise_rates: Vec<f64>,
    row_sums: Vec<f64>,
    step_residual: f64,
}

#[derive(Debug, Serialize)]
struct QReport {
    schema_version: u32,
    command: &'static str,
    n: usize,
    q: Vec<Vec<f64>>,
    realized: Option<Realized>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Prints `Q` and, with `realize`, one sampled `Q^W(p)` for the matched pair
/// of φ-divergence potential and φ'-mean.
pub fn run(cfg: &ExperimentConfig, p: Option<Vec<f64>>, realize: bool) -> CliResult<String> {
    let graph = WeightedGraph::from_spec(&cfg.graph).map_err(CliError::config)?;
    let q = QMatrix::new(&graph);
    let realized = if realize {
        let n = graph.n();
        let p = match p.or_else(|| cfg.p0.clone()) {
            Some(v) => ProbabilityVector::new(v).map_err(CliError::config)?.into_vector(),
            None => ProbabilityVector::uniform(n).into_vector(),
        };
        if p.len() != n {
            return Err(CliError::Config(format!("p has {} entries, graph has {n} vertices", p.len())));
        }
        let name = cfg.potential.strip_prefix("phi-divergence:").unwrap_or("kl");
        let phi = PhiDivergence::new(generator(name).map_err(CliError::config)?, &graph);
        let mean = phi.matched_mean();
        let geom = Geometry::new(graph.clone(), mean.clone());
        let noise = NoiseStream::new(cfg.seed, 0).edge_noise(0, 0, graph.edge_count(), cfg.dt);
        let qw = wasserstein_q(&geom, &p, cfg.beta, &noise).map_err(CliError::run)?;
        let step_residual = step_equivalence_residual(&geom, &phi, cfg.beta, &p, &noise).map_err(CliError::run)?;
        Some(Realized {
            p: p.iter().copied().collect(),
            beta: cfg.beta,
            dt: cfg.dt,
            seed: cfg.seed,
            generator: name.to_string(),
            mean: mean.name(),
            row_sums: row_sums(&qw.qw).iter().copied().collect(),
            qw: rows(&qw.qw),
            antisymmetric_rates: rows(&qw.a),
            noise_rates: qw.noise_rates,
            step_residual,
        })
    } else {
        if let Some(v) = p {
            ProbabilityVector::new(v).map_err(CliError::config)?;
        }
        None
    };
    let report = QReport {
        schema_version: SCHEMA_VERSION,
        command: "qmatrix",
        n: graph.n(),
        q: rows(q.matrix()),
        realized,
    };
    serde_json::to_string_pretty(&report).map_err(|e| CliError::Run(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(beta: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("example6").unwrap();
        cfg.graph.edges[0].w = 1.0;
        cfg.beta = beta;
        cfg
    }

    #[test]
    fn two_point_q() {
        let v: serde_json::Value = serde_json::from_str(&run(&two_point(1.0), None, false).unwrap()).unwrap();
        assert_eq!(v["q"], serde_json::json!([[-2.0, 2.0], [2.0, -2.0]]));
        assert!(v["realized"].is_null());
    }

    #[test]
    fn beta_zero_realization_is_q() {
        let text = run(&two_point(0.0), Some(vec![0.3, 0.7]), true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["realized"]["qw"], v["q"]);
        assert_eq!(v["realized"]["step_residual"], 0.0);
    }

    #[test]
    fn boundary_realization_fails_as_run_error() {
        let err = run(&two_point(1.0), Some(vec![0.0, 1.0]), true).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(run(&two_point(1.0), Some(vec![0.5]), true).unwrap_err().exit_code(), 2);
    }
}
