use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use simplex_langevin_core::calculus::{
    div_w, kolmogorov_forward, kolmogorov_forward_matrix, laplace_beltrami, GradW, Quadratic,
};
use simplex_langevin_core::dynamics::{run as run_sde, simulate};
use simplex_langevin_core::markov::{row_sums, step_equivalence_residual, wasserstein_q};
use simplex_langevin_core::sampling::{random_graph, random_interior, random_symmetric, random_tangent};
use simplex_langevin_core::twopoint::reduction_consistency;
use simplex_langevin_core::{
    generator, Geometry, NoiseStream, PhiDivergence, QMatrix, Result, SimplexFunctional, TangentVector,
    TwoPointModel, WeightedGraph,
};

use crate::config::{ExperimentConfig, Instance, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::output::{resolve, write_json};

const RANDOM_INSTANCES: usize = 5;
const POINTS_PER_INSTANCE: usize = 4;

#[derive(Debug, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub passed: bool,
    pub seed: u64,
    pub zero_tolerance: f64,
    pub invariants: Vec<InvariantResult>,
}

/// Invariant results in the order they were checked.
struct Suite {
    results: Vec<InvariantResult>,
}

impl Suite {
    /// Records `name` as passing iff `measure` succeeds with a value `≤ tolerance`.
    fn check<F>(&mut self, name: &str, tolerance: f64, measure: F)
    where
        F: FnOnce() -> Result<f64>,
    {
        let result = match measure() {
            Ok(m) => InvariantResult {
                name: name.into(),
                passed: m <= tolerance,
                measured: Some(m),
                tolerance,
                detail: String::new(),
            },
            Err(e) => InvariantResult {
                name: name.into(),
                passed: false,
                measured: None,
                tolerance,
                detail: e.to_string(),
            },
        };
        self.results.push(result);
    }
}

/// The configured geometry followed by random graphs with the same mean and tolerance.
fn geometries(inst: &Instance, rng: &mut ChaCha8Rng) -> Vec<Geometry> {
    let mut out = vec![inst.geometry.clone()];
    for _ in 0..RANDOM_INSTANCES {
        let n = rng.gen_range(2..=6);
        out.push(
            Geometry::new(random_graph(rng, n), inst.geometry.mean().clone())
                .with_zero_tolerance(inst.geometry.zero_tolerance()),
        );
    }
    out
}

/// The configured initial state (for the configured instance) plus random interior points.
fn points(geom: &Geometry, first: Option<&DVector<f64>>, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut out: Vec<_> = first.cloned().into_iter().collect();
    while out.len() < POINTS_PER_INSTANCE {
        out.push(random_interior(rng, geom.n(), 0.02));
    }
    out
}

/// Max over instances and points of `f`, propagating the first error.
fn worst<F>(cases: &[(Geometry, Vec<DVector<f64>>)], mut f: F) -> Result<f64>
where
    F: FnMut(&Geometry, &DVector<f64>) -> Result<f64>,
{
    let mut m = 0.0f64;
    for (geom, ps) in cases {
        for p in ps {
            m = m.max(f(geom, p)?);
        }
    }
    Ok(m)
}

pub fn report(cfg: &ExperimentConfig) -> CliResult<ValidationReport> {
    let inst = cfg.instance()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geoms = geometries(&inst, &mut rng);
    let cases: Vec<(Geometry, Vec<DVector<f64>>)> = geoms
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            let ps = points(&g, (k == 0).then_some(&inst.p0), &mut rng);
            (g, ps)
        })
        .collect();
    let functionals: Vec<Quadratic> = cases
        .iter()
        .map(|(g, _)| {
            let n = g.n();
            let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            Quadratic::new(random_symmetric(&mut rng, n), b, 0.0).expect("dimensions match")
        })
        .collect();
    let mut suite = Suite { results: Vec::new() };

    suite.check("graph.volume_sums_to_one", 1e-14, || {
        Ok(cases.iter().map(|(g, _)| (g.graph().volume().as_vector().sum() - 1.0).abs()).fold(0.0, f64::max))
    });
    suite.check("graph.detailed_balance", 1e-14, || {
        let mut m = 0.0f64;
        for (g, _) in &cases {
            let q = QMatrix::new(g.graph());
            let pi = g.graph().volume();
            for i in 0..g.n() {
                for j in 0..g.n() {
                    m = m.max((q.matrix()[(i, j)] * pi.get(i) - q.matrix()[(j, i)] * pi.get(j)).abs());
                }
            }
        }
        Ok(m)
    });
    suite.check("graph.laplacian_annihilates_constants", 1e-12, || {
        let mut m = 0.0f64;
        for (g, _) in &cases {
            m = m.max(g.graph().laplacian_apply(&DVector::from_element(g.n(), 1.0))?.amax());
        }
        Ok(m)
    });
    suite.check("mean.symmetry", 0.0, || {
        let mean = inst.geometry.mean();
        let mut m = 0.0f64;
        for _ in 0..100 {
            let (x, y) = (rng.gen_range(1e-3..3.0), rng.gen_range(1e-3..3.0));
            m = m.max((mean.value(x, y) - mean.value(y, x)).abs());
        }
        Ok(m)
    });
    suite.check("mean.partials_match_finite_differences", 1e-6, || {
        let mean = inst.geometry.mean();
        let mut m = 0.0f64;
        for _ in 0..50 {
            let (x, y) = (rng.gen_range(0.05..2.0), rng.gen_range(0.05..2.0));
            let (dx, dy) = mean.partials(x, y)?;
            let h = 1e-6;
            let fx = (mean.value(x + h, y) - mean.value(x - h, y)) / (2.0 * h);
            let fy = (mean.value(x, y + h) - mean.value(x, y - h)) / (2.0 * h);
            m = m.max((dx - fx).abs().max((dy - fy).abs()) / (1.0 + dx.abs().max(dy.abs())));
        }
        Ok(m)
    });
    {
        let mut bad = 0usize;
        let mut detail = String::new();
        for (g, ps) in &cases {
            for p in ps {
                if let Err(e) = g.spectral(p) {
                    bad += 1;
                    if detail.is_empty() {
                        detail = e.to_string();
                    }
                }
            }
        }
        suite.results.push(InvariantResult {
            name: "metric.points_with_degenerate_spectrum".into(),
            passed: bad == 0,
            measured: Some(bad as f64),
            tolerance: 0.0,
            detail,
        });
    }
    suite.check("metric.pseudo_inverse_identity", 1e-10, || {
        worst(&cases, |g, p| {
            let l = g.laplacian(p)?.into_matrix();
            let s = g.spectral(p)?;
            Ok((&l * &s.pseudo_inverse * &l - &l).amax() / l.amax())
        })
    });
    suite.check("metric.inner_product_forms_agree", 1e-10, || {
        let mut tangents = Vec::new();
        for (g, ps) in &cases {
            for _ in ps {
                tangents.push((random_tangent(&mut rng, g.n()), random_tangent(&mut rng, g.n())));
            }
        }
        let mut it = tangents.into_iter();
        worst(&cases, |g, p| {
            let (a, b) = it.next().expect("one pair per point");
            let f = g.metric_inner_forms(p, &TangentVector::new(a)?, &TangentVector::new(b)?)?;
            Ok((f[0] - f[1]).abs().max((f[0] - f[2]).abs()) / (1.0 + f[0].abs()))
        })
    });
    suite.check("metric.log_pseudo_det_gradient", 1e-6, || {
        worst(&cases, |g, p| {
            let n = g.n();
            let analytic = g.grad_log_pseudo_det(p)?;
            let centered = analytic.add_scalar(-analytic.mean());
            let eps = 1e-5;
            let mut fd = DVector::zeros(n);
            for k in 0..n {
                let mut dir = DVector::from_element(n, -1.0 / n as f64);
                dir[k] += 1.0;
                fd[k] = (g.log_pseudo_det(&(p + &dir * eps))? - g.log_pseudo_det(&(p - &dir * eps))?) / (2.0 * eps);
            }
            Ok((centered - &fd).norm() / (1.0 + fd.norm()))
        })
    });
    suite.check("calculus.laplace_beltrami_is_div_grad", 1e-8, || {
        let mut m = 0.0f64;
        for ((g, ps), f) in cases.iter().zip(&functionals) {
            for p in ps {
                let lb = laplace_beltrami(g, f, p)?;
                let composed = div_w(g, &GradW { geometry: g, functional: f }, p)?;
                m = m.max((lb - composed).abs() / (1.0 + lb.abs()));
            }
        }
        Ok(m)
    });
    suite.check("calculus.forward_operator_forms_agree", 1e-6, || {
        let mut m = 0.0f64;
        for ((g, ps), f) in cases.iter().zip(&functionals) {
            for p in ps {
                let edge = kolmogorov_forward(g, f, p)?;
                let matrix = kolmogorov_forward_matrix(g, f, p)?;
                m = m.max((edge - matrix).abs() / (1.0 + edge.abs()));
            }
        }
        Ok(m)
    });
    let mut short = inst.sde.clone();
    short.steps = short.steps.min(2000);
    suite.check("dynamics.mass_conservation", 1e-10, || {
        let s = run_sde(&inst.geometry, inst.potential.as_ref(), &short, &inst.p0, 0, |_, _, _, _| {})?;
        Ok(s.max_mass_deviation)
    });
    suite.check("dynamics.reproducible", 0.0, || {
        let mut cfg = short.clone();
        cfg.steps = cfg.steps.min(200);
        let a = simulate(&inst.geometry, inst.potential.as_ref(), &cfg, &inst.p0, 0)?;
        let b = simulate(&inst.geometry, inst.potential.as_ref(), &cfg, &inst.p0, 0)?;
        Ok(if a == b { 0.0 } else { 1.0 })
    });

    let matched: Vec<(Geometry, PhiDivergence, &Vec<DVector<f64>>)> = cases
        .iter()
        .map(|(g, ps)| {
            let phi = PhiDivergence::new(generator("kl").expect("built-in generator"), g.graph());
            let geom = Geometry::new(g.graph().clone(), phi.matched_mean()).with_zero_tolerance(g.zero_tolerance());
            (geom, phi, ps)
        })
        .collect();
    suite.check("markov.q_row_sums_and_signs", 0.0, || {
        let mut m = 0.0f64;
        for (g, _) in &cases {
            let q = QMatrix::new(g.graph());
            m = m.max(row_sums(q.matrix()).amax());
            for i in 0..g.n() {
                for j in 0..g.n() {
                    if i != j {
                        m = m.max(-q.matrix()[(i, j)]);
                    }
                }
            }
        }
        Ok(m)
    });
    suite.check("markov.beta_zero_drift_is_master_equation", 1e-10, || {
        let mut m = 0.0f64;
        for (geom, phi, ps) in &matched {
            let q = QMatrix::new(geom.graph());
            for p in ps.iter() {
                let d = simplex_langevin_core::dynamics::drift(geom, phi, 0.0, p)?;
                m = m.max((d - q.gradient_flow_rhs(p)?).amax());
            }
        }
        Ok(m)
    });
    suite.check("markov.wasserstein_q_rows_and_signs", 0.0, || {
        let mut m = 0.0f64;
        for (k, (geom, _, ps)) in matched.iter().enumerate() {
            let stream = NoiseStream::new(cfg.seed, k as u64);
            for (s, p) in ps.iter().enumerate() {
                let noise = stream.edge_noise(s as u64, 0, geom.graph().edge_count(), cfg.dt);
                let qw = wasserstein_q(geom, p, cfg.beta, &noise)?;
                m = m.max(row_sums(&qw.qw).amax());
                for i in 0..geom.n() {
                    for j in 0..geom.n() {
                        if i != j {
                            m = m.max(-qw.qw[(i, j)]);
                        }
                    }
                }
            }
        }
        Ok(m)
    });
    suite.check("markov.step_equivalence_residual", 1e-12, || {
        let mut m = 0.0f64;
        for (k, (geom, phi, ps)) in matched.iter().enumerate() {
            let stream = NoiseStream::new(cfg.seed, k as u64);
            for (s, p) in ps.iter().enumerate() {
                let noise = stream.edge_noise(s as u64, 0, geom.graph().edge_count(), cfg.dt);
                m = m.max(step_equivalence_residual(geom, phi, cfg.beta, p, &noise)?);
            }
        }
        Ok(m)
    });

    // The configured instance when it has two vertices, otherwise a two-point
    // graph with the configured mean and a KL potential.
    let (two_graph, two_potential): (WeightedGraph, Arc<dyn SimplexFunctional>) = if inst.geometry.n() == 2 {
        (inst.geometry.graph().clone(), inst.potential.clone())
    } else {
        let g = WeightedGraph::two_point(rng.gen_range(0.01..2.0)).map_err(CliError::config)?;
        let kl: Arc<dyn SimplexFunctional> = Arc::new(PhiDivergence::new(generator("kl").expect("built-in"), &g));
        (g, kl)
    };
    let beta = if cfg.beta > 0.0 { cfg.beta } else { 1.0 };
    let model = TwoPointModel::reduce(&two_graph, inst.geometry.mean().clone(), two_potential, beta)
        .map_err(CliError::config)?;
    let two_geom = Geometry::new(two_graph, inst.geometry.mean().clone());
    suite.check("twopoint.reduction_consistency", 1e-10, || {
        let mut m = 0.0f64;
        for k in 1..20 {
            let r = reduction_consistency(&model, &two_geom, k as f64 / 20.0)?;
            m = m.max(r.max_abs_error() / (1.0 + r.drift_1d.abs()));
        }
        Ok(m)
    });
    suite.check("twopoint.stationary_fokker_planck_residual", 1e-4, || {
        let rho = model.stationary_density(cfg.twopoint.quadrature_nodes)?;
        let mut m = 0.0f64;
        for k in 0..=90 {
            m = m.max(rho.fokker_planck_residual(0.05 + 0.01 * k as f64, 1e-3)?.abs());
        }
        Ok(m)
    });

    Ok(ValidationReport {
        schema_version: SCHEMA_VERSION,
        command: "validate",
        passed: suite.results.iter().all(|r| r.passed),
        seed: cfg.seed,
        zero_tolerance: inst.geometry.zero_tolerance(),
        invariants: suite.results,
    })
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let report = report(cfg)?;
    write_json(&resolve(out, &cfg.outputs.report), &report)?;
    let failed: Vec<&str> = report
        .invariants
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    eprintln!(
        "validate: {} of {} invariants passed",
        report.invariants.len() - failed.len(),
        report.invariants.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(format!("failed invariants: {}", failed.join(", "))))
    }
}
