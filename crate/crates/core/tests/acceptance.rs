//! Acceptance suite. Prints one line per criterion and exits non-zero if any fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use simplex_langevin_core::calculus::{
    div_w, kolmogorov_forward, kolmogorov_forward_matrix, laplace_beltrami, grad_w, FiniteDifferenceVector,
    GradW, Quadratic, Zero,
};
use simplex_langevin_core::dynamics::{em_increment, noise_increment, run, simulate};
use simplex_langevin_core::io::write_trajectory_csv;
use simplex_langevin_core::markov::{row_sums, step_equivalence_residual, wasserstein_q};
use simplex_langevin_core::sampling::{interior_means, random_graph, random_interior, random_symmetric, random_tangent};
use simplex_langevin_core::twopoint::{discard_burn_in, histogram_distance};
use simplex_langevin_core::{
    generator, Geometry, MeanFunction, NoiseStream, PhiDivergence, QMatrix, SdeConfig, SimplexFunctional,
    TangentVector, TwoPointModel, WeightedGraph,
};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_mass_conservation() -> Outcome {
    let start = Instant::now();
    let runs = 20;
    let steps = 1_000_000 / runs;
    let devs: Vec<f64> = (0..runs as u64)
        .into_par_iter()
        .map(|k| -> Result<f64, String> {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k);
            let n = rng.gen_range(2..=6);
            let g = random_graph(&mut rng, n);
            let means = interior_means();
            let mean = means[rng.gen_range(0..means.len())].clone();
            let kl = PhiDivergence::new(generator("kl").map_err(err)?, &g);
            let geom = Geometry::new(g, mean);
            let p0 = random_interior(&mut rng, n, 0.05);
            let cfg = SdeConfig::new(rng.gen_range(0.2..1.5), 1e-3, steps, k);
            let potential: &dyn SimplexFunctional = if k % 2 == 0 { &kl } else { &Zero };
            let summary = run(&geom, potential, &cfg, &p0, 0, |_, _, _, _| {}).map_err(err)?;
            Ok(summary.max_mass_deviation)
        })
        .collect::<Result<_, _>>()?;
    let worst = devs.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-10 && secs < 30.0,
        format!("{} steps, max |sum p - 1| = {worst:.2e}, {secs:.1} s", runs * steps),
    )
}

fn c2_beta_zero_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_drift = 0.0f64;
    let mut worst_limit = 0.0f64;
    for graph_index in 0..20 {
        let n = rng.gen_range(2..=6);
        let g = random_graph(&mut rng, n);
        let name = if graph_index % 2 == 0 { "kl" } else { "quadratic" };
        let phi = PhiDivergence::new(generator(name).map_err(err)?, &g);
        let geom = Geometry::new(g.clone(), phi.matched_mean());
        let q = QMatrix::new(&g);
        for _ in 0..10 {
            let p = random_interior(&mut rng, n, 0.01);
            let d = simplex_langevin_core::dynamics::drift(&geom, &phi, 0.0, &p).map_err(err)?;
            let rhs = q.gradient_flow_rhs(&p).map_err(err)?;
            worst_drift = worst_drift.max((d - rhs).amax());
        }

        let pi = g.volume().as_vector().clone();
        let gap = q.spectral_gap(&pi);
        let sym = DMatrix::from_fn(n, n, |i, j| -q.matrix()[(i, j)] * pi[i].sqrt() / pi[j].sqrt());
        let lambda_max = sym.symmetric_eigen().eigenvalues.amax();
        let horizon = 20.0 / gap;
        let dt = 0.2 / lambda_max;
        let steps = (horizon / dt).ceil() as usize;
        let cfg = SdeConfig::new(0.0, dt, steps, 0);
        let p0 = random_interior(&mut rng, n, 0.05);
        let summary = run(&geom, &phi, &cfg, &p0, 0, |_, _, _, _| {}).map_err(err)?;
        let limit = (DVector::from_vec(summary.final_state) - &pi).norm();
        worst_limit = worst_limit.max(limit);
    }
    verdict(
        worst_drift <= 1e-10 && worst_limit <= 1e-6,
        format!("max drift error {worst_drift:.2e} at 200 points, max |p(T) - pi| = {worst_limit:.2e}"),
    )
}

fn c3_pseudo_det_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let means = interior_means();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let geom = Geometry::new(random_graph(&mut rng, n), means[rng.gen_range(0..means.len())].clone());
        let p = random_interior(&mut rng, n, 0.02);
        let analytic = geom.grad_log_pseudo_det(&p).map_err(err)?;
        // Central differences along the tangent basis e_k − 𝟙/n, compared on the tangent space.
        let mut fd = DVector::zeros(n);
        for k in 0..n {
            let mut dir = DVector::from_element(n, -1.0 / n as f64);
            dir[k] += 1.0;
            let plus = geom.log_pseudo_det(&(&p + &dir * eps)).map_err(err)?;
            let minus = geom.log_pseudo_det(&(&p - &dir * eps)).map_err(err)?;
            fd[k] = (plus - minus) / (2.0 * eps);
        }
        let centered = analytic.add_scalar(-analytic.mean());
        let rel = (&centered - &fd).norm() / fd.norm().max(1e-300);
        worst = worst.max(rel);
    }
    verdict(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 triples"))
}

fn c4_spectral_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let means = interior_means();
    let (mut llpl, mut forms, mut kernel_ok, mut pi_err) = (0.0f64, 0.0f64, true, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let geom = Geometry::new(random_graph(&mut rng, n), means[rng.gen_range(0..means.len())].clone());
        let p = random_interior(&mut rng, n, 0.02);
        let lap = geom.laplacian(&p).map_err(err)?;
        let l = lap.matrix();
        let spec = geom.spectral(&p).map_err(err)?;
        llpl = llpl.max((l * &spec.pseudo_inverse * l - l).amax() / l.amax());
        let threshold = geom.zero_tolerance() * spec.eigenvalues[n - 1];
        let zeros = spec.eigenvalues.iter().filter(|x| x.abs() < threshold).count();
        kernel_ok &= zeros == 1;
        let s1 = TangentVector::new(random_tangent(&mut rng, n)).map_err(err)?;
        let s2 = TangentVector::new(random_tangent(&mut rng, n)).map_err(err)?;
        let f = geom.metric_inner_forms(&p, &s1, &s2).map_err(err)?;
        let scale = 1.0 + f[0].abs();
        forms = forms.max(((f[0] - f[1]).abs().max((f[0] - f[2]).abs())) / scale);
    }
    for _ in 0..100 {
        let w = rng.gen_range(0.1..5.0);
        let mean = means[rng.gen_range(0..means.len())].clone();
        let geom = Geometry::new(WeightedGraph::two_point(w).map_err(err)?, mean);
        let x = rng.gen_range(0.01..0.99);
        let p = DVector::from_row_slice(&[x, 1.0 - x]);
        let theta = geom.edge_theta(&p)[0];
        let pd = geom.spectral(&p).map_err(err)?.pseudo_det;
        pi_err = pi_err.max((pd - 2.0 * w * theta).abs() / (2.0 * w * theta));
    }
    verdict(
        llpl <= 1e-10 && forms <= 1e-10 && kernel_ok && pi_err <= 4.0 * f64::EPSILON,
        format!(
            "|LL+L - L| = {llpl:.2e}, metric forms {forms:.2e}, one zero eigenvalue: {kernel_ok}, \
             two-point |Pi - 2 w theta|/Pi = {pi_err:.2e}"
        ),
    )
}

fn c5_operator_composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let means = interior_means();
    let (mut analytic, mut numeric, mut forward) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(2..=6);
        let geom = Geometry::new(random_graph(&mut rng, n), means[rng.gen_range(0..means.len())].clone());
        let p = random_interior(&mut rng, n, 0.03);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let f = Quadratic::new(random_symmetric(&mut rng, n), b, 0.3).map_err(err)?;
        let lb = laplace_beltrami(&geom, &f, &p).map_err(err)?;
        let scale = 1.0 + lb.abs();
        let exact = div_w(&geom, &GradW { geometry: &geom, functional: &f }, &p).map_err(err)?;
        analytic = analytic.max((lb - exact).abs() / scale);
        let fd = FiniteDifferenceVector::new(|q: &DVector<f64>| grad_w(&geom, &f, q));
        let approx = div_w(&geom, &fd, &p).map_err(err)?;
        numeric = numeric.max((lb - approx).abs() / scale);
        let edge = kolmogorov_forward(&geom, &f, &p).map_err(err)?;
        let matrix = kolmogorov_forward_matrix(&geom, &f, &p).map_err(err)?;
        forward = forward.max((edge - matrix).abs() / (1.0 + edge.abs()));
    }
    verdict(
        analytic <= 1e-8 && numeric <= 1e-5 && forward <= 1e-6,
        format!("analytic {analytic:.2e}, finite-difference {numeric:.2e}, forward forms {forward:.2e}"),
    )
}

fn example(mean: MeanFunction, kl: bool) -> Result<(TwoPointModel, Geometry, Arc<dyn SimplexFunctional>), String> {
    let g = WeightedGraph::two_point(0.01).map_err(err)?;
    let v: Arc<dyn SimplexFunctional> = if kl {
        Arc::new(PhiDivergence::new(generator("kl").map_err(err)?, &g))
    } else {
        Arc::new(Zero)
    };
    let model = TwoPointModel::reduce(&g, mean.clone(), v.clone(), 1.0).map_err(err)?;
    Ok((model, Geometry::new(g, mean), v))
}

fn examples() -> Vec<(&'static str, MeanFunction, bool)> {
    vec![
        ("example 5", MeanFunction::Geometric, false),
        ("example 6", MeanFunction::Logarithmic, true),
    ]
}

fn c6_stationarity() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, mean, kl) in examples() {
        let (model, _, _) = example(mean, kl)?;
        let rho = model.stationary_density(200).map_err(err)?;
        let mut worst = 0.0f64;
        for k in 0..=900 {
            let x = 0.05 + 0.001 * k as f64;
            worst = worst.max(rho.fokker_planck_residual(x, 1e-3).map_err(err)?.abs());
        }
        ok &= worst <= 1e-4;
        parts.push(format!("{name} residual {worst:.2e}"));
    }
    verdict(ok, parts.join(", "))
}

fn c7_distribution() -> Outcome {
    let retained = 1_000_000usize;
    let total = retained * 10 / 9 + 1;
    let results: Vec<Result<(String, bool), String>> = examples()
        .into_par_iter()
        .map(|(name, mean, kl)| {
            let start = Instant::now();
            let (model, geom, v) = example(mean, kl)?;
            let masses = model.stationary_density(200).map_err(err)?.bin_masses(50);
            let cfg = SdeConfig::new(1.0, 1e-3, total, 7);
            let p0 = DVector::from_row_slice(&[0.5, 0.5]);
            let traj = simulate(&geom, v.as_ref(), &cfg, &p0, 0).map_err(err)?;
            let xs = traj.coordinate(0);
            let kept = discard_burn_in(&xs, 0.1);
            let d = histogram_distance(kept, &masses).map_err(err)?;
            let secs = start.elapsed().as_secs_f64();
            Ok((
                format!("{name} L1 = {d:.3} over {} samples, {secs:.1} s", kept.len()),
                d <= 0.05 && secs < 60.0,
            ))
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for r in results {
        let (text, pass) = r?;
        ok &= pass;
        parts.push(text);
    }
    verdict(ok, parts.join(", "))
}

fn c8_wasserstein_q() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut rows_exact, mut nonneg, mut recovery) = (true, true, true);
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..20u64 {
        let n = rng.gen_range(2..=6);
        let g = random_graph(&mut rng, n);
        let phi = PhiDivergence::new(generator("kl").map_err(err)?, &g);
        let geom = Geometry::new(g.clone(), phi.matched_mean());
        let beta = rng.gen_range(0.1..2.0);
        let dt = 1e-3;
        let stream = NoiseStream::new(800 + k, 0);
        let mut p = random_interior(&mut rng, n, 0.05);

        let zero = stream.edge_noise(0, 0, g.edge_count(), dt);
        recovery &= wasserstein_q(&geom, &p, 0.0, &zero).map_err(err)?.qw == *QMatrix::new(&g).matrix();

        for step in 1..=500u64 {
            let noise = stream.edge_noise(step, 0, g.edge_count(), dt);
            let qw = wasserstein_q(&geom, &p, beta, &noise).map_err(err)?;
            rows_exact &= row_sums(&qw.qw).iter().all(|s| *s == 0.0);
            for i in 0..n {
                for j in 0..n {
                    nonneg &= i == j || qw.qw[(i, j)] >= 0.0;
                }
            }
            worst = worst.max(step_equivalence_residual(&geom, &phi, beta, &p, &noise).map_err(err)?);
            count += 1;
            let next = &p + em_increment(&geom, &phi, beta, &p, &noise).map_err(err)?;
            if next.iter().all(|x| *x > 0.01) {
                p = next;
            }
        }
    }
    verdict(
        rows_exact && nonneg && recovery && worst <= 1e-12,
        format!(
            "row sums exact: {rows_exact}, off-diagonals nonnegative: {nonneg}, beta = 0 recovery: {recovery}, \
             max residual {worst:.2e} over {count} steps"
        ),
    )
}

fn c9_noise_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let geom = Geometry::new(WeightedGraph::complete(3).map_err(err)?, MeanFunction::Logarithmic);
    let (beta, dt, draws) = (0.7, 1e-3, 10_000u64);
    let mut worst = 0.0f64;
    for point in 0..3u64 {
        let p = random_interior(&mut rng, 3, 0.1);
        let stream = NoiseStream::new(900 + point, 0);
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        for s in 0..draws {
            let noise = stream.edge_noise(s, 0, geom.graph().edge_count(), dt);
            let eta = noise_increment(&geom, beta, &p, &noise).map_err(err)?;
            cov += &eta * eta.transpose();
        }
        cov /= draws as f64;
        let target = geom.laplacian(&p).map_err(err)?.matrix() * (2.0 * beta * dt);
        for i in 0..3 {
            for j in 0..3 {
                let scale = if target[(i, j)] != 0.0 {
                    target[(i, j)].abs()
                } else {
                    (target[(i, i)] * target[(j, j)]).sqrt()
                };
                worst = worst.max((cov[(i, j)] - target[(i, j)]).abs() / scale);
            }
        }
    }
    verdict(worst <= 0.05, format!("max entrywise relative error {worst:.4} at 3 points, {draws} draws"))
}

fn c10_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = random_graph(&mut rng, 4);
    let phi = PhiDivergence::new(generator("kl").map_err(err)?, &g);
    let geom = Geometry::new(g, MeanFunction::Logarithmic);
    let p0 = random_interior(&mut rng, 4, 0.05);
    let mut cfg = SdeConfig::new(0.8, 1e-3, 5_000, 1234);
    cfg.record_every = 10;
    let dir = std::env::temp_dir().join(format!("simplex-langevin-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut files = Vec::new();
    for k in 0..2 {
        let traj = simulate(&geom, &phi, &cfg, &p0, 0).map_err(err)?;
        let path = dir.join(format!("run{k}.csv"));
        write_trajectory_csv(std::fs::File::create(&path).map_err(err)?, &traj).map_err(err)?;
        files.push(std::fs::read(&path).map_err(err)?);
    }
    std::fs::remove_dir_all(&dir).map_err(err)?;
    verdict(
        files[0] == files[1] && !files[0].is_empty(),
        format!("two runs wrote {} and {} bytes, identical: {}", files[0].len(), files[1].len(), files[0] == files[1]),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("mass conservation", c1_mass_conservation),
        ("beta = 0 reduction", c2_beta_zero_reduction),
        ("pseudo-determinant gradient", c3_pseudo_det_gradient),
        ("spectral and metric identities", c4_spectral_identities),
        ("operator composition", c5_operator_composition),
        ("stationarity", c6_stationarity),
        ("distributional reproduction", c7_distribution),
        ("Wasserstein Q-matrix", c8_wasserstein_q),
        ("noise statistics", c9_noise_statistics),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
