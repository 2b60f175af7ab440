//! Random instances (graphs, interior points, tangent vectors, quadratic
//! functionals) for randomized invariant checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::graph::WeightedGraph;
use crate::mean::MeanFunction;

/// A connected graph on `n` vertices: a random spanning path plus each
/// remaining pair with probability one half. Weights are uniform on `[0.2, 3]`.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize) -> WeightedGraph {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        perm.swap(k, rng.gen_range(0..=k));
    }
    let mut edges = Vec::new();
    let mut on_path = vec![vec![false; n]; n];
    for w in perm.windows(2) {
        edges.push((w[0], w[1], rng.gen_range(0.2..3.0)));
        on_path[w[0]][w[1]] = true;
        on_path[w[1]][w[0]] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !on_path[i][j] && rng.gen_bool(0.5) {
                edges.push((i, j, rng.gen_range(0.2..3.0)));
            }
        }
    }
    WeightedGraph::new(n, &edges).expect("random graph is valid by construction")
}

/// A point of the open simplex drawn from a flat Dirichlet, with every
/// coordinate at least `floor` (requires `n · floor < 1`).
pub fn random_interior<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> DVector<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let scale = 1.0 - n as f64 * floor;
    let mut p = DVector::from_iterator(n, raw.iter().map(|x| floor + scale * x / total));
    // Fold rounding into the largest entry so that Σp = 1 to the last bit we can get.
    let err = p.sum() - 1.0;
    let k = p.imax();
    p[k] -= err;
    p
}

/// A random tangent vector with standard normal entries before centering.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut s = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mean = s.mean();
    s.add_scalar_mut(-mean);
    s
}

/// A symmetric matrix with standard normal entries.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

/// The means that vanish on the boundary and have one-dimensional kernels
/// on the interior.
pub fn interior_means() -> Vec<MeanFunction> {
    vec![
        MeanFunction::Geometric,
        MeanFunction::Logarithmic,
        MeanFunction::Harmonic,
        MeanFunction::from_name("phi:kl").expect("built-in generator"),
    ]
}
