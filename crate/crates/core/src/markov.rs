//! The reversible Markov chain behind a weighted graph, φ-divergence
//! potentials and the stochastic Wasserstein Q-matrix.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::calculus::{GibbsDensity, SimplexFunctional};
use crate::dynamics::{em_increment, EdgeNoise};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::mean::{ConvexGenerator, MeanFunction};
use crate::metric::Geometry;

/// Writes `−Σ_{j≠i} m_ij` on the diagonal.
fn fill_diagonal(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += m[(i, j)];
            }
        }
        m[(i, i)] = -s;
    }
}

/// Row sums with the off-diagonal entries added first, in index order, then
/// the diagonal: exactly zero for matrices built by [`fill_diagonal`].
pub fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    DVector::from_fn(n, |i, _| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        off + m[(i, i)]
    })
}

/// `Σ_{j≠i} [M_ji p_j − M_ij p_i]`.
fn master_equation(m: &DMatrix<f64>, p: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows();
    DVector::from_fn(n, |i, _| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| m[(j, i)] * p[j] - m[(i, j)] * p[i])
            .sum()
    })
}

/// Generator `Q_ij = ω_ij / π_i` of the reversible chain.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    q: DMatrix<f64>,
}

impl QMatrix {
    pub fn new(graph: &WeightedGraph) -> Self {
        let n = graph.n();
        let pi = graph.volume();
        let mut q = DMatrix::zeros(n, n);
        for e in graph.edges() {
            q[(e.i, e.j)] = e.w / pi.get(e.i);
            q[(e.j, e.i)] = e.w / pi.get(e.j);
        }
        fill_diagonal(&mut q);
        Self { q }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Right-hand side of the forward equation, `Σ_j [Q_ji p_j − Q_ij p_i]`.
    pub fn gradient_flow_rhs(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.q.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.q.nrows(),
                got: p.len(),
            });
        }
        Ok(master_equation(&self.q, p))
    }

    /// Smallest nonzero eigenvalue of `−diag(π)^{1/2} Q diag(π)^{−1/2}`.
    pub fn spectral_gap(&self, pi: &DVector<f64>) -> f64 {
        let n = self.q.nrows();
        let s = DMatrix::from_fn(n, n, |i, j| -self.q[(i, j)] * pi[i].sqrt() / pi[j].sqrt());
        let s = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev[1]
    }
}

/// `D_φ(p‖π) = Σ φ(p_i/π_i) π_i`.
#[derive(Debug, Clone)]
pub struct PhiDivergence {
    generator: Arc<dyn ConvexGenerator>,
    pi: DVector<f64>,
}

impl PhiDivergence {
    pub fn new(generator: Arc<dyn ConvexGenerator>, graph: &WeightedGraph) -> Self {
        Self {
            generator,
            pi: graph.volume().as_vector().clone(),
        }
    }

    pub fn generator(&self) -> &Arc<dyn ConvexGenerator> {
        &self.generator
    }

    /// The φ'-mean whose metric turns this potential's gradient flow into the
    /// linear master equation.
    pub fn matched_mean(&self) -> MeanFunction {
        MeanFunction::phi_prime(self.generator.clone())
    }

    fn ratios(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.pi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pi.len(),
                got: p.len(),
            });
        }
        let r = p.component_div(&self.pi);
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(self.domain_error(p));
        }
        Ok(r)
    }

    fn domain_error(&self, p: &DVector<f64>) -> Error {
        Error::InvalidArgument(format!(
            "φ-divergence `{}` undefined at {:?}",
            self.generator.name(),
            p.as_slice()
        ))
    }

    fn finite<T: AsRef<[f64]>>(&self, v: T, p: &DVector<f64>) -> Result<T> {
        if v.as_ref().iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(self.domain_error(p))
        }
    }
}

impl SimplexFunctional for PhiDivergence {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        let r = self.ratios(p)?;
        let v: f64 = r.iter().zip(self.pi.iter()).map(|(x, w)| self.generator.phi(*x) * w).sum();
        Ok(self.finite([v], p)?[0])
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.ratios(p)?.map(|x| self.generator.d1(x));
        self.finite(g, p)
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.ratios(p)?;
        let diag = DVector::from_fn(r.len(), |i, _| self.generator.d2(r[i]) / self.pi[i]);
        Ok(DMatrix::from_diagonal(&self.finite(diag, p)?))
    }
}

/// A realized Wasserstein Q-matrix together with the antisymmetric rate
/// matrix `A` it was built from.
#[derive(Debug, Clone)]
pub struct WassersteinQMatrix {
    pub qw: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// `(ΔB_ij − ΔB_ji)/dt` per edge.
    pub noise_rates: Vec<f64>,
}

impl WassersteinQMatrix {
    /// `Σ_j [QW_ji p_j − QW_ij p_i]`.
    pub fn rhs(&self, p: &DVector<f64>) -> DVector<f64> {
        master_equation(&self.qw, p)
    }
}

/// `QW_ij = Q_ij + max(0, A_ji)/p_i` with
/// `A_ij = β ω θ (∂_j − ∂_i) log(Π^{1/2}/θ) + √(β ω θ) (Ḃ_ij − Ḃ_ji)` and
/// `Ḃ = ΔB/dt` taken from `noise`.
pub fn wasserstein_q(geom: &Geometry, p: &DVector<f64>, beta: f64, noise: &EdgeNoise) -> Result<WassersteinQMatrix> {
    geom.check_interior(p)?;
    let graph = geom.graph();
    let n = graph.n();
    if noise.forward.len() != graph.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.edge_count(),
            got: noise.forward.len(),
        });
    }
    let mut a = DMatrix::zeros(n, n);
    let noise_rates: Vec<f64> = (0..graph.edge_count()).map(|k| noise.difference(k) / noise.dt).collect();
    if beta > 0.0 {
        let means = geom.edge_means(p)?;
        let glp = geom.grad_log_pseudo_det(p)?;
        for (k, e) in graph.edges().iter().enumerate() {
            let th = means.theta[k];
            let deterministic = beta * e.w * (0.5 * th * (glp[e.j] - glp[e.i]) - means.edge_derivative(k));
            let stochastic = (beta * e.w * th).sqrt() * noise_rates[k];
            let aij = deterministic + stochastic;
            a[(e.i, e.j)] = aij;
            a[(e.j, e.i)] = -aij;
        }
    }
    let mut qw = QMatrix::new(graph).q;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                qw[(i, j)] += a[(j, i)].max(0.0) / p[i];
            }
        }
    }
    fill_diagonal(&mut qw);
    Ok(WassersteinQMatrix { qw, a, noise_rates })
}

/// `max_i |dt · (QW-form)_i − (EM increment)_i|` for the matched system
/// (`V = D_φ`, φ'-mean) driven by the same Brownian increments.
pub fn step_equivalence_residual(
    geom: &Geometry,
    potential: &PhiDivergence,
    beta: f64,
    p: &DVector<f64>,
    noise: &EdgeNoise,
) -> Result<f64> {
    let qw = wasserstein_q(geom, p, beta, noise)?;
    let via_q = qw.rhs(p) * noise.dt;
    let via_em = em_increment(geom, potential, beta, p, noise)?;
    Ok((via_q - via_em).amax())
}

/// `exp(−V/β) Π^{−1/2}`, the Gibbs density up to normalization.
pub fn stationary_density_unnormalized(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    beta: f64,
    p: &DVector<f64>,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    GibbsDensity {
        geometry: geom,
        potential,
        beta,
    }
    .value(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{grad_w, Zero};
    use crate::dynamics::{drift, NoiseStream};
    use crate::mean::generator;
    use crate::sampling::{random_graph, random_interior};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_q() {
        let g = WeightedGraph::two_point(1.0).unwrap();
        let q = QMatrix::new(&g);
        assert_eq!(q.matrix(), &DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 2.0, -2.0]));
        let rhs = q.gradient_flow_rhs(&DVector::from_row_slice(&[0.7, 0.3])).unwrap();
        assert_relative_eq!(rhs[0], -0.8, max_relative = 1e-14);
        assert_eq!(q.gradient_flow_rhs(&DVector::from_row_slice(&[0.5, 0.5])).unwrap().amax(), 0.0);
    }

    #[test]
    fn kl_values() {
        let g = WeightedGraph::two_point(1.0).unwrap();
        let kl = PhiDivergence::new(generator("kl").unwrap(), &g);
        let v = kl.value(&DVector::from_row_slice(&[0.7, 0.3])).unwrap();
        assert_relative_eq!(v, 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln(), max_relative = 1e-14);
        assert_eq!(kl.value(&DVector::from_row_slice(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(kl.value(&DVector::from_row_slice(&[1.0, 0.0])).unwrap(), 2.0f64.ln());
        assert!(kl.gradient(&DVector::from_row_slice(&[1.0, 0.0])).is_err());
        assert!(kl.value(&DVector::from_row_slice(&[1.2, -0.2])).is_err());
        let quad = PhiDivergence::new(generator("quadratic").unwrap(), &g);
        assert_eq!(quad.value(&DVector::from_row_slice(&[0.5, 0.5])).unwrap(), 0.0);
    }

    #[test]
    fn grad_w_of_kl_is_minus_gradient_flow() {
        let g = WeightedGraph::two_point(1.3).unwrap();
        let kl = PhiDivergence::new(generator("kl").unwrap(), &g);
        let geom = Geometry::new(g.clone(), MeanFunction::Logarithmic);
        let p = DVector::from_row_slice(&[0.35, 0.65]);
        let gw = grad_w(&geom, &kl, &p).unwrap();
        let rhs = QMatrix::new(&g).gradient_flow_rhs(&p).unwrap();
        assert!((gw + rhs).amax() < 1e-13);
    }

    #[test]
    fn beta_zero_recovers_q_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(&mut rng, 5);
        let geom = Geometry::new(g.clone(), MeanFunction::Geometric);
        let p = random_interior(&mut rng, 5, 0.05);
        let noise = NoiseStream::new(1, 0).edge_noise(0, 0, g.edge_count(), 0.01);
        let qw = wasserstein_q(&geom, &p, 0.0, &noise).unwrap();
        assert_eq!(&qw.qw, QMatrix::new(&g).matrix());
    }

    #[test]
    fn stationary_density_examples() {
        let w = 0.5;
        let geom = Geometry::new(WeightedGraph::two_point(w).unwrap(), MeanFunction::Geometric);
        let x: f64 = 0.3;
        let p = DVector::from_row_slice(&[x, 1.0 - x]);
        let rho = stationary_density_unnormalized(&geom, &Zero, 1.0, &p).unwrap();
        let theta = 2.0 * (x * (1.0 - x)).sqrt();
        assert_relative_eq!(rho, theta.powf(-0.5) * (2.0 * w).powf(-0.5), max_relative = 1e-13);
        assert!(stationary_density_unnormalized(&geom, &Zero, 0.0, &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn q_matrix_invariants(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, n);
            let q = QMatrix::new(&g);
            let pi = g.volume();
            for i in 0..n {
                prop_assert_eq!(row_sums(q.matrix())[i], 0.0);
                for j in 0..n {
                    if i != j {
                        prop_assert!(q.matrix()[(i, j)] >= 0.0);
                        prop_assert!((q.matrix()[(i, j)] * pi.get(i) - g.weight(i, j)).abs() < 1e-14);
                    }
                }
            }
        }

        #[test]
        fn matched_drift_is_linear_master_equation(seed in any::<u64>(), n in 2usize..7, quadratic in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, n);
            let phi = PhiDivergence::new(generator(if quadratic { "quadratic" } else { "kl" }).unwrap(), &g);
            let geom = Geometry::new(g.clone(), phi.matched_mean());
            let p = random_interior(&mut rng, n, 0.01);
            let d = drift(&geom, &phi, 0.0, &p).unwrap();
            let rhs = QMatrix::new(&g).gradient_flow_rhs(&p).unwrap();
            prop_assert!((d - rhs).amax() < 1e-10);
        }

        #[test]
        fn wasserstein_q_invariants(seed in any::<u64>(), n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, n);
            let phi = PhiDivergence::new(generator("kl").unwrap(), &g);
            let geom = Geometry::new(g.clone(), phi.matched_mean());
            let p = random_interior(&mut rng, n, 0.02);
            let beta = rng.gen_range(0.1..2.0);
            let dt = 1e-3;
            let noise = NoiseStream::new(seed, 0).edge_noise(0, 0, g.edge_count(), dt);
            let qw = wasserstein_q(&geom, &p, beta, &noise).unwrap();
            for i in 0..n {
                prop_assert_eq!(row_sums(&qw.qw)[i], 0.0);
                for j in 0..n {
                    if i != j {
                        prop_assert!(qw.qw[(i, j)] >= 0.0);
                        let a = qw.a[(i, j)];
                        prop_assert_eq!(a, a.max(0.0) - qw.a[(j, i)].max(0.0));
                    }
                }
            }
            let r = step_equivalence_residual(&geom, &phi, beta, &p, &noise).unwrap();
            prop_assert!(r <= 1e-12, "residual {}", r);
        }
    }
}
