//! Riemannian operators on the probability simplex: `grad_W`, `div_W`, the
//! Laplace–Beltrami operator and the Kolmogorov forward/backward operators.
//!
//! Edge sums below run over undirected edges. Each undirected edge stands
//! for the two ordered pairs `(i, j)` and `(j, i)`, which contribute equally
//! to every term, so the ordered-pair weights `½` and `¼` become `1` and `½`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{EdgeMeans, Geometry};

/// Base step for tangent-constrained finite differences of `∇ log Π`.
pub const FD_STEP: f64 = 1e-5;

/// A scalar functional on (a neighbourhood of) the simplex with its
/// unconstrained coordinate gradient and Hessian.
pub trait SimplexFunctional: Send + Sync {
    fn value(&self, p: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>>;
    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// A vector-valued functional with its Jacobian `J_ab = ∂_b H_a`.
pub trait SimplexVectorFunctional: Send + Sync {
    fn value(&self, p: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `P M P` with `P = I − 𝟙𝟙ᵀ/n`, symmetrized.
pub fn project_tangent(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    let row_means = out.column_mean();
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] -= row_means[i];
        }
    }
    let col_means = out.row_mean();
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] -= col_means[j];
        }
    }
    (&out + out.transpose()) * 0.5
}

/// Tangent-projected Hessian from central differences of a gradient along
/// `e_k − 𝟙/n`, which keep `Σp` fixed.
pub fn tangent_hessian<G>(grad: G, p: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = p.len();
    let h = step.min(0.5 * p.min());
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut t = DVector::from_element(n, -1.0 / n as f64);
        t[k] += 1.0;
        let plus = grad(&(p + &t * h))?;
        let minus = grad(&(p - &t * h))?;
        m.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Ok(project_tangent(&m))
}

/// `F(p) = ½ pᵀAp + bᵀp + c`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                got: a.nrows(),
            });
        }
        let a = (&a + a.transpose()) * 0.5;
        Ok(Self { a, b, c })
    }

    pub fn linear(b: DVector<f64>) -> Self {
        let n = b.len();
        Self {
            a: DMatrix::zeros(n, n),
            b,
            c: 0.0,
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            c,
        }
    }
}

impl SimplexFunctional for Quadratic {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * p.dot(&(&self.a * p)) + self.b.dot(p) + self.c)
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.a * p + &self.b)
    }

    fn hessian(&self, _p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
}

/// The zero potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl SimplexFunctional for Zero {
    fn value(&self, _p: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(p.len()))
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(p.len(), p.len()))
    }
}

/// Wraps a value-only closure, supplying derivatives by central differences
/// in coordinate directions. The closure must be defined in a neighbourhood
/// of the simplex.
pub struct FiniteDifference<F> {
    f: F,
}

impl<F> FiniteDifference<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> SimplexFunctional for FiniteDifference<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        Ok((self.f)(p))
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let h = 1e-6;
        let mut q = p.clone();
        Ok(DVector::from_fn(p.len(), |k, _| {
            q[k] = p[k] + h;
            let plus = (self.f)(&q);
            q[k] = p[k] - h;
            let minus = (self.f)(&q);
            q[k] = p[k];
            (plus - minus) / (2.0 * h)
        }))
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = 1e-4;
        let n = p.len();
        let mut q = p.clone();
        let mut eval = |a: usize, da: f64, b: usize, db: f64| {
            q[a] += da;
            q[b] += db;
            let v = (self.f)(&q);
            q[a] = p[a];
            q[b] = p[b];
            v
        };
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = (eval(a, h, b, h) - eval(a, h, b, -h) - eval(a, -h, b, h) + eval(a, -h, b, -h))
                    / (4.0 * h * h);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        Ok(project_tangent(&m))
    }
}

/// Wraps a vector-valued closure with a central-difference Jacobian.
pub struct FiniteDifferenceVector<F> {
    f: F,
}

impl<F> FiniteDifferenceVector<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> SimplexVectorFunctional for FiniteDifferenceVector<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync,
{
    fn value(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        (self.f)(p)
    }

    fn jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = p.len();
        let h = 1e-6f64.min(0.5 * p.min());
        let mut q = p.clone();
        let mut jac = DMatrix::zeros(n, n);
        for b in 0..n {
            q[b] = p[b] + h;
            let plus = (self.f)(&q)?;
            q[b] = p[b] - h;
            let minus = (self.f)(&q)?;
            q[b] = p[b];
            jac.set_column(b, &((plus - minus) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// A constant vector field.
#[derive(Debug, Clone)]
pub struct ConstantVector(pub DVector<f64>);

impl SimplexVectorFunctional for ConstantVector {
    fn value(&self, _p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.0.clone())
    }

    fn jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(p.len(), p.len()))
    }
}

/// `log Π(p)` with the trace-formula gradient and a finite-difference Hessian.
pub struct LogPseudoDet<'a> {
    pub geometry: &'a Geometry,
}

impl SimplexFunctional for LogPseudoDet<'_> {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        self.geometry.log_pseudo_det(p)
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.geometry.grad_log_pseudo_det(p)
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        tangent_hessian(|q| self.geometry.grad_log_pseudo_det(q), p, FD_STEP)
    }
}

/// The unnormalized Gibbs density `exp(−V/β) Π^{−1/2}`.
pub struct GibbsDensity<'a> {
    pub geometry: &'a Geometry,
    pub potential: &'a dyn SimplexFunctional,
    pub beta: f64,
}

impl GibbsDensity<'_> {
    fn log_gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let gv = self.potential.gradient(p)?;
        let gl = self.geometry.grad_log_pseudo_det(p)?;
        Ok(-gv / self.beta - gl * 0.5)
    }
}

impl SimplexFunctional for GibbsDensity<'_> {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        let v = self.potential.value(p)?;
        let lp = self.geometry.log_pseudo_det(p)?;
        Ok((-v / self.beta - 0.5 * lp).exp())
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.log_gradient(p)? * self.value(p)?)
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let rho = self.value(p)?;
        let g = self.log_gradient(p)?;
        let hv = self.potential.hessian(p)?;
        let hl = LogPseudoDet {
            geometry: self.geometry,
        }
        .hessian(p)?;
        let m = &g * g.transpose() - hv / self.beta - hl * 0.5;
        Ok(project_tangent(&(m * rho)))
    }
}

/// `grad_W F` as a vector functional with its analytic Jacobian
/// `J = [∂_b L · ∇F]_b + L ∇²F`.
pub struct GradW<'a> {
    pub geometry: &'a Geometry,
    pub functional: &'a dyn SimplexFunctional,
}

impl SimplexVectorFunctional for GradW<'_> {
    fn value(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        grad_w(self.geometry, self.functional, p)
    }

    fn jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.geometry.check_interior(p)?;
        let grad = self.functional.gradient(p)?;
        let hess = self.functional.hessian(p)?;
        let means = self.geometry.edge_means(p)?;
        let lap = self.geometry.laplacian(p)?;
        let mut jac = lap.matrix() * hess;
        for b in 0..p.len() {
            let col = d_laplacian_times(self.geometry, &means, b, &grad);
            jac.column_mut(b).axpy(1.0, &col, 1.0);
        }
        Ok(jac)
    }
}

/// `(∂L/∂p_b) v`.
fn d_laplacian_times(geom: &Geometry, means: &EdgeMeans, b: usize, v: &DVector<f64>) -> DVector<f64> {
    let graph = geom.graph();
    let mut out = DVector::zeros(graph.n());
    for &(_, e) in graph.neighbors(b) {
        let edge = &graph.edges()[e];
        let dtheta = if edge.i == b { means.d_tail[e] } else { means.d_head[e] };
        let flow = edge.w * dtheta * (v[edge.i] - v[edge.j]);
        out[edge.i] += flow;
        out[edge.j] -= flow;
    }
    out
}

/// `Σ_b ((∂L/∂p_b) v)_b`, the divergence term `∇·(L v)` minus `tr(L ∇v)`.
fn d_laplacian_contracted(geom: &Geometry, means: &EdgeMeans, v: &DVector<f64>) -> f64 {
    (0..geom.n()).map(|b| d_laplacian_times(geom, means, b, v)[b]).sum()
}

fn edge_diff(v: &DVector<f64>, i: usize, j: usize) -> f64 {
    v[j] - v[i]
}

fn edge_second(h: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    h[(i, i)] + h[(j, j)] - h[(i, j)] - h[(j, i)]
}

/// `(∂_{p_j} − ∂_{p_i})² log Π` on every edge, by central differences of the
/// trace-formula gradient along `e_j − e_i`.
pub fn edge_second_log_pseudo_det(geom: &Geometry, p: &DVector<f64>) -> Result<Vec<f64>> {
    geom.check_interior(p)?;
    geom.graph()
        .edges()
        .iter()
        .map(|e| {
            let h = FD_STEP.min(0.5 * p[e.i].min(p[e.j]));
            let mut plus = p.clone();
            plus[e.j] += h;
            plus[e.i] -= h;
            let mut minus = p.clone();
            minus[e.j] -= h;
            minus[e.i] += h;
            let gp = geom.grad_log_pseudo_det(&plus)?;
            let gm = geom.grad_log_pseudo_det(&minus)?;
            Ok((edge_diff(&gp, e.i, e.j) - edge_diff(&gm, e.i, e.j)) / (2.0 * h))
        })
        .collect()
}

/// `L : ∇² log Π = Σ_k λ_k u_kᵀ ∇² log Π u_k`, differencing the gradient
/// along each eigenvector of `L(p)` (all tangent except the kernel vector,
/// whose eigenvalue is zero).
fn laplacian_contract_hessian_log_pseudo_det(geom: &Geometry, p: &DVector<f64>) -> Result<f64> {
    let spec = geom.spectral(p)?;
    let mut total = 0.0;
    for k in 1..p.len() {
        let u = spec.eigenvectors.column(k).into_owned();
        let h = FD_STEP.min(0.5 * p.min() / u.amax());
        let gp = geom.grad_log_pseudo_det(&(p + &u * h))?;
        let gm = geom.grad_log_pseudo_det(&(p - &u * h))?;
        total += spec.eigenvalues[k] * u.dot(&(gp - gm)) / (2.0 * h);
    }
    Ok(total)
}

/// `grad_W F(p) = L(p) ∇F(p)`.
pub fn grad_w(geom: &Geometry, f: &dyn SimplexFunctional, p: &DVector<f64>) -> Result<DVector<f64>> {
    geom.check_interior(p)?;
    let g = f.gradient(p)?;
    let theta = geom.edge_theta(p);
    let mut out = DVector::zeros(p.len());
    for (e, t) in geom.graph().edges().iter().zip(&theta) {
        let flux = e.w * t * edge_diff(&g, e.i, e.j);
        out[e.i] -= flux;
        out[e.j] += flux;
    }
    Ok(out)
}

/// `div_W H(p) = tr ∇H(p) − ½ ⟨∇ log Π(p), H(p)⟩`.
pub fn div_w(geom: &Geometry, h: &dyn SimplexVectorFunctional, p: &DVector<f64>) -> Result<f64> {
    let glp = geom.grad_log_pseudo_det(p)?;
    let value = h.value(p)?;
    geom.check_dim(&value)?;
    Ok(h.jacobian(p)?.trace() - 0.5 * glp.dot(&value))
}

fn backward_edge_sum(geom: &Geometry, f: &dyn SimplexFunctional, p: &DVector<f64>) -> Result<f64> {
    let spec = geom.spectral(p)?;
    let means = geom.edge_means(p)?;
    let glp = geom.grad_log_pseudo_det_with(&spec, &means);
    let g = f.gradient(p)?;
    let hess = f.hessian(p)?;
    let mut total = 0.0;
    for (k, e) in geom.graph().edges().iter().enumerate() {
        let th = means.theta[k];
        let df = edge_diff(&g, e.i, e.j);
        total += e.w
            * (-0.5 * df * edge_diff(&glp, e.i, e.j) * th
                + edge_second(&hess, e.i, e.j) * th
                + df * means.edge_derivative(k));
    }
    Ok(total)
}

/// The Laplace–Beltrami operator as a three-term edge sum.
pub fn laplace_beltrami(geom: &Geometry, f: &dyn SimplexFunctional, p: &DVector<f64>) -> Result<f64> {
    backward_edge_sum(geom, f, p)
}

/// The Kolmogorov backward operator `𝖫_W Φ` as a three-term edge sum.
pub fn kolmogorov_backward(geom: &Geometry, phi: &dyn SimplexFunctional, p: &DVector<f64>) -> Result<f64> {
    backward_edge_sum(geom, phi, p)
}

/// `𝖫_W Φ = −½ ⟨∇Φ, L ∇ log Π⟩ + ∇·(L ∇Φ)`, assembled from matrices.
pub fn kolmogorov_backward_matrix(
    geom: &Geometry,
    phi: &dyn SimplexFunctional,
    p: &DVector<f64>,
) -> Result<f64> {
    let lap = geom.laplacian(p)?;
    let means = geom.edge_means(p)?;
    let glp = geom.grad_log_pseudo_det(p)?;
    let g = phi.gradient(p)?;
    let hess = phi.hessian(p)?;
    let l = lap.matrix();
    let div = (l * hess).trace() + d_laplacian_contracted(geom, &means, &g);
    Ok(-0.5 * g.dot(&(l * glp)) + div)
}

/// The Kolmogorov forward operator `𝖫*_W ℙ` as a five-term edge sum.
pub fn kolmogorov_forward(geom: &Geometry, pf: &dyn SimplexFunctional, p: &DVector<f64>) -> Result<f64> {
    let spec = geom.spectral(p)?;
    let means = geom.edge_means(p)?;
    let glp = geom.grad_log_pseudo_det_with(&spec, &means);
    let d2lp = edge_second_log_pseudo_det(geom, p)?;
    let value = pf.value(p)?;
    let g = pf.gradient(p)?;
    let hess = pf.hessian(p)?;
    let mut total = 0.0;
    for (k, e) in geom.graph().edges().iter().enumerate() {
        let th = means.theta[k];
        let dth = means.edge_derivative(k);
        let dp = edge_diff(&g, e.i, e.j);
        let dlp = edge_diff(&glp, e.i, e.j);
        total += e.w
            * (0.5 * dp * dlp * th
                + 0.5 * value * dlp * dth
                + 0.5 * value * d2lp[k] * th
                + edge_second(&hess, e.i, e.j) * th
                + dp * dth);
    }
    Ok(total)
}

/// `𝖫*_W ℙ = ½ ∇·(ℙ L ∇ log Π) + ∇·(L ∇ℙ)`, assembled from matrices, with
/// `L : ∇² log Π` differenced along the eigenvectors of `L`.
pub fn kolmogorov_forward_matrix(
    geom: &Geometry,
    pf: &dyn SimplexFunctional,
    p: &DVector<f64>,
) -> Result<f64> {
    let lap = geom.laplacian(p)?;
    let l = lap.matrix();
    let means = geom.edge_means(p)?;
    let glp = geom.grad_log_pseudo_det(p)?;
    let value = pf.value(p)?;
    let g = pf.gradient(p)?;
    let hess = pf.hessian(p)?;
    let l_glp = l * &glp;
    let div_l_glp = d_laplacian_contracted(geom, &means, &glp)
        + laplacian_contract_hessian_log_pseudo_det(geom, p)?;
    let div_l_gp = (l * hess).trace() + d_laplacian_contracted(geom, &means, &g);
    Ok(0.5 * (g.dot(&l_glp) + value * div_l_glp) + div_l_gp)
}

/// The Fokker–Planck operator of the gradient drift-diffusion,
/// `∇·(ρ L ∇V) + β 𝖫*_W ρ`, evaluated at `p`. It vanishes for the Gibbs density.
pub fn fokker_planck(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    beta: f64,
    rho: &dyn SimplexFunctional,
    p: &DVector<f64>,
) -> Result<f64> {
    let means = geom.edge_means(p)?;
    let r = rho.value(p)?;
    let gr = rho.gradient(p)?;
    let gv = potential.gradient(p)?;
    let hv = potential.hessian(p)?;
    let mut transport = 0.0;
    for (k, e) in geom.graph().edges().iter().enumerate() {
        let dv = edge_diff(&gv, e.i, e.j);
        transport += e.w
            * (means.theta[k] * edge_diff(&gr, e.i, e.j) * dv
                + r * means.edge_derivative(k) * dv
                + r * means.theta[k] * edge_second(&hv, e.i, e.j));
    }
    let diffusion = if beta == 0.0 {
        0.0
    } else {
        beta * kolmogorov_forward(geom, rho, p)?
    };
    Ok(transport + diffusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use crate::mean::MeanFunction;
    use crate::sampling::{interior_means, random_graph, random_interior, random_symmetric};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, max_n: usize) -> (Geometry, DVector<f64>, Quadratic) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=max_n);
        let means = interior_means();
        let mean = means[rng.gen_range(0..means.len())].clone();
        let geom = Geometry::new(random_graph(&mut rng, n), mean);
        let p = random_interior(&mut rng, n, 0.03);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let q = Quadratic::new(random_symmetric(&mut rng, n), b, 0.3).unwrap();
        (geom, p, q)
    }

    #[test]
    fn grad_w_of_uniform_linear_is_zero() {
        let (geom, p, _) = instance(1, 5);
        let f = Quadratic::linear(DVector::from_element(geom.n(), 2.5));
        assert!(grad_w(&geom, &f, &p).unwrap().amax() == 0.0);
        assert!(laplace_beltrami(&geom, &f, &p).unwrap().abs() < 1e-14);
        let c = Quadratic::constant(geom.n(), 4.0);
        assert_eq!(laplace_beltrami(&geom, &c, &p).unwrap(), 0.0);
        assert_eq!(kolmogorov_backward(&geom, &c, &p).unwrap(), 0.0);
    }

    #[test]
    fn grad_w_matches_matrix_product() {
        for seed in 0..20 {
            let (geom, p, f) = instance(seed, 6);
            let direct = grad_w(&geom, &f, &p).unwrap();
            let matrix = geom.laplacian(&p).unwrap().matrix() * f.gradient(&p).unwrap();
            assert!((&direct - matrix).amax() < 1e-12);
            assert!(direct.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn div_w_examples() {
        let (geom, p, _) = instance(3, 5);
        let n = geom.n();
        assert_eq!(div_w(&geom, &ConstantVector(DVector::zeros(n)), &p).unwrap(), 0.0);
        let c = 0.7;
        let glp = geom.grad_log_pseudo_det(&p).unwrap();
        let got = div_w(&geom, &ConstantVector(DVector::from_element(n, c)), &p).unwrap();
        assert_relative_eq!(got, -0.5 * c * glp.sum(), max_relative = 1e-14);
    }

    #[test]
    fn tangent_hessian_of_quadratic_is_projected_matrix() {
        let (_, p, f) = instance(5, 6);
        let h = tangent_hessian(|q| f.gradient(q), &p, 1e-5).unwrap();
        let expected = project_tangent(&f.hessian(&p).unwrap());
        assert!((h - expected).amax() < 1e-8);
    }

    #[test]
    fn finite_difference_wrapper_matches_analytic_quadratic() {
        let (_, p, f) = instance(9, 5);
        let fd = FiniteDifference::new(|q: &DVector<f64>| f.value(q).unwrap());
        let g = fd.gradient(&p).unwrap();
        assert!((g - f.gradient(&p).unwrap()).amax() < 1e-8);
        let h = fd.hessian(&p).unwrap();
        assert!((h - project_tangent(&f.hessian(&p).unwrap())).amax() < 1e-6);
    }

    #[test]
    fn backward_matches_compact_form() {
        for seed in 0..20 {
            let (geom, p, f) = instance(seed, 6);
            let edge = kolmogorov_backward(&geom, &f, &p).unwrap();
            let matrix = kolmogorov_backward_matrix(&geom, &f, &p).unwrap();
            assert!((edge - matrix).abs() <= 1e-9 * (1.0 + edge.abs()), "{edge} vs {matrix}");
        }
    }

    /// Size of the individual terms: `ρ · max ω θ |D² log Π|`.
    fn residual_scale(geom: &Geometry, rho: &GibbsDensity, p: &DVector<f64>) -> f64 {
        let d2 = edge_second_log_pseudo_det(geom, p).unwrap();
        let theta = geom.edge_theta(p);
        let m = geom
            .graph()
            .edges()
            .iter()
            .zip(d2.iter().zip(&theta))
            .map(|(e, (d, t))| e.w * t * d.abs())
            .fold(1.0, f64::max);
        rho.value(p).unwrap() * m
    }

    #[test]
    fn volume_density_is_stationary() {
        for seed in 0..10 {
            let (geom, p, _) = instance(100 + seed, 5);
            let rho = GibbsDensity {
                geometry: &geom,
                potential: &Zero,
                beta: 1.0,
            };
            let r = kolmogorov_forward(&geom, &rho, &p).unwrap();
            assert!(r.abs() < 1e-7 * residual_scale(&geom, &rho, &p), "seed {seed}: {r}");
        }
    }

    #[test]
    fn gibbs_density_solves_fokker_planck() {
        for seed in 0..10 {
            let (geom, p, v) = instance(200 + seed, 5);
            let beta = 0.5 + seed as f64 * 0.1;
            let rho = GibbsDensity {
                geometry: &geom,
                potential: &v,
                beta,
            };
            let r = fokker_planck(&geom, &v, beta, &rho, &p).unwrap();
            assert!(r.abs() < 1e-7 * residual_scale(&geom, &rho, &p), "seed {seed}: {r}");
        }
    }

    #[test]
    fn two_point_constant_forward_matches_matrix_form() {
        let geom = Geometry::new(WeightedGraph::two_point(1.5).unwrap(), MeanFunction::Geometric);
        let p = DVector::from_row_slice(&[0.3, 0.7]);
        let one = Quadratic::constant(2, 1.0);
        let edge = kolmogorov_forward(&geom, &one, &p).unwrap();
        let matrix = kolmogorov_forward_matrix(&geom, &one, &p).unwrap();
        assert!((edge - matrix).abs() < 1e-6 * edge.abs().max(1.0));
        assert!(edge.abs() > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn laplace_beltrami_is_div_of_grad(seed in any::<u64>()) {
            let (geom, p, f) = instance(seed, 6);
            let lb = laplace_beltrami(&geom, &f, &p).unwrap();
            let analytic = div_w(&geom, &GradW { geometry: &geom, functional: &f }, &p).unwrap();
            prop_assert!((lb - analytic).abs() <= 1e-8 * (1.0 + lb.abs()), "{} vs {}", lb, analytic);
            let fd = FiniteDifferenceVector::new(|q: &DVector<f64>| grad_w(&geom, &f, q));
            let numeric = div_w(&geom, &fd, &p).unwrap();
            prop_assert!((lb - numeric).abs() <= 1e-5 * (1.0 + lb.abs()), "{} vs {}", lb, numeric);
        }

        #[test]
        fn forward_forms_agree(seed in any::<u64>()) {
            let (geom, p, f) = instance(seed, 6);
            let edge = kolmogorov_forward(&geom, &f, &p).unwrap();
            let matrix = kolmogorov_forward_matrix(&geom, &f, &p).unwrap();
            prop_assert!((edge - matrix).abs() <= 1e-6 * (1.0 + edge.abs()), "{} vs {}", edge, matrix);
        }

        #[test]
        fn operators_ignore_constant_gradient_shift(seed in any::<u64>(), c in -3.0f64..3.0) {
            let (geom, p, f) = instance(seed, 5);
            let n = geom.n();
            let shifted = FiniteDifference::new(|q: &DVector<f64>| f.value(q).unwrap() + c * q.sum());
            let a = grad_w(&geom, &f, &p).unwrap();
            let b = grad_w(&geom, &shifted, &p).unwrap();
            prop_assert!((a - b).amax() < 1e-7);
            let lb = laplace_beltrami(&geom, &f, &p).unwrap();
            let lb2 = laplace_beltrami(&geom, &shifted, &p).unwrap();
            prop_assert!((lb - lb2).abs() < 1e-5 * (1.0 + lb.abs()));
            prop_assert_eq!(n, p.len());
        }
    }
}
