//! The probability-weighted Laplacian `L(p)`, its spectral data and the
//! finite-state Wasserstein-2 inner product it induces on the simplex.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::mean::MeanFunction;

/// Tolerance on `|Σ p_i − 1|` and `|Σ σ_i|` for validated vectors.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default relative threshold separating the kernel eigenvalue from the rest.
pub const DEFAULT_ZERO_TOLERANCE: f64 = 1e-10;

/// A point of the closed probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(DVector<f64>);

impl ProbabilityVector {
    /// Accepts nonnegative vectors summing to one within [`SUM_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = DVector::from_vec(values);
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::NotProbability(format!("negative or non-finite entry in {v:?}")));
        }
        let s = v.sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotProbability(format!("entries sum to {s}")));
        }
        Ok(Self(v))
    }

    /// Like [`ProbabilityVector::new`] but also requires every entry to be positive.
    pub fn interior(values: Vec<f64>) -> Result<Self> {
        let p = Self::new(values)?;
        let min = p.0.min();
        if min <= 0.0 {
            return Err(Error::NotInterior(min));
        }
        Ok(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }


    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.min() > 0.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<DVector<f64>> for ProbabilityVector {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A tangent vector of the simplex: components sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(DVector<f64>);

impl TangentVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        let s = values.sum();
        if s.abs() > SUM_TOLERANCE * values.lp_norm(1).max(1.0) {
            return Err(Error::NotTangent(s));
        }
        Ok(Self(values))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl AsRef<DVector<f64>> for TangentVector {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// `L(p)` with `L_ij = −ω_ij θ_ij(p)` off the diagonal and zero row sums.
#[derive(Debug, Clone)]
pub struct WeightedLaplacian {
    matrix: DMatrix<f64>,
}

impl WeightedLaplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// Eigendecomposition of `L(p)` on the open simplex.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Ascending; the first entry is the kernel eigenvalue.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Product of the `n − 1` positive eigenvalues.
    pub pseudo_det: f64,
    /// `Σ log λ_k` over the positive eigenvalues.
    pub log_pseudo_det: f64,
    pub pseudo_inverse: DMatrix<f64>,
}

impl SpectralData {
    /// Decomposes a symmetric positive semi-definite matrix with a one-dimensional
    /// kernel. Eigenvalues with `|λ| < tau · λ_max` count as zero; anything
    /// other than exactly one such eigenvalue is a degenerate spectrum.
    pub fn from_laplacian(lap: &WeightedLaplacian, tau: f64) -> Result<Self> {
        let n = lap.matrix.nrows();
        let eig = SymmetricEigen::new(lap.matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        let mut eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

        let lambda_max = eigenvalues[n - 1].abs();
        let threshold = tau * lambda_max;
        let zero_count = eigenvalues.iter().filter(|l| l.abs() < threshold).count();
        if zero_count != 1 || lambda_max == 0.0 {
            return Err(Error::DegenerateSpectrum {
                zero_count,
                threshold,
            });
        }

        // Orient the kernel vector along +𝟙.
        if eigenvectors.column(0).sum() < 0.0 {
            eigenvectors.column_mut(0).neg_mut();
        }

        let mut pseudo_inverse = DMatrix::zeros(n, n);
        let mut log_pseudo_det = 0.0;
        for k in 1..n {
            let lambda = eigenvalues[k];
            log_pseudo_det += lambda.ln();
            let u = eigenvectors.column(k);
            pseudo_inverse.ger(1.0 / lambda, &u, &u, 1.0);
        }

        Ok(Self {
            eigenvalues,
            eigenvectors,
            pseudo_det: log_pseudo_det.exp(),
            log_pseudo_det,
            pseudo_inverse,
        })
    }

    /// The smallest positive eigenvalue.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues[1]
    }
}

/// Per-edge mean values `θ_ij(p)` and their derivatives with respect to
/// `p_i` and `p_j` (edge orientation `i < j`).
#[derive(Debug, Clone)]
pub struct EdgeMeans {
    pub theta: Vec<f64>,
    /// `∂θ_ij/∂p_i`.
    pub d_tail: Vec<f64>,
    /// `∂θ_ij/∂p_j`.
    pub d_head: Vec<f64>,
}

impl EdgeMeans {
    /// `(∂_{p_j} − ∂_{p_i}) θ_ij` on edge `e`.
    pub fn edge_derivative(&self, e: usize) -> f64 {
        self.d_head[e] - self.d_tail[e]
    }
}

/// A graph together with a mean function: the data defining the
/// Wasserstein geometry of the simplex.
#[derive(Debug, Clone)]
pub struct Geometry {
    graph: WeightedGraph,
    mean: MeanFunction,
    zero_tol: f64,
}

impl Geometry {
    pub fn new(graph: WeightedGraph, mean: MeanFunction) -> Self {
        Self {
            graph,
            mean,
            zero_tol: DEFAULT_ZERO_TOLERANCE,
        }
    }

    /// Overrides the relative kernel threshold `τ`.
    pub fn with_zero_tolerance(mut self, tau: f64) -> Self {
        self.zero_tol = tau;
        self
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn zero_tolerance(&self) -> f64 {
        self.zero_tol
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub(crate) fn check_dim(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.graph.n() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.n(),
                got: p.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_interior(&self, p: &DVector<f64>) -> Result<()> {
        self.check_dim(p)?;
        let min = p.min();
        if !(min > 0.0) || p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotInterior(min));
        }
        Ok(())
    }

    /// `θ_ij(p) = θ(p_i/π_i, p_j/π_j)` for every edge.
    pub fn edge_theta(&self, p: &DVector<f64>) -> Vec<f64> {
        let pi = self.graph.volume();
        self.graph
            .edges()
            .iter()
            .map(|e| self.mean.value(p[e.i] / pi.get(e.i), p[e.j] / pi.get(e.j)))
            .collect()
    }

    /// Edge means with their chain-rule derivatives in `p`.
    pub fn edge_means(&self, p: &DVector<f64>) -> Result<EdgeMeans> {
        self.check_dim(p)?;
        let pi = self.graph.volume();
        let m = self.graph.edge_count();
        let mut out = EdgeMeans {
            theta: Vec::with_capacity(m),
            d_tail: Vec::with_capacity(m),
            d_head: Vec::with_capacity(m),
        };
        for e in self.graph.edges() {
            let (pi_i, pi_j) = (pi.get(e.i), pi.get(e.j));
            let (x, y) = (p[e.i] / pi_i, p[e.j] / pi_j);
            let (dx, dy) = self.mean.partials(x, y)?;
            out.theta.push(self.mean.value(x, y));
            out.d_tail.push(dx / pi_i);
            out.d_head.push(dy / pi_j);
        }
        Ok(out)
    }

    fn assemble(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.graph.n();
        let mut l = DMatrix::zeros(n, n);
        for (e, t) in self.graph.edges().iter().zip(theta) {
            let off = -e.w * t;
            l[(e.i, e.j)] = off;
            l[(e.j, e.i)] = off;
        }
        for i in 0..n {
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
            l[(i, i)] = -row;
        }
        l
    }

    /// Builds `L(p)` for any point of the closed simplex.
    pub fn laplacian(&self, p: &DVector<f64>) -> Result<WeightedLaplacian> {
        self.check_dim(p)?;
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::NotProbability(format!("{p:?}")));
        }
        Ok(WeightedLaplacian {
            matrix: self.assemble(&self.edge_theta(p)),
        })
    }

    /// Spectral data of `L(p)`; requires an interior point.
    pub fn spectral(&self, p: &DVector<f64>) -> Result<SpectralData> {
        self.check_interior(p)?;
        SpectralData::from_laplacian(&self.laplacian(p)?, self.zero_tol)
    }

    /// `log Π(p)`, the log pseudo-determinant of `L(p)`.
    pub fn log_pseudo_det(&self, p: &DVector<f64>) -> Result<f64> {
        Ok(self.spectral(p)?.log_pseudo_det)
    }

    /// `∇_p log Π(p)` via `∂_k log Π = tr(L† ∂_k L)`.
    ///
    /// `∂_k L` only touches edges incident to `k`, and on edge `(i, j)` the
    /// trace reduces to `ω_ij ∂_kθ_ij (L†_ii + L†_jj − 2L†_ij)`.
    pub fn grad_log_pseudo_det(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let spec = self.spectral(p)?;
        let means = self.edge_means(p)?;
        Ok(self.grad_log_pseudo_det_with(&spec, &means))
    }

    pub(crate) fn grad_log_pseudo_det_with(
        &self,
        spec: &SpectralData,
        means: &EdgeMeans,
    ) -> DVector<f64> {
        let pinv = &spec.pseudo_inverse;
        let mut grad = DVector::zeros(self.graph.n());
        for (k, e) in self.graph.edges().iter().enumerate() {
            let resistance = pinv[(e.i, e.i)] + pinv[(e.j, e.j)] - 2.0 * pinv[(e.i, e.j)];
            grad[e.i] += e.w * means.d_tail[k] * resistance;
            grad[e.j] += e.w * means.d_head[k] * resistance;
        }
        grad
    }

    /// `g^W(p)(σ₁, σ₂) = σ₁ᵀ L(p)† σ₂`.
    pub fn metric_inner(
        &self,
        p: &DVector<f64>,
        s1: &TangentVector,
        s2: &TangentVector,
    ) -> Result<f64> {
        self.check_dim(s1.as_vector())?;
        self.check_dim(s2.as_vector())?;
        let spec = self.spectral(p)?;
        Ok(s1.as_vector().dot(&(&spec.pseudo_inverse * s2.as_vector())))
    }

    /// The three equivalent expressions of the metric: `σ₁ᵀL†σ₂`,
    /// `Φ₁ᵀ L Φ₂` with `Φ_k = L†σ_k`, and the edge sum
    /// `½ Σ_{(i,j)} (∇Φ₁)_ij (∇Φ₂)_ij θ_ij`.
    pub fn metric_inner_forms(
        &self,
        p: &DVector<f64>,
        s1: &TangentVector,
        s2: &TangentVector,
    ) -> Result<[f64; 3]> {
        self.check_dim(s1.as_vector())?;
        self.check_dim(s2.as_vector())?;
        let spec = self.spectral(p)?;
        let lap = self.laplacian(p)?;
        let phi1 = &spec.pseudo_inverse * s1.as_vector();
        let phi2 = &spec.pseudo_inverse * s2.as_vector();
        let pinv_form = s1.as_vector().dot(&phi2);
        let potential_form = phi1.dot(&(lap.matrix() * &phi2));
        let g1 = self.graph.gradient(&phi1)?;
        let g2 = self.graph.gradient(&phi2)?;
        let theta = self.edge_theta(p);
        // Each undirected edge appears twice in the ordered-pair sum.
        let edge_form: f64 = g1
            .values()
            .iter()
            .zip(g2.values())
            .zip(&theta)
            .map(|((a, b), t)| a * b * t)
            .sum();
        Ok([pinv_form, potential_form, edge_form])
    }
}
