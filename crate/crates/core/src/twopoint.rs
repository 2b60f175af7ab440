//! One-dimensional reduction of the dynamics on the two-point graph.

use std::sync::Arc;

use nalgebra::DVector;

use crate::calculus::SimplexFunctional;
use crate::dynamics::{drift, noise_increment, EdgeNoise};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::mean::MeanFunction;
use crate::metric::Geometry;
use crate::quad::{tanh_sinh, tanh_sinh_checked};

/// Relative agreement required between `nodes` and `2·nodes` when normalizing.
pub const Z_TOLERANCE: f64 = 1e-9;

/// `x = p_1` on the two-point graph with `h = √ω_12`.
#[derive(Clone)]
pub struct TwoPointModel {
    pub h: f64,
    pub beta: f64,
    pi: (f64, f64),
    mean: MeanFunction,
    potential: Arc<dyn SimplexFunctional>,
}

impl std::fmt::Debug for TwoPointModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoPointModel")
            .field("h", &self.h)
            .field("beta", &self.beta)
            .field("pi", &self.pi)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

fn point(x: f64) -> DVector<f64> {
    DVector::from_row_slice(&[x, 1.0 - x])
}

impl TwoPointModel {
    pub fn reduce(
        graph: &WeightedGraph,
        mean: MeanFunction,
        potential: Arc<dyn SimplexFunctional>,
        beta: f64,
    ) -> Result<Self> {
        if graph.n() != 2 {
            return Err(Error::InvalidArgument(format!(
                "two-point reduction needs n = 2, got {}",
                graph.n()
            )));
        }
        let pi = graph.volume();
        Ok(Self {
            h: graph.weight(0, 1).sqrt(),
            beta,
            pi: (pi.get(0), pi.get(1)),
            mean,
            potential,
        })
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    /// `θ(x) = θ(x/π_1, (1−x)/π_2)`.
    pub fn theta(&self, x: f64) -> f64 {
        self.mean.value(x / self.pi.0, (1.0 - x) / self.pi.1)
    }

    pub fn theta_prime(&self, x: f64) -> Result<f64> {
        let (dx, dy) = self.mean.partials(x / self.pi.0, (1.0 - x) / self.pi.1)?;
        Ok(dx / self.pi.0 - dy / self.pi.1)
    }

    pub fn potential(&self, x: f64) -> Result<f64> {
        self.potential.value(&point(x))
    }

    /// `V'(x) = ∂_{p_1}𝕍 − ∂_{p_2}𝕍`.
    pub fn potential_prime(&self, x: f64) -> Result<f64> {
        let g = self.potential.gradient(&point(x))?;
        Ok(g[0] - g[1])
    }

    fn check_open(x: f64) -> Result<()> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::NotInterior(x.min(1.0 - x)));
        }
        Ok(())
    }

    /// `(−h²[θV' − (β/2)θ'], h√(2βθ))`.
    pub fn drift_diffusion(&self, x: f64) -> Result<(f64, f64)> {
        Self::check_open(x)?;
        let h2 = self.h * self.h;
        let theta = self.theta(x);
        let drift = -h2 * (theta * self.potential_prime(x)? - 0.5 * self.beta * self.theta_prime(x)?);
        Ok((drift, self.h * (2.0 * self.beta * theta).sqrt()))
    }

    /// `e^{−V/β} θ^{−1/2}`; zero where that expression underflows or θ blows up.
    pub fn density_unnormalized(&self, x: f64) -> Result<f64> {
        let theta = self.theta(x);
        let v = self.potential(x)?;
        Ok((-v / self.beta).exp() / theta.sqrt())
    }

    fn integrand(&self) -> impl Fn(f64) -> f64 + '_ {
        |x| self.density_unnormalized(x).unwrap_or(f64::NAN)
    }

    /// Normalizes `e^{−V/β} θ^{−1/2}` over `[0, 1]`.
    pub fn stationary_density(&self, nquad: usize) -> Result<StationaryDensity> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument("stationary density needs beta > 0".into()));
        }
        let z = tanh_sinh_checked(self.integrand(), 0.0, 1.0, nquad, Z_TOLERANCE)?;
        Ok(StationaryDensity {
            model: self.clone(),
            z,
            nquad,
        })
    }
}

/// `ρ*(x) = Z⁻¹ e^{−V/β} θ^{−1/2}`.
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    model: TwoPointModel,
    pub z: f64,
    nquad: usize,
}

impl StationaryDensity {
    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(self.model.density_unnormalized(x)? / self.z)
    }

    /// `(x, ρ*(x))` at the midpoints of `points` equal cells.
    pub fn grid(&self, points: usize) -> Result<Vec<(f64, f64)>> {
        (0..points)
            .map(|k| {
                let x = (k as f64 + 0.5) / points as f64;
                Ok((x, self.value(x)?))
            })
            .collect()
    }

    /// `∫ ρ*` over each of `bins` equal cells of `[0, 1]`.
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        let f = self.model.integrand();
        (0..bins)
            .map(|k| {
                let a = k as f64 / bins as f64;
                let b = (k + 1) as f64 / bins as f64;
                tanh_sinh(&f, a, b, self.nquad) / self.z
            })
            .collect()
    }

    /// The stationary Fokker–Planck residual
    /// `−∂_x(a ρ*) + ½ ∂_xx(b² ρ*)` for drift `a` and diffusion `b`, with
    /// fourth-order central differences of step `delta`.
    pub fn fokker_planck_residual(&self, x: f64, delta: f64) -> Result<f64> {
        let m = &self.model;
        let flux = |y: f64| -> Result<(f64, f64)> {
            let (a, b) = m.drift_diffusion(y)?;
            let rho = self.value(y)?;
            Ok((a * rho, 0.5 * b * b * rho))
        };
        let mut first = [0.0; 5];
        let mut second = [0.0; 5];
        for (k, s) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
            let (f1, f2) = flux(x + s * delta)?;
            first[k] = f1;
            second[k] = f2;
        }
        let d1 = (first[0] - 8.0 * first[1] + 8.0 * first[3] - first[4]) / (12.0 * delta);
        let d2 = (-second[0] + 16.0 * second[1] - 30.0 * second[2] + 16.0 * second[3] - second[4])
            / (12.0 * delta * delta);
        Ok(-d1 + d2)
    }
}

/// Drift and squared diffusion from the 1-D formulas and from the simplex
/// dynamics at `p = (x, 1 − x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub drift_1d: f64,
    pub drift_simplex: f64,
    pub diffusion_sq_1d: f64,
    pub variance_rate_simplex: f64,
}

impl ReductionReport {
    pub fn max_abs_error(&self) -> f64 {
        (self.drift_1d - self.drift_simplex)
            .abs()
            .max((self.diffusion_sq_1d - self.variance_rate_simplex).abs())
    }
}

pub fn reduction_consistency(model: &TwoPointModel, geom: &Geometry, x: f64) -> Result<ReductionReport> {
    let (drift_1d, diffusion) = model.drift_diffusion(x)?;
    let p = point(x);
    let d = drift(geom, model.potential.as_ref(), model.beta, &p)?;
    // Unit ΔB_12 and zero ΔB_21 over unit time give η_1 = √(βωθ),
    // so the conditional variance rate is 2η_1².
    let unit = EdgeNoise {
        forward: vec![1.0],
        backward: vec![0.0],
        dt: 1.0,
    };
    let eta = noise_increment(geom, model.beta, &p, &unit)?;
    Ok(ReductionReport {
        drift_1d,
        drift_simplex: d[0],
        diffusion_sq_1d: diffusion * diffusion,
        variance_rate_simplex: 2.0 * eta[0] * eta[0],
    })
}

/// Time-averaged occupancy of `bins` equal cells of `[0, 1]`.
pub fn occupancy(samples: &[f64], bins: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let k = ((x * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// `Σ_k |empirical_k − analytic_k|` between the occupancy of `samples` and
/// the bin masses of a density.
pub fn histogram_distance(samples: &[f64], analytic: &[f64]) -> Result<f64> {
    let empirical = occupancy(samples, analytic.len())?;
    Ok(empirical.iter().zip(analytic).map(|(a, b)| (a - b).abs()).sum())
}

/// Drops the first `fraction` of the samples.
pub fn discard_burn_in(samples: &[f64], fraction: f64) -> &[f64] {
    let skip = ((samples.len() as f64) * fraction).floor() as usize;
    &samples[skip.min(samples.len())..]
}
