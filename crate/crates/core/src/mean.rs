//! Two-argument mean ("activation") functions weighting each edge of the
//! probability-weighted Laplacian, with analytic first partials.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A convex generator `φ` with `φ(1) = 0` and its first three derivatives.
///
/// The third derivative is needed for the partials of the induced mean
/// near its diagonal.
pub trait ConvexGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn phi(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn d3(&self, x: f64) -> f64;
    /// Whether `φ'` is unbounded below at zero, so the induced mean vanishes on the boundary.
    fn singular_at_zero(&self) -> bool;
}

impl fmt::Debug for dyn ConvexGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvexGenerator({})", self.name())
    }
}

/// `φ(x) = x log x`, generating the KL divergence and the logarithmic mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct KlGenerator;

impl ConvexGenerator for KlGenerator {
    fn name(&self) -> &str {
        "kl"
    }
    fn phi(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            x * x.ln()
        }
    }
    fn d1(&self, x: f64) -> f64 {
        x.ln() + 1.0
    }
    fn d2(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn d3(&self, x: f64) -> f64 {
        -1.0 / (x * x)
    }
    fn singular_at_zero(&self) -> bool {
        true
    }
}

/// `φ(x) = (x − 1)² / 2`, whose induced mean is identically one.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticGenerator;

impl ConvexGenerator for QuadraticGenerator {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn phi(&self, x: f64) -> f64 {
        0.5 * (x - 1.0) * (x - 1.0)
    }
    fn d1(&self, x: f64) -> f64 {
        x - 1.0
    }
    fn d2(&self, _x: f64) -> f64 {
        1.0
    }
    fn d3(&self, _x: f64) -> f64 {
        0.0
    }
    fn singular_at_zero(&self) -> bool {
        false
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied generator built from closures.
#[derive(Clone)]
pub struct CustomGenerator {
    name: String,
    phi: ScalarFn,
    d1: ScalarFn,
    d2: ScalarFn,
    d3: ScalarFn,
    singular_at_zero: bool,
}

impl CustomGenerator {
    /// Validates `φ(1) = 0` and `φ'' > 0` on a log-spaced sample of `(0, ∞)`.
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d3: impl Fn(f64) -> f64 + Send + Sync + 'static,
        singular_at_zero: bool,
    ) -> Result<Self> {
        let g = Self {
            name: name.into(),
            phi: Arc::new(phi),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            d3: Arc::new(d3),
            singular_at_zero,
        };
        validate_generator(&g)?;
        Ok(g)
    }
}

impl ConvexGenerator for CustomGenerator {
    fn name(&self) -> &str {
        &self.name
    }
    fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (self.d1)(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (self.d2)(x)
    }
    fn d3(&self, x: f64) -> f64 {
        (self.d3)(x)
    }
    fn singular_at_zero(&self) -> bool {
        self.singular_at_zero
    }
}

/// Checks `φ(1) = 0` and strict convexity on sampled points in `[1e-3, 1e3]`.
pub fn validate_generator(g: &dyn ConvexGenerator) -> Result<()> {
    let at_one = g.phi(1.0);
    if at_one.abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "generator `{}` has φ(1) = {at_one}, expected 0",
            g.name()
        )));
    }
    for k in 0..=60 {
        let x = 10f64.powf(-3.0 + 0.1 * k as f64);
        let c = g.d2(x);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "generator `{}` is not strictly convex: φ''({x}) = {c}",
                g.name()
            )));
        }
    }
    Ok(())
}

/// Looks up a built-in generator by name (`"kl"` or `"quadratic"`).
pub fn generator(name: &str) -> Result<Arc<dyn ConvexGenerator>> {
    match name {
        "kl" => Ok(Arc::new(KlGenerator)),
        "quadratic" => Ok(Arc::new(QuadraticGenerator)),
        _ => Err(Error::UnknownName {
            registry: "generator",
            name: name.to_string(),
        }),
    }
}

/// Relative distance from the diagonal below which the closed forms switch
/// to expansions about the diagonal.
const DIAGONAL_TOL: f64 = 1e-8;
/// Window in which partials use cancellation-free expansions.
const PARTIAL_SERIES_TOL: f64 = 1e-2;

/// Eight-point Gauss–Legendre rule on `[0, 1]` as `(node, weight)`.
const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (0.019855071751231912, 0.050614268145188344),
    (0.10166676129318664, 0.11119051722668717),
    (0.2372337950418355, 0.15685332293894352),
    (0.4082826787521751, 0.18134189168918088),
    (0.5917173212478248, 0.18134189168918088),
    (0.7627662049581645, 0.15685332293894352),
    (0.8983332387068134, 0.11119051722668717),
    (0.9801449282487681, 0.050614268145188344),
];

/// A symmetric mean `θ(x, y)` on the nonnegative quadrant.
#[derive(Clone)]
pub enum MeanFunction {
    /// `(x + y)/2`. Does not vanish on the boundary.
    Arithmetic,
    /// `√(xy)`.
    Geometric,
    /// `1/(1/x + 1/y)`, i.e. half the usual harmonic mean; `θ(x, x) = x/2`.
    Harmonic,
    /// `2/(1/x + 1/y)`, the usual normalization with `θ(x, x) = x`.
    HarmonicConventional,
    /// `(x − y)/(log x − log y)`.
    Logarithmic,
    /// `(x − y)/(φ'(x) − φ'(y))` for a convex generator `φ`.
    PhiPrime(Arc<dyn ConvexGenerator>),
}

impl fmt::Debug for MeanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl MeanFunction {
    /// Parses `arithmetic`, `geometric`, `harmonic`, `harmonic-conventional`,
    /// `logarithmic`, or `phi:<generator>`.
    pub fn from_name(name: &str) -> Result<Self> {
        let mean = match name {
            "arithmetic" => Self::Arithmetic,
            "geometric" => Self::Geometric,
            "harmonic" => Self::Harmonic,
            "harmonic-conventional" => Self::HarmonicConventional,
            "logarithmic" | "log" => Self::Logarithmic,
            other => match other
                .strip_prefix("phi:")
                .or_else(|| other.strip_prefix("phi-prime:"))
            {
                Some(g) => Self::PhiPrime(generator(g)?),
                None => {
                    return Err(Error::UnknownName {
                        registry: "mean",
                        name: name.to_string(),
                    })
                }
            },
        };
        Ok(mean)
    }

    pub fn phi_prime(generator: Arc<dyn ConvexGenerator>) -> Self {
        Self::PhiPrime(generator)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Arithmetic => "arithmetic".into(),
            Self::Geometric => "geometric".into(),
            Self::Harmonic => "harmonic".into(),
            Self::HarmonicConventional => "harmonic-conventional".into(),
            Self::Logarithmic => "logarithmic".into(),
            Self::PhiPrime(g) => format!("phi:{}", g.name()),
        }
    }

    /// True when `θ(x, y) = 0` whenever `xy = 0`, so the diffusion
    /// degenerates on the simplex boundary.
    pub fn vanishes_on_boundary(&self) -> bool {
        match self {
            Self::Arithmetic => false,
            Self::PhiPrime(g) => g.singular_at_zero(),
            _ => true,
        }
    }

    /// Evaluates `θ(x, y)`, rejecting negative or non-finite arguments.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_args(x, y)?;
        Ok(self.value(x, y))
    }

    /// Evaluates `θ(x, y)` without argument validation.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Arithmetic => 0.5 * (x + y),
            Self::Geometric => (x * y).sqrt(),
            Self::Harmonic => harmonic(x, y),
            Self::HarmonicConventional => 2.0 * harmonic(x, y),
            Self::Logarithmic => {
                if x == 0.0 || y == 0.0 {
                    return 0.0;
                }
                let a = 0.5 * (x + y);
                // g(r) is even; |r| makes the value exactly symmetric.
                let r = (x - y).abs() / (x + y);
                if (x - y).abs() < DIAGONAL_TOL * x.max(y) {
                    a * (1.0 - r * r / 3.0)
                } else {
                    a * r / r.atanh()
                }
            }
            Self::PhiPrime(g) => {
                if x == 0.0 || y == 0.0 {
                    if g.singular_at_zero() {
                        return 0.0;
                    }
                    if x == y {
                        return 1.0 / g.d2(0.0);
                    }
                }
                if (x - y).abs() < PARTIAL_SERIES_TOL * x.max(y) && x > 0.0 && y > 0.0 {
                    let (avg, _, _) = phi_prime_integrals(g.as_ref(), x, y);
                    1.0 / avg
                } else {
                    (x - y) / (g.d1(x) - g.d1(y))
                }
            }
        }
    }

    /// `(∂θ/∂x, ∂θ/∂y)` at `(x, y)`.
    ///
    /// Means whose derivatives blow up on the boundary return
    /// [`Error::BoundarySingularity`] when `xy = 0`.
    pub fn partials(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        check_args(x, y)?;
        let boundary = x == 0.0 || y == 0.0;
        match self {
            Self::Arithmetic => Ok((0.5, 0.5)),
            Self::Geometric => {
                if boundary {
                    return Err(Error::BoundarySingularity { x, y });
                }
                let s = (y / x).sqrt();
                Ok((0.5 * s, 0.5 / s))
            }
            Self::Harmonic | Self::HarmonicConventional => {
                if x == 0.0 && y == 0.0 {
                    return Err(Error::BoundarySingularity { x, y });
                }
                let scale = if matches!(self, Self::Harmonic) { 1.0 } else { 2.0 };
                let s = (x + y) * (x + y);
                Ok((scale * y * y / s, scale * x * x / s))
            }
            Self::Logarithmic => {
                if boundary {
                    return Err(Error::BoundarySingularity { x, y });
                }
                if x < y {
                    let (dy, dx) = self.partials(y, x)?;
                    return Ok((dx, dy));
                }
                let r = (x - y) / (x + y);
                let (g, dg) = log_mean_profile(r);
                Ok((0.5 * (g + (1.0 - r) * dg), 0.5 * (g - (1.0 + r) * dg)))
            }
            Self::PhiPrime(gen) => {
                if boundary {
                    if gen.singular_at_zero() {
                        return Err(Error::BoundarySingularity { x, y });
                    }
                    if x == y {
                        let c = gen.d2(0.0);
                        let d = -0.5 * gen.d3(0.0) / (c * c);
                        return Ok((d, d));
                    }
                }
                if !boundary && (x - y).abs() < PARTIAL_SERIES_TOL * x.max(y) {
                    let (avg, bx, by) = phi_prime_integrals(gen.as_ref(), x, y);
                    let a2 = avg * avg;
                    Ok((-bx / a2, -by / a2))
                } else {
                    let delta = gen.d1(x) - gen.d1(y);
                    let d2 = delta * delta;
                    Ok((
                        (delta - (x - y) * gen.d2(x)) / d2,
                        (-delta + (x - y) * gen.d2(y)) / d2,
                    ))
                }
            }
        }
    }
}

fn check_args(x: f64, y: f64) -> Result<()> {
    if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mean arguments must be finite and nonnegative, got ({x}, {y})"
        )));
    }
    Ok(())
}

fn harmonic(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        0.0
    } else {
        x * y / (x + y)
    }
}

/// `g(r) = r / atanh(r)` and `g'(r)`, where the logarithmic mean equals
/// `((x + y)/2) g((x − y)/(x + y))`.
fn log_mean_profile(r: f64) -> (f64, f64) {
    if r.abs() < PARTIAL_SERIES_TOL {
        let r2 = r * r;
        let g = 1.0
            + r2 * (-1.0 / 3.0
                + r2 * (-4.0 / 45.0
                    + r2 * (-44.0 / 945.0 + r2 * (-428.0 / 14175.0 + r2 * (-10196.0 / 467775.0)))));
        let dg = r
            * (-2.0 / 3.0
                + r2 * (-16.0 / 45.0
                    + r2 * (-264.0 / 945.0 + r2 * (-3424.0 / 14175.0 + r2 * (-101960.0 / 467775.0)))));
        (g, dg)
    } else {
        let at = r.atanh();
        (r / at, (at - r / (1.0 - r * r)) / (at * at))
    }
}

/// Cancellation-free integrals for the φ'-mean near its diagonal:
/// `A = ∫₀¹ φ''(y + s(x−y)) ds`, `Bx = ∫₀¹ s φ'''(·) ds`, `By = ∫₀¹ (1−s) φ'''(·) ds`,
/// so that `θ = 1/A`, `∂θ/∂x = −Bx/A²`, `∂θ/∂y = −By/A²`.
fn phi_prime_integrals(g: &dyn ConvexGenerator, x: f64, y: f64) -> (f64, f64, f64) {
    // Canonical argument order keeps the result exactly symmetric.
    if x < y {
        let (a, by, bx) = phi_prime_integrals(g, y, x);
        return (a, bx, by);
    }
    let mut a = 0.0;
    let mut bx = 0.0;
    let mut by = 0.0;
    for &(s, w) in &GAUSS_LEGENDRE_8 {
        let t = y + s * (x - y);
        a += w * g.d2(t);
        let third = g.d3(t);
        bx += w * s * third;
        by += w * (1.0 - s) * third;
    }
    (a, bx, by)
}
