//! Drift and edge noise of the gradient drift-diffusion on the simplex and
//! its Euler–Maruyama discretization.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::SimplexFunctional;
use crate::error::{Error, Result};
use crate::metric::Geometry;

/// What to do when an Euler–Maruyama step leaves the interior margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Clamp to `[ε, 1 − (n−1)ε]` and push the mass error back onto the
    /// unclamped coordinates.
    #[default]
    ReflectEpsilon,
    /// Redraw with half the time step until every coordinate is at least `ε`.
    RejectHalve,
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

fn default_retries() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Record every `record_every`-th state in the trajectory.
    #[serde(default = "default_stride")]
    pub record_every: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

impl SdeConfig {
    pub fn new(beta: f64, dt: f64, steps: usize, seed: u64) -> Self {
        Self {
            beta,
            dt,
            steps,
            seed,
            boundary: BoundaryPolicy::default(),
            epsilon: default_epsilon(),
            record_every: default_stride(),
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be finite and nonnegative, got {}", self.beta));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.epsilon > 0.0 && (n as f64) * self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1/n), got {}", self.epsilon));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Brownian increments for one step: `ΔB_ij` and `ΔB_ji` for every edge
/// `(i, j)` with `i < j`, each `N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeNoise {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub dt: f64,
}

impl EdgeNoise {
    pub fn zeros(edges: usize, dt: f64) -> Self {
        Self {
            forward: vec![0.0; edges],
            backward: vec![0.0; edges],
            dt,
        }
    }

    /// Draws `2m` independent normals in (edge, direction) order.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, edges: usize, dt: f64) -> Self {
        let sd = dt.sqrt();
        let mut forward = Vec::with_capacity(edges);
        let mut backward = Vec::with_capacity(edges);
        for _ in 0..edges {
            forward.push(sd * rng.sample::<f64, _>(StandardNormal));
            backward.push(sd * rng.sample::<f64, _>(StandardNormal));
        }
        Self { forward, backward, dt }
    }

    /// `ΔB_ij − ΔB_ji`.
    pub fn difference(&self, e: usize) -> f64 {
        self.forward[e] - self.backward[e]
    }

    /// The antisymmetric edge increment `ΔB^E_ij = (ΔB_ij − ΔB_ji)/√2`.
    pub fn edge_increment(&self, e: usize) -> f64 {
        self.difference(e) * FRAC_1_SQRT_2
    }
}

/// Deterministic per-step random streams for one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub member: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, member: u64) -> Self {
        Self { seed, member }
    }

    pub fn rng(&self, step: u64, attempt: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for (k, word) in [self.seed, self.member, step, attempt].iter().enumerate() {
            key[8 * k..8 * k + 8].copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    pub fn edge_noise(&self, step: u64, attempt: u64, edges: usize, dt: f64) -> EdgeNoise {
        EdgeNoise::sample(&mut self.rng(step, attempt), edges, dt)
    }
}

/// Per-edge drift flux `ω θ (∂_j − ∂_i)[V + β log(Π^{1/2}/θ)]`, oriented `i → j`.
pub fn drift_flux(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    beta: f64,
    p: &DVector<f64>,
) -> Result<Vec<f64>> {
    geom.check_interior(p)?;
    let gv = potential.gradient(p)?;
    let means = geom.edge_means(p)?;
    let glp = if beta == 0.0 {
        None
    } else {
        Some(geom.grad_log_pseudo_det(p)?)
    };
    Ok(geom
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let th = means.theta[k];
            let mut flux = e.w * th * (gv[e.j] - gv[e.i]);
            if let Some(glp) = &glp {
                flux += beta * e.w * (0.5 * th * (glp[e.j] - glp[e.i]) - means.edge_derivative(k));
            }
            flux
        })
        .collect())
}

fn scatter(geom: &Geometry, flux: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(geom.n());
    for (e, f) in geom.graph().edges().iter().zip(flux) {
        out[e.i] += f;
        out[e.j] -= f;
    }
    out
}

/// `d_i = Σ_{j∈N(i)} ω_ij θ_ij (∂_j − ∂_i)[V + β log(Π^{1/2}/θ_ij)]`.
pub fn drift(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    beta: f64,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(scatter(geom, &drift_flux(geom, potential, beta, p)?))
}

/// Per-edge noise flux `√(β ω θ) (ΔB_ij − ΔB_ji)`.
pub fn noise_flux(geom: &Geometry, beta: f64, p: &DVector<f64>, noise: &EdgeNoise) -> Result<Vec<f64>> {
    geom.check_dim(p)?;
    if noise.forward.len() != geom.graph().edge_count() {
        return Err(Error::DimensionMismatch {
            expected: geom.graph().edge_count(),
            got: noise.forward.len(),
        });
    }
    let theta = geom.edge_theta(p);
    Ok(geom
        .graph()
        .edges()
        .iter()
        .zip(&theta)
        .enumerate()
        .map(|(k, (e, th))| (beta * e.w * th).sqrt() * noise.difference(k))
        .collect())
}

/// `η_i = √β Σ_{j∈N(i)} √(ω_ij θ_ij) (ΔB_ij − ΔB_ji)`.
pub fn noise_increment(geom: &Geometry, beta: f64, p: &DVector<f64>, noise: &EdgeNoise) -> Result<DVector<f64>> {
    Ok(scatter(geom, &noise_flux(geom, beta, p, noise)?))
}

/// The unprojected Euler–Maruyama update `p + d·dt + η`.
pub fn em_increment(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    beta: f64,
    p: &DVector<f64>,
    noise: &EdgeNoise,
) -> Result<DVector<f64>> {
    let mut flux = drift_flux(geom, potential, beta, p)?;
    if beta > 0.0 {
        for (f, n) in flux.iter_mut().zip(noise_flux(geom, beta, p, noise)?) {
            *f = *f * noise.dt + n;
        }
    } else {
        flux.iter_mut().for_each(|f| *f *= noise.dt);
    }
    Ok(scatter(geom, &flux))
}

/// Clamps into `[ε, 1 − (n−1)ε]` and restores `Σp = 1` by shifting the
/// unclamped coordinates. Returns whether anything was clamped.
pub fn reflect_epsilon(p: &mut DVector<f64>, epsilon: f64) -> bool {
    let n = p.len();
    let lo = epsilon;
    let hi = 1.0 - (n as f64 - 1.0) * epsilon;
    let mut pinned = vec![false; n];
    let mut hit = false;
    for _ in 0..=n {
        let mut changed = false;
        for (k, x) in p.iter_mut().enumerate() {
            if *x < lo || x.is_nan() {
                *x = lo;
                pinned[k] = true;
                changed = true;
            } else if *x > hi {
                *x = hi;
                pinned[k] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        hit = true;
        let free: Vec<usize> = (0..n).filter(|&k| !pinned[k]).collect();
        let excess = p.sum() - 1.0;
        if free.is_empty() {
            let share = excess / n as f64;
            p.iter_mut().for_each(|x| *x -= share);
            break;
        }
        let share = excess / free.len() as f64;
        for &k in &free {
            p[k] -= share;
        }
    }
    hit
}

/// Result of one accepted Euler–Maruyama step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    pub dt: f64,
    pub boundary_hit: bool,
}

/// One Euler–Maruyama step from `p`, drawing noise from `stream` at `step`.
pub fn em_step(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    cfg: &SdeConfig,
    p: &DVector<f64>,
    stream: &NoiseStream,
    step: u64,
) -> Result<StepOutcome> {
    let m = geom.graph().edge_count();
    let draw = |attempt: u64, dt: f64| {
        if cfg.beta > 0.0 {
            stream.edge_noise(step, attempt, m, dt)
        } else {
            EdgeNoise::zeros(m, dt)
        }
    };
    match cfg.boundary {
        BoundaryPolicy::ReflectEpsilon => {
            let noise = draw(0, cfg.dt);
            let mut q = p + em_increment(geom, potential, cfg.beta, p, &noise)?;
            let boundary_hit = reflect_epsilon(&mut q, cfg.epsilon);
            Ok(StepOutcome {
                state: q,
                dt: cfg.dt,
                boundary_hit,
            })
        }
        BoundaryPolicy::RejectHalve => {
            let mut dt = cfg.dt;
            for attempt in 0..=cfg.max_retries {
                let noise = draw(attempt as u64, dt);
                let q = p + em_increment(geom, potential, cfg.beta, p, &noise)?;
                if q.iter().all(|x| *x >= cfg.epsilon) {
                    return Ok(StepOutcome {
                        state: q,
                        dt,
                        boundary_hit: attempt > 0,
                    });
                }
                dt *= 0.5;
            }
            Err(Error::StepFailure {
                step: step as usize,
                retries: cfg.max_retries,
                state: p.iter().copied().collect(),
            })
        }
    }
}

/// Summary of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_state: Vec<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub boundary_hits: usize,
    pub max_mass_deviation: f64,
}

/// Advances `cfg.steps` steps from `p0`, calling `observe(step, t, p, hit)`
/// for the initial state (`step = 0`, `hit = false`) and after every step.
pub fn run<O>(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    cfg: &SdeConfig,
    p0: &DVector<f64>,
    member: u64,
    mut observe: O,
) -> Result<RunSummary>
where
    O: FnMut(usize, f64, &DVector<f64>, bool),
{
    cfg.validate(geom.n())?;
    geom.check_interior(p0)?;
    let stream = NoiseStream::new(cfg.seed, member);
    let mut p = p0.clone();
    let mut t = 0.0;
    let mut hits = 0;
    let mut max_dev = (p.sum() - 1.0).abs();
    observe(0, t, &p, false);
    for step in 1..=cfg.steps {
        let out = em_step(geom, potential, cfg, &p, &stream, step as u64)?;
        if out.state.iter().any(|x| !x.is_finite()) {
            return Err(Error::StepFailure {
                step,
                retries: 0,
                state: p.iter().copied().collect(),
            });
        }
        p = out.state;
        t = match cfg.boundary {
            BoundaryPolicy::ReflectEpsilon => step as f64 * cfg.dt,
            BoundaryPolicy::RejectHalve => t + out.dt,
        };
        hits += usize::from(out.boundary_hit);
        max_dev = max_dev.max((p.sum() - 1.0).abs());
        observe(step, t, &p, out.boundary_hit);
    }
    Ok(RunSummary {
        final_state: p.iter().copied().collect(),
        final_time: t,
        steps: cfg.steps,
        boundary_hits: hits,
        max_mass_deviation: max_dev,
    })
}

/// Recorded states of one run, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Whether a boundary intervention happened since the previous row.
    pub boundary_hit: Vec<bool>,
    pub seed: u64,
    pub member: u64,
    pub summary: RunSummary,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.n..(row + 1) * self.n]
    }

    /// Coordinate `k` of every recorded state.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.states.iter().skip(k).step_by(self.n).copied().collect()
    }

    /// Every `stride`-th row, each flagged if any hit occurred since the
    /// previous kept row.
    pub fn thinned(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let mut out = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            boundary_hit: Vec::new(),
            n: self.n,
            seed: self.seed,
            member: self.member,
            summary: self.summary.clone(),
        };
        let mut pending = false;
        for row in 0..self.len() {
            pending |= self.boundary_hit[row];
            if row % stride == 0 {
                out.times.push(self.times[row]);
                out.states.extend_from_slice(self.state(row));
                out.boundary_hit.push(pending);
                pending = false;
            }
        }
        out
    }
}

/// Runs and records every `cfg.record_every`-th state (plus the initial state).
pub fn simulate(
    geom: &Geometry,
    potential: &dyn SimplexFunctional,
    cfg: &SdeConfig,
    p0: &DVector<f64>,
    member: u64,
) -> Result<Trajectory> {
    let stride = cfg.record_every.max(1);
    let rows = cfg.steps / stride + 1;
    let mut times = Vec::with_capacity(rows);
    let mut states = Vec::with_capacity(rows * geom.n());
    let mut flags = Vec::with_capacity(rows);
    let mut pending_hit = false;
    let summary = run(geom, potential, cfg, p0, member, |step, t, p, hit| {
        pending_hit |= hit;
        if step % stride == 0 {
            times.push(t);
            states.extend(p.iter());
            flags.push(pending_hit);
            pending_hit = false;
        }
    })?;
    Ok(Trajectory {
        n: geom.n(),
        times,
        states,
        boundary_hit: flags,
        seed: cfg.seed,
        member,
        summary,
    })
}
