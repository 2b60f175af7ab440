//! Langevin dynamics on the probability simplex of a weighted graph,
//! equipped with a finite-state Wasserstein-2 metric.

pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod markov;
pub mod mean;
pub mod metric;
pub mod quad;
pub mod sampling;
pub mod twopoint;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeField, EdgeSpec, GraphSpec, VolumeVector, WeightedGraph};
pub use mean::{generator, ConvexGenerator, CustomGenerator, KlGenerator, MeanFunction, QuadraticGenerator};
pub use metric::{
    EdgeMeans, Geometry, ProbabilityVector, SpectralData, TangentVector, WeightedLaplacian,
};
pub use calculus::{SimplexFunctional, SimplexVectorFunctional};
pub use dynamics::{BoundaryPolicy, EdgeNoise, NoiseStream, RunSummary, SdeConfig, Trajectory};
pub use markov::{PhiDivergence, QMatrix, WassersteinQMatrix};
pub use twopoint::{StationaryDensity, TwoPointModel};
