//! Criterion benchmarks for the simplex Langevin core; see `benches/`.
