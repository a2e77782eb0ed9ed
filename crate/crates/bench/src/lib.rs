//! Benchmarks for the master-equation kernels; see `benches/`.
