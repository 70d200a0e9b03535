//! Benchmarks for the solver pipeline.
