//! Criterion benchmarks for the alignment, decomposition and model-fitting kernels.
