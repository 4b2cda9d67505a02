//! Criterion benchmarks for the statevector and linear-algebra kernels.
//! Run with `cargo bench -p adapt-bench`.
