//! Criterion benchmarks for urnlab; run with `cargo bench -p urnlab-bench`.
