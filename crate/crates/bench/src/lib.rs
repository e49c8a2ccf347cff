//! Criterion benchmarks for `bregman-vi`: prox maps, the two solvers and the
//! oracle checkers. Run with `cargo bench -p bregman-vi-bench`.
