//! Fixtures shared by the benchmarks.

use augdec::experiments::generators;
use augdec::model::{IterateState, Problem, SolverParams};
use augdec::solvers::{BlockSolvers, InnerChoice};

/// Exchange instance at desk scale with its solvers, warmed up by a few
/// iterations so the benchmarked step is not the trivial first one.
pub fn exchange_fixture(inner: InnerChoice) -> (Problem, SolverParams, BlockSolvers, IterateState) {
    let problem = generators::gen_exchange(5, 100, 80, 1).expect("exchange instance").problem;
    let params = SolverParams::new(10.0, 10.0, 1, 1e-8).expect("params");
    let solvers = BlockSolvers::for_ada(&problem, &params, inner).expect("solvers");
    let mut state = IterateState::zeros(&problem);
    for _ in 0..5 {
        state = augdec::ada::ada_step(&state, &problem, &params, &solvers).expect("step").0;
    }
    (problem, params, solvers, state)
}
