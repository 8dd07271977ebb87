//! Fixtures shared by the benchmarks in `benches/`.

use stosqp_core::problems::builtin_problem;
use stosqp_core::solver::reference_kkt;
use stosqp_core::{Matrix, ProblemSpec, Vector};

/// A catalog problem with its reference KKT matrix and the Newton right-hand
/// side at the start point.
pub struct Fixture {
    pub problem: ProblemSpec,
    pub kkt: Matrix,
    pub rhs: Vector,
}

pub fn fixture(name: &str) -> Fixture {
    let problem = builtin_problem(name).expect("catalog problem");
    let kkt = reference_kkt(&problem).expect("known solution");
    let rhs = -problem.kkt_vector(&problem.x0, &problem.lambda0);
    Fixture { problem, kkt, rhs }
}
