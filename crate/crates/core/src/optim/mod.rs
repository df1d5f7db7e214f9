//! Numerical optimization: bounded least squares and a Gauss-Newton SQP for
//! optimal control problems.

pub mod lsq;
pub mod sqp;

pub use lsq::{
    solve_bounded_lsq, solve_bounded_lsq_warm, solve_box_qp, BoundFlag, BoundedLsqProblem, BoundedLsqSolution,
    BoxQpSolution,
};
pub use sqp::{solve_nlp, solve_nlp_with, NlpOptions, NlpProblem, NlpSolution, OcpModel, SolveStatus, SqpIterate};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum QpError {
    #[error("problem dimensions are inconsistent")]
    Dimension,
    #[error("lower bound exceeds upper bound at index {0}")]
    InconsistentBounds(usize),
    #[error("Hessian is not positive definite on the free set")]
    NotPositiveDefinite,
    #[error("active-set iteration did not terminate after {changes} changes")]
    NumericFail { changes: usize },
}
