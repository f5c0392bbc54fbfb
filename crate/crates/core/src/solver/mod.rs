//! Exact solvers: a dense simplex for LPs, a dual active-set method for
//! strictly convex QPs, the LCQP driver and branch-and-bound for MI-LCQPs.

pub mod active_set;
pub mod lcqp;
pub mod lp;
pub mod milcqp;

pub use lcqp::{solve_lcqp, SolveResult, Status, FEASIBILITY_TOLERANCE, KKT_TOLERANCE};
pub use milcqp::{
    brute_force_milcqp, evaluate_targets, solve_milcqp, TargetLabels, DEFAULT_NODE_BUDGET,
};
