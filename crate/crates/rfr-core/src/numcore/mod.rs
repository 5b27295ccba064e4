//! Dense linear-algebra solves and a self-contained LP solver.
//!
//! Problem sizes in this crate are desk-scale (hundreds of rows), so the
//! implementations are plain dense algorithms: LU with partial pivoting
//! and a two-phase primal simplex. Solver instances hold no shared state
//! and may run concurrently.

mod linalg;
mod simplex;

pub use linalg::{lu_solve, LuFactors, Mat};
pub use simplex::{LpConfig, LpProblem, LpSolution, LpStatus, Sense};
