//! Dense solvers: LP, strictly convex QP, Lyapunov and LQ synthesis.

pub mod lp;
pub mod lqr;
pub mod lyap;
pub mod qp;

pub use crate::linalg::{norm2 as matrix_norm2, spectral_radius};
pub use lp::{solve_lp, verify_lp_certificate, LpProblem, LpSolution, LpStatus, VertexWalker};
pub use lqr::{dlqr, riccati_residual, Lqr, LqrOptions};
pub use lyap::{dlyap_residual, solve_dlyap};
pub use qp::{kkt_residual, solve_qp, QpProblem, QpSolution};
