//! Two-stage distributionally robust model predictive control.
//!
//! A linear plant with polytopic state constraints is controlled by solving,
//! at every step, a min-max problem over a Wasserstein ball around the
//! empirical distribution of recent disturbances. State constraints are
//! softened by an exact-penalty recourse LP, the worst case is reformulated
//! into a finite convex problem, and that problem is solved by a
//! cutting-plane loop over support points and recourse dual vertices.
//!
//! Module map:
//!
//! - [`system`]: plant, lifted prediction matrices, Riccati ingredients, structural checks
//! - [`penalty`]: second-stage recourse LP and its dual vertices
//! - [`ambiguity`]: samples, transport costs, moment bounds
//! - [`reformulation`]: the dual reformulation and the inner worst-case evaluation
//! - [`convex`]: interior-point QP/SOCP solver
//! - [`cutting_plane`]: the per-step controller
//! - [`simulator`]: closed-loop Monte-Carlo runs and CSV logs
//! - [`analysis`]: stability constants, bounds and log audits
//! - [`config`] and [`cli`]: run configuration and the command implementations

pub mod ambiguity;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod convex;
pub mod cutting_plane;
pub mod error;
pub mod linalg;
pub mod penalty;
pub mod reformulation;
pub mod simulator;
pub mod system;

pub use error::{Error, Result};
