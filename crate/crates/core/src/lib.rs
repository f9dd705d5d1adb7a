//! Exact solver stack for the multi-agent moving-target traveling salesman
//! problem.
//!
//! Agents leave a shared depot at time zero, must intercept every moving
//! target once inside one of its time windows, and return before the horizon;
//! the total travelled distance is minimized. Two mixed-integer conic
//! formulations are built over a common [`conic::ConicModel`]: the big-M
//! baseline with per-agent variables and the agent-free formulation that
//! encodes visit times and positions in edge-wise perspective variables. Both
//! are solved by [`bnb::solve_mip`] and cross-checked against the exhaustive
//! [`oracle`].

pub mod bench;
pub mod bnb;
pub mod conic;
pub mod error;
pub mod formulation;
pub mod generate;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod recovery;
pub mod socp;

pub use bnb::{gap_percent, solve_mip, BnbOptions, NodeSelection, SolveReport, SolveStatus};
pub use conic::{ConicModel, Label, Role, VarRef};
pub use error::{BenchError, ConicError, GenerateError, ModelError, OracleError, RecoveryError};
pub use formulation::{build_baseline, build_model, build_new_micp, FormulationKind};
pub use graph::{build_graph, NodeId, SegmentGraph};
pub use model::{load_instance, save_instance, validate_instance, Instance, Point2, Segment, SegmentSpec, Target};
pub use recovery::{recover, validate_solution, Solution, Tour, Visit};
pub use socp::{solve_relaxation, RelaxResult, RelaxStatus, SolverOptions};
