//! Unit-capacity maximum s-t flow, minimum s-t cut and bipartite
//! b-matching, solved by an electrical-flow-guided primal-dual path
//! follower with stretch-boost perturbation and auxiliary-arc
//! preconditioning, plus exact combinatorial rounding.
//!
//! The crate is organized around the pipeline
//! reduce -> path-follow -> round -> augment:
//!
//! - [`graph`]: multigraphs, sigma-flows, cuts, decomposition
//! - [`electrical`]: Laplacian solvers, electrical flows, energy
//! - [`reduction`]: max-flow <-> b-matching <-> min-cost flow encodings
//! - [`ipm`]: the primal-dual central-path follower
//! - [`accel`]: congestion smoothness, stretch-boosts, improvement phases
//! - [`precond`]: auxiliary arcs, freezing, fixing, embedding certificate
//! - [`rounding`]: fractional-to-integral matching and flow rounding
//! - [`oracles`]: independent reference solvers used for cross-checking
//! - [`pipeline`]: binary-search drivers assembling everything
//! - [`report`]: run telemetry and trace re-verification

pub mod accel;
pub mod config;
pub mod corpus;
pub mod electrical;
pub mod error;
pub mod graph;
pub mod io;
pub mod ipm;
pub mod oracles;
pub mod pipeline;
pub mod precond;
pub mod reduction;
pub mod report;
pub mod rounding;

pub use config::{Config, SolverKind};
pub use error::{Error, Result};
pub use graph::{DemandVector, DirectedMultigraph, FlowAssignment};
pub use pipeline::SolveMode;
pub use reduction::{BMatchingInstance, MinCostInstance};
pub use report::{RunReport, Telemetry};
