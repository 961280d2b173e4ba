//! Sleep-control policies for a cluster of 5G cells.
//!
//! Each cell can put its gNB to sleep for a time segment and hand its users to
//! an always-on ng-eNB. The crate models the residual-user process, the
//! anticipated power and cost of a segment, and several controllers:
//! an exact joint MDP solution, a myopic greedy rule, an index policy built
//! from a decoupled single-cell problem, and two state-independent baselines.
//! A segment-level simulator and an analytic lower bound tie them together.

pub mod arrivals;
pub mod baselines;
pub mod cluster;
pub mod config;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod index;
pub mod joint_mdp;
pub mod model;
pub mod report;
pub mod sim;

pub use cluster::Cluster;
pub use error::{Error, Result};
pub use model::{
    ActionVector, ArrivalMixture, CellParams, CellState, ClusterConfig, ClusterState,
    CostFunction, PiecewiseLinear, PiecewiseSegment, PowerParams,
};
