//! Distributed learning of stochastic Nash equilibria in locally coupled network games.
//!
//! Each player only sees its in-neighbors' decisions, keeps local copies of
//! them, and does not know the parameters of its own payoff. The crate provides
//! the fixed-point seeker, the online least-squares estimator, an inexact inner
//! solver, a Douglas-Rachford variant for shared affine constraints, and
//! centralized oracles used to validate all of it.

pub mod estimator;
pub mod games;
pub mod gnep;
pub mod harness;
pub mod inexact;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod seeker;
pub mod topology;

pub use games::{BoxSet, GameInstance, NoiseModel};
pub use topology::{NetworkTopology, StructuralMaps};
