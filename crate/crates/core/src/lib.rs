//! Dissatisfaction and cohesion fields of transferable-utility games and the
//! gradient flow they induce on the preimputation hyperplane.
//!
//! The cohesion field `phi = -grad theta` pushes every preimputation toward the
//! core; [`flow`] integrates it three ways, [`collections`] provides the LP
//! oracles used to check where trajectories end up, and [`relations`] relates
//! the dissatisfaction field to the outvoting relation.
//!
//! ```
//! use cohesion::fields::evaluate;
//! use cohesion::flow::{integrate_exact, FlowConfig, Status};
//! use cohesion::game::gen_symmetric;
//! use cohesion::Preimputation;
//!
//! let g = gen_symmetric(3, -1.5)?;
//! assert_eq!(evaluate(&g, &[-4.0, -3.0, 7.0]).theta, 8.5);
//! let x0 = Preimputation::new(vec![-4.0, -3.0, 7.0])?;
//! let traj = integrate_exact(&g, &x0, &FlowConfig::default())?;
//! assert_eq!(traj.status, Status::ReachedCore);
//! # Ok::<(), cohesion::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_clamp)]

pub mod collections;
pub mod error;
pub mod fields;
pub mod flow;
pub mod game;
pub mod lp;
pub mod relations;

pub use error::{Error, Result};
pub use game::{Coalition, CoalitionCollection, Game, Preimputation, WeightedCollection};
