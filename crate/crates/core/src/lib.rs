//! Hierarchical semantic-tree anchoring for class-incremental learning.
//!
//! Features from a (synthetic, frozen) dual encoder pass through per-task
//! linear hierarchy modules, are summed, and are mapped by one shared linear
//! layer onto the Lorentz model of hyperbolic space. Entailment cones tie
//! each child embedding to its parent in a semantic tree, a hyperbolic
//! contrastive loss aligns images with class texts, and the shared layer's
//! gradient is projected onto the approximate null space of earlier tasks'
//! features so old outputs stay put.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`hyp_geom`] | Lorentz points, distance, exponential map, cones, gradients |
//! | [`semantic_tree`] | tree parsing/validation, coverage, task splits |
//! | [`synthetic_encoder`] | deterministic stand-in for the frozen encoders |
//! | [`anchoring_model`] | hierarchy modules and the shared mapper |
//! | [`losses`] | the training objective and its analytic gradient |
//! | [`null_space`] | covariance recursion, rank selection, projection |
//! | [`cil_harness`] | incremental training, evaluation, traversals |

pub mod anchoring_model;
pub mod cil_harness;
pub mod error;
pub mod hyp_geom;
pub mod losses;
pub mod null_space;
pub mod rng;
pub mod semantic_tree;
pub mod synthetic_encoder;

pub use error::{Error, Result};
