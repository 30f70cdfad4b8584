//! Uncertainty-aware segmentation of tabletop scenes.
//!
//! A promptable segmenter (here a ground-truth oracle with configurable
//! failure modes) is queried repeatedly to build a set of weighted
//! segmentation hypotheses per ambiguous region. The hypotheses are lifted to
//! point clouds, and pushes chosen to discriminate between them are used to
//! score each hypothesized object by how rigidly it moved.
//!
//! Geometry and metrics are generic over [`num::Real`]; the pipeline runs on
//! `f64` and the aliases below name the concrete types it uses.

pub mod assignment;
pub mod belief;
pub mod geometry;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod num;
pub mod planner;
pub mod scene;
pub mod segmenter;
pub mod uncos;
pub mod update;

pub type Points = geometry::PointSet<f64>;
pub type TablePlane = geometry::Plane<f64>;
pub type PlaneFit = geometry::PlaneFit<f64>;
pub type Transform = geometry::RigidTransform<f64>;
pub type Registration = geometry::Registration<f64>;
pub type Evaluation = metrics::SegEval<f64>;
pub type PairScore = metrics::PairScore<f64>;
