//! Simulation and evaluation engine for craniofacial superimposition (CFS).
//!
//! The crate models populations of paired skull (bone) and face (skin) 3D
//! landmarks, simulates randomized 2D photographs of them, overlays a skull
//! onto a photograph by estimating a perspective camera (skull-face overlay,
//! SFO), and measures identification power with N×N ranking experiments.
//!
//! The pipeline, bottom up:
//!
//! - [`geometry`]: points, rigid poses, the pinhole camera and PCA alignment.
//! - [`landmarks`]: the anatomical landmark registry and experiment sets.
//! - [`population`] and [`generator`]: subject records, CSV ingestion,
//!   outlier filtering, population statistics and a synthetic generator.
//! - [`fstt`]: predicting skin landmarks from bone under a soft-tissue regime.
//! - [`photo`]: randomized photograph simulation.
//! - [`solver`]: the overlay estimator and its similarity score.
//! - [`harness`]: gallery construction, comparison matrices and metrics.
//! - [`config`] and [`report`]: experiment config files and report output.

pub mod config;
pub mod error;
pub mod fstt;
pub mod generator;
pub mod geometry;
pub mod harness;
pub mod landmarks;
pub mod photo;
pub mod population;
pub mod report;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{project, AlignmentTransform, CameraModel, Point2, Point3, RigidPose};
pub use landmarks::{LandmarkId, LandmarkSet, Registry};
