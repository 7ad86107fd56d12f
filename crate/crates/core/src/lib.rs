//! Deterministic mirror systems for random reflection kernels.
//!
//! The library synthesizes explicit mirror scenes (segments and ellipse arcs
//! below the line `y = 0`) whose billiard return map reproduces a prescribed
//! reflection kernel, and verifies the construction by exact ray tracing and
//! seeded Monte Carlo: kernel fidelity in total variation, detailed balance,
//! invariant-measure preservation and time reversibility.

pub mod geometry;
pub mod discretizer;
pub mod kernels;
pub mod packer;
pub mod render;
pub mod scene;
pub mod synth;
pub mod tracer;
pub mod verify;
pub mod transposer;

pub use geometry::{Direction, EllipseArc, Point, Ray, SegmentMirror};
