//! Numerical core of the alloop active-learning workflow: periodic geometry,
//! frame I/O, reference potentials, the linear surrogate, the MD engine and
//! structure builders.

pub mod calc;
pub mod elements;
pub mod extxyz;
pub mod frame;
pub mod geometry;
pub mod md;
pub mod oracle;
pub mod parallel;
pub mod potential;
pub mod report;
pub mod seed;
pub mod structgen;
pub mod structure;
pub mod units;

pub use frame::{Dataset, DatasetStats, LabeledFrame};
pub use geometry::{Cell, Vec3};
pub use structure::AtomicConfiguration;
