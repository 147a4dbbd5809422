//! Joint temporal and viewpoint alignment of 3D skeleton sequences.
//!
//! The crate is organised as a pipeline: [`skeleton`] ingests and blocks
//! sequences, [`geometry`] simulates camera viewpoints, [`encoder`] turns
//! blocks into feature columns, [`alignment`] runs the soft-min dynamic
//! programs, and [`fewshot`] wraps them into episodic evaluation.

pub mod alignment;
pub mod config;
pub mod diagnostics;
pub mod encoder;
pub mod fewshot;
pub mod geometry;
pub mod skeleton;
