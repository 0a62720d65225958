//! Spin-field and moving-frame representations of submanifolds of the flat
//! space `R^{1,9}`.

// Tensor code indexes several arrays with the same loop variable.
#![allow(clippy::needless_range_loop)]

pub mod clifford;
pub mod expr;
pub mod spin_field;
pub mod geometry;
pub mod solutions;
pub mod immersion;
pub mod job;
