//! Symmetries of Itô stochastic differential equations: determining
//! equations, their verification and solution, the link with the
//! Fokker–Planck equation, and Monte-Carlo cross-checks.

#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod detgen;
pub mod dsl;
pub mod expr;
pub mod kpz;
pub mod linalg;
#[cfg(feature = "mc")]
pub mod mcsim;
pub mod model;
pub mod solve;
pub mod verify;
