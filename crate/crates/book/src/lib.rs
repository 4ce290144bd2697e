//! The guide's code listings, compiled and run as doctests.
//!
//! mdbook cannot link external crates when testing, so each chapter is
//! included here as the docs of an empty module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("../../../book/src/broadcasting.md")]
pub mod broadcasting {}
#[doc = include_str!("../../../book/src/merging.md")]
pub mod merging {}
#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}
#[doc = include_str!("../../../book/src/movielens.md")]
pub mod movielens {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
