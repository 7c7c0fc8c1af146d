//! Configuration, experiment orchestration and file formats for
//! `bilevel-core`.

pub mod commands;
pub mod config;
pub mod gradcheck;
pub mod output;
