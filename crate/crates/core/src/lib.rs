//! Core of the glassflow framework: typed payloads, the pipeline graph and
//! its execution engine, control blocks, native learners, and attribution
//! solvers.

pub mod control;
pub mod demo;
pub mod graph;
pub mod models;
pub mod payload;
pub mod xai;
