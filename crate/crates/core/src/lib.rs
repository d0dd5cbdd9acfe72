//! Explaining why a robot could not pick up an object.
//!
//! The crate builds semantic scene graphs of cluttered tabletop scenes,
//! derives the failure causes for a desired object, ranks the relations
//! that mention it with three one-vs-one preference forests, and renders
//! templated explanations in four variants (`none`, `cb`, `ssg`, `ssg-r`).
//! An evaluation harness scores simulated responders on failure and
//! solution identification.
//!
//! Module map:
//!
//! - [`scene`]: scene graphs, vocabularies, failure taxonomy and the scene JSON format.
//! - [`synth`]: 2.5-D tabletop generator with a geometric predicate oracle.
//! - [`forest`]: CART random forest shared by the predicate model and the ranker.
//! - [`predicate`]: predicate and attribute classification from boxes and labels.
//! - [`ranking`]: pairwise relation ranking.
//! - [`explain`]: explanation templates.
//! - [`eval`]: FId/SId scoring and condition sweeps.
//! - [`cli`]: the `pickwhy` command line.

pub mod cli;
pub mod error;
pub mod eval;
pub mod explain;
pub mod forest;
pub mod predicate;
pub mod ranking;
pub mod scene;
pub mod synth;

mod fileio;
pub mod seed;

pub use error::{Error, Result};

/// Version stamped into every file artifact. Loaders reject anything else.
pub const FORMAT_VERSION: u32 = 1;
