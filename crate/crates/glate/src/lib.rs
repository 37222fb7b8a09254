//! Grouped LATE estimation from many discrete instruments.
//!
//! The pipeline has two stages. First, instrument-specific treatment
//! propensity scores are clustered into *clubs* via Ward-linkage
//! agglomerative hierarchical clustering, with the club count chosen by
//! iterated F tests ([`clubs`]). Second, club pairs are formed and their
//! LATEs estimated by single-IV, union-2SLS, and median estimators, with a
//! reduced-form clustering step that selects the plurality-valid instrument
//! subset inside each club ([`late`]). A simulation engine ([`sim`])
//! generates the reference data-generating process with full potential
//! outcomes and runs the Monte Carlo harness.

pub mod ahc;
pub mod clubs;
pub mod data;
pub mod dist;
pub mod error;
pub mod late;
pub mod pipeline;
pub mod regress;
pub mod sim;

pub use error::{Error, Result};
