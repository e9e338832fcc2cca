//! Experimental design for panel data.
//!
//! Chooses which units to treat and how to weight treated and control
//! units so that a synthetic-control style estimator has small error,
//! then estimates effects, runs permutation inference and drives the
//! simulation studies used to compare designs.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod mip;
pub mod objectives;
pub mod panel;
pub mod qp;
pub mod selector;
pub mod simlab;
pub mod weights;

pub use error::{Error, Result};
pub use objectives::Variant;
pub use panel::{load_panel, Panel, TreatmentScenario};
pub use selector::{select_design, Design, DesignProblem, SearchMode};
pub use weights::{WeightConstraints, WeightSolution, Weights};
