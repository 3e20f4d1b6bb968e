//! Continuous stochastic gradient (CSG) optimization.
//!
//! CSG keeps every integrand gradient it has ever sampled and, at each
//! iteration, recombines them with weights given by the measure of the
//! nearest-neighbor cell each sample owns around the current design.

pub mod bench;
pub mod color;
pub mod composite;
pub mod csg;
pub mod error;
pub mod history;
pub mod measures;
pub mod metric;
pub mod monitor;
pub mod neighbors;
pub mod weights;

pub use error::{CsgError, Result};
