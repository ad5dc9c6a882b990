//! Metric regularity, openness and Lipschitz-like moduli of set-valued maps
//! sampled on finite grids, with checkers for composition and implicit-map
//! theorems, a discrete Ekeland solver, and coincidence-point bounds.

pub mod coincidence;
pub mod composition;
pub mod ekeland;
pub mod error;
pub mod formula;
pub mod implicit;
pub mod metric;
pub mod moduli;
pub mod setvalued;

pub use error::{Error, Result};
