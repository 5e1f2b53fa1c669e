pub(crate) mod binio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod graph;
pub mod optim;
pub mod planner;
pub mod query;
pub mod vmf;
pub mod world;

pub use error::{Error, Result};
