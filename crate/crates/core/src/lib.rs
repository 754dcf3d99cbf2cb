//! Variable selection for high-dimensional linear regression with
//! spike-and-slab Gaussian priors whose variances shrink (spike) and diffuse
//! (slab) with the sample size.

pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod indicator;
pub mod oracle;
mod linalg;
pub mod priors;
pub mod score;
pub mod selection;
pub mod simbench;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use indicator::ModelIndicator;
pub use priors::PriorSpec;
