//! Rough Bergomi Monte Carlo engine built around a modified
//! sum-of-exponentials (mSOE) discretization of the Volterra driver.

pub mod calibrate;
pub mod error;
pub mod forward_variance;
pub mod gaussian;
pub mod implied_vol;
pub mod model;
pub mod pricing;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod soe_kernel;
pub mod special;
pub mod wasserstein;

pub use error::{Error, Result};
pub use model::ModelParams;
