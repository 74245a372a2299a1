//! Risk-aware trajectory optimization under sample-only obstacle predictions.
//!
//! Obstacle trajectory distributions are represented by samples. Collision
//! risk is scored by the squared maximum mean discrepancy between the
//! distribution of collision-constraint residuals and a point mass at zero,
//! evaluated on a small weighted subset ("reduced set") of the obstacle
//! samples chosen so its kernel mean embedding matches the full set.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`kernel`] | Laplace kernel, kernel matrices, MMD |
//! | [`frenet`] | Frenet-frame bicycle model, flat controls, behavioral planner |
//! | [`risk`] | collision residuals and the MMD / SAA / CVaR / scenario risks |
//! | [`reduced_set`] | reduced-set selection by cross-entropy search |
//! | [`optimizer`] | sampling-based trajectory optimizer with projection |
//! | [`scenario`] | synthetic static and dynamic scenes |
//! | [`harness`] | benchmark runs, sweeps, receding-horizon driver, reports |

pub mod error;
pub mod frenet;
pub mod harness;
pub mod kernel;
pub mod kkt;
pub mod optimizer;
pub mod reduced_set;
pub mod risk;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
