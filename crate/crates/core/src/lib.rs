pub mod asymptotics;
pub mod baseline;
pub mod error;
pub mod esc;
pub mod evaluation;
pub mod io;
pub mod likelihood;
pub mod math;
pub mod mcmc;
pub mod partition;
pub mod prior_sampling;
pub mod size_dist;
pub mod slice;
pub mod synthetic;

pub use error::{Error, Result};
pub use partition::{Partition, Target};
pub use size_dist::{ExplicitSizes, SizeDistribution, TruncNegBin};
