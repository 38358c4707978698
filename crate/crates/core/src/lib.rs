//! Bayesian fitting of a three-state (healthy, pre-clinical, clinical) cancer
//! natural history model to individual screening histories, with model
//! comparison, synthetic cohorts and overdiagnosis estimation.

pub mod compare;
pub mod diagnostics;
pub mod error;
pub mod gof;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod overdx;
pub mod proposal;
pub mod quadrature;
pub mod record;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod weibull;

pub use error::{Error, Result, RowError};
pub use model::{BetaPrior, GammaPrior, LatentState, ModelSpec, Params, PriorSpec};
pub use record::{classify, Group, IndividualRecord, RawRecord};
pub use weibull::WeibullRS;
