//! Bayesian localization of a user's ideal point in `[0, 1]^d` from
//! paired-comparison answers.
//!
//! The posterior over the ideal point combines a uniform prior with a
//! logistic likelihood on squared-distance margins and is sampled by
//! random-walk Metropolis. Queries are chosen at random, by mean-cut
//! max-variance scoring of random candidates, or constructed directly along
//! the posterior's principal axis. [`session`] drives the elicitation loop and
//! [`experiment`] runs batches of simulated trials.

pub mod attribute;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod mcmc;
pub mod metrics;
pub mod oracle;
pub mod render;
pub mod seed;
pub mod selection;
pub mod session;

pub use attribute::{sample_uniform, squared_distance, AnsweredQuery, AttributeVector, Query};
pub use error::{Error, Result};
pub use likelihood::{log_posterior_unnormalized, query_likelihood, NoiseConstant};
pub use mcmc::{posterior_summary, sample_posterior, McmcConfig, PosteriorMoments, PosteriorSamples};
pub use selection::{SelectionConfig, Strategy};
pub use session::{create_session, Choice, SessionSnapshot, SessionState};
pub use render::{render, Family, StimulusSpec};
