//! Model types and the joint probability they define.
//!
//! The generative story for one household: `I` appliance chains evolve over
//! `T` steps; chain `i` occupies one of `K_i` states, each mapped to a mean
//! energy level. The observed aggregate at step `t` is the sum of the active
//! levels plus zero-mean Gaussian noise. Interleaved variants add a selector
//! chain `z` over `{0, .., I-1}`: at each step after the first, only chain
//! `z_t` may change state; every other chain must hold.
//!
//! Time-of-day effects enter through [`SamplingSpec`]: a day is divided into
//! equal bins, and non-homogeneous variants pick the transition matrix of the
//! *destination* step's bin.
//!
//! All types are immutable after construction and validated by their
//! constructors. Fields stay public so tests can build deliberately invalid
//! configurations; code outside tests should go through the constructors.

mod persist;
mod prob;
mod types;

pub use persist::MODEL_SCHEMA;
pub(crate) use prob::gaussian_log_density;
pub use prob::{aggregate, emission_log_density, joint_log_prob, transition_log_prob};
pub use types::{
    AggregateSeries, ApplianceMatrix, ChainParams, HouseholdModel, ModelVariant, NoiseModel,
    SamplingSpec, SelectorParams, StateAssignment, TransitionMatrix, PROB_TOL, SECONDS_PER_DAY,
    SIGMA_FLOOR,
};
