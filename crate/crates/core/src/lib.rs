//! Energy disaggregation with factorial hidden Markov models.
//!
//! A household's aggregate electricity reading at each step is modelled as the
//! sum of per-appliance consumptions plus Gaussian noise, where each appliance
//! is a hidden Markov chain over a small set of energy levels. Four variants
//! are supported:
//!
//! * `fhmm` — independent chains, time-homogeneous transitions;
//! * `fnhmm` — independent chains, transitions conditioned on time-of-day bin;
//! * `ifhmm` — a selector chain allows at most one appliance to switch per
//!   step (all others must hold their state);
//! * `ifnhmm` — interleaved switching and time-of-day transitions combined.
//!
//! The crate provides supervised maximum-likelihood training from labelled
//! per-appliance traces ([`estimation`]), approximate MAP decoding by
//! coordinate-ascent Viterbi sweeps plus an exact enumeration oracle for small
//! problems ([`inference`]), a seeded generative simulator ([`simulation`]),
//! a normalized-error evaluation harness ([`evaluation`]), and CSV/JSON data
//! interchange ([`io`]).
//!
//! All probability computations run in log space; `f64::NEG_INFINITY` is the
//! ordinary representation of an impossible configuration and flows through
//! scoring, decoding, and comparison without special-casing.

pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod model;
pub mod simulation;

pub use error::{Error, Result};
