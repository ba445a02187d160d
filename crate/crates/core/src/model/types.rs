use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate-meter sampling never crosses day boundaries unevenly.
pub const SECONDS_PER_DAY: u32 = 86_400;

/// Tolerance for "sums to one" checks on probability vectors and rows.
pub const PROB_TOL: f64 = 1e-9;

/// Smallest admissible emission standard deviation. A degenerate (zero
/// variance) Gaussian would turn log densities into +/- infinity at will;
/// estimation and model construction clamp to this floor instead.
pub const SIGMA_FLOOR: f64 = 1e-3;

fn check_prob_vector(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} is empty")));
    }
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{what}[{i}] = {p} is not a probability"
            )));
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidParameter(format!(
            "{what} sums to {sum}, expected 1 within {PROB_TOL}"
        )));
    }
    Ok(())
}

/// Uniform sampling grid plus the time-of-day binning used by the
/// non-homogeneous variants.
///
/// `interval_seconds` must divide a day evenly, and `bins_per_day` must divide
/// the resulting steps per day, so every step maps to exactly one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub interval_seconds: u32,
    pub bins_per_day: usize,
}

impl SamplingSpec {
    pub fn new(interval_seconds: u32, bins_per_day: usize) -> Result<Self> {
        if interval_seconds == 0 || SECONDS_PER_DAY % interval_seconds != 0 {
            return Err(Error::InvalidParameter(format!(
                "interval of {interval_seconds}s does not divide a day evenly"
            )));
        }
        let steps_per_day = (SECONDS_PER_DAY / interval_seconds) as usize;
        if bins_per_day == 0 || steps_per_day % bins_per_day != 0 {
            return Err(Error::InvalidParameter(format!(
                "{bins_per_day} bins do not divide {steps_per_day} steps per day evenly"
            )));
        }
        Ok(SamplingSpec {
            interval_seconds,
            bins_per_day,
        })
    }

    pub fn steps_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.interval_seconds) as usize
    }

    pub fn steps_per_bin(&self) -> usize {
        self.steps_per_day() / self.bins_per_day
    }

    /// Time-of-day bin of an absolute step index (step 0 = midnight of day 0).
    pub fn bin_of_step(&self, abs_step: usize) -> usize {
        (abs_step % self.steps_per_day()) / self.steps_per_bin()
    }
}

impl Default for SamplingSpec {
    /// Two-minute readings, 24 one-hour bins.
    fn default() -> Self {
        SamplingSpec {
            interval_seconds: 120,
            bins_per_day: 24,
        }
    }
}

/// Observed aggregate readings on a uniform grid.
///
/// `start_step` is the absolute step index of the first reading, i.e. its
/// offset from midnight in sampling steps (modulo a day); it anchors
/// time-of-day binning for series that do not begin at midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub values: Vec<f64>,
    pub start_step: usize,
}

impl AggregateSeries {
    pub fn new(values: Vec<f64>, start_step: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty aggregate series".into()));
        }
        for (t, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "aggregate[{t}] = {v} is not a non-negative finite reading"
                )));
            }
        }
        Ok(AggregateSeries { values, start_step })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Absolute step index of offset `t` into the series.
    pub fn abs_step(&self, t: usize) -> usize {
        self.start_step + t
    }
}

/// Per-appliance energy traces sharing one time grid: `values[i][t]` is the
/// consumption of appliance `i` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub start_step: usize,
}

impl ApplianceMatrix {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>, start_step: usize) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidParameter(
                "appliance matrix needs at least one appliance".into(),
            ));
        }
        if names.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} appliance names but {} trace rows",
                names.len(),
                values.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "appliance {i} has an empty name"
                )));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate appliance name {name:?}"
                )));
            }
        }
        let steps = values[0].len();
        if steps == 0 {
            return Err(Error::InvalidParameter("appliance traces are empty".into()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != steps {
                return Err(Error::LengthMismatch(format!(
                    "appliance {:?} has {} steps, expected {}",
                    names[i],
                    row.len(),
                    steps
                )));
            }
            for (t, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "appliance {:?} value at step {t} is {v}",
                        names[i]
                    )));
                }
            }
        }
        Ok(ApplianceMatrix {
            names,
            values,
            start_step,
        })
    }

    pub fn num_appliances(&self) -> usize {
        self.names.len()
    }

    pub fn num_steps(&self) -> usize {
        self.values[0].len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Row-stochastic transition table.
///
/// Storage convention: `rows[from][to]` holds the probability of moving from
/// state `from` to state `to`, so each stored row sums to one and
/// [`TransitionMatrix::prob`]`(next, prev)` reads `rows[prev][next]`. The
/// rows stay private so every instance in the program went through `new`'s
/// stochasticity check (persistence re-validates on load for the same
/// reason).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        for (from, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "transition row {from} has {} entries in a {k}-state matrix",
                    row.len()
                )));
            }
            check_prob_vector(row, &format!("transition row {from}"))?;
        }
        Ok(TransitionMatrix { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// P(next | prev).
    pub fn prob(&self, next: usize, prev: usize) -> f64 {
        self.rows[prev][next]
    }

    /// log P(next | prev); `-inf` for a forbidden move.
    pub fn log_prob(&self, next: usize, prev: usize) -> f64 {
        self.rows[prev][next].ln()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Parameters of one appliance chain.
///
/// `means` are the per-state energy levels in strictly increasing order (the
/// canonical state numbering: state 0 is the lowest level). At least one of
/// `homogeneous` / `per_bin` must be present; a model trained by this crate
/// carries both, so any variant can be decoded against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub label: String,
    pub means: Vec<f64>,
    pub initial: Vec<f64>,
    pub homogeneous: Option<TransitionMatrix>,
    pub per_bin: Option<Vec<TransitionMatrix>>,
}

impl ChainParams {
    pub fn new(
        label: String,
        means: Vec<f64>,
        initial: Vec<f64>,
        homogeneous: Option<TransitionMatrix>,
        per_bin: Option<Vec<TransitionMatrix>>,
    ) -> Result<Self> {
        if label.is_empty() {
            return Err(Error::InvalidParameter("empty chain label".into()));
        }
        if means.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "chain {label:?} has no states"
            )));
        }
        for (k, &m) in means.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "chain {label:?} mean[{k}] = {m} is not a non-negative level"
                )));
            }
            if k > 0 && m <= means[k - 1] {
                return Err(Error::InvalidParameter(format!(
                    "chain {label:?} means are not strictly increasing at state {k}"
                )));
            }
        }
        let k = means.len();
        if initial.len() != k {
            return Err(Error::LengthMismatch(format!(
                "chain {label:?} has {k} states but {} initial probabilities",
                initial.len()
            )));
        }
        check_prob_vector(&initial, &format!("chain {label:?} initial distribution"))?;
        if homogeneous.is_none() && per_bin.is_none() {
            return Err(Error::InvalidParameter(format!(
                "chain {label:?} carries no transition table"
            )));
        }
        if let Some(m) = &homogeneous {
            if m.dim() != k {
                let d = m.dim();
                return Err(Error::LengthMismatch(format!(
                    "chain {label:?} homogeneous table is {d}x{d}, expected {k}x{k}"
                )));
            }
        }
        if let Some(tables) = &per_bin {
            if tables.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "chain {label:?} per-bin table list is empty"
                )));
            }
            for (b, m) in tables.iter().enumerate() {
                if m.dim() != k {
                    let d = m.dim();
                    return Err(Error::LengthMismatch(format!(
                        "chain {label:?} bin-{b} table is {d}x{d}, expected {k}x{k}"
                    )));
                }
            }
        }
        Ok(ChainParams {
            label,
            means,
            initial,
            homogeneous,
            per_bin,
        })
    }

    pub fn num_states(&self) -> usize {
        self.means.len()
    }
}

/// Parameters of the selector chain used by the interleaved variants: which
/// appliance is allowed to switch at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams {
    pub initial: Vec<f64>,
    pub transitions: TransitionMatrix,
}

impl SelectorParams {
    pub fn new(initial: Vec<f64>, transitions: TransitionMatrix) -> Result<Self> {
        check_prob_vector(&initial, "selector initial distribution")?;
        if transitions.dim() != initial.len() {
            return Err(Error::LengthMismatch(format!(
                "selector initial has {} entries but transition table is {}x{1}",
                initial.len(),
                transitions.dim()
            )));
        }
        Ok(SelectorParams {
            initial,
            transitions,
        })
    }

    pub fn num_chains(&self) -> usize {
        self.initial.len()
    }
}

/// Emission noise: one global standard deviation, or one per time-of-day bin.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Global(f64),
    PerBin(Vec<f64>),
}

impl NoiseModel {
    fn check_sigma(s: f64, what: &str) -> Result<()> {
        if !s.is_finite() || s < SIGMA_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "{what} = {s}; standard deviations must be finite and >= {SIGMA_FLOOR}"
            )));
        }
        Ok(())
    }

    pub fn validate(&self, bins_per_day: usize) -> Result<()> {
        match self {
            NoiseModel::Global(s) => Self::check_sigma(*s, "noise sigma"),
            NoiseModel::PerBin(v) => {
                if v.len() != bins_per_day {
                    return Err(Error::LengthMismatch(format!(
                        "{} per-bin noise sigmas for {bins_per_day} bins",
                        v.len()
                    )));
                }
                for (b, &s) in v.iter().enumerate() {
                    Self::check_sigma(s, &format!("noise sigma for bin {b}"))?;
                }
                Ok(())
            }
        }
    }

    pub fn sigma_at(&self, sampling: &SamplingSpec, abs_step: usize) -> f64 {
        match self {
            NoiseModel::Global(s) => *s,
            NoiseModel::PerBin(v) => v[sampling.bin_of_step(abs_step)],
        }
    }
}

/// A complete generative model for one household.
///
/// One trained model serves all four variants: each chain can carry both a
/// homogeneous and a per-bin transition table, and `selector` is present
/// whenever interleaved decoding should be possible.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdModel {
    pub sampling: SamplingSpec,
    pub chains: Vec<ChainParams>,
    pub selector: Option<SelectorParams>,
    pub noise: NoiseModel,
}

impl HouseholdModel {
    pub fn new(
        sampling: SamplingSpec,
        chains: Vec<ChainParams>,
        selector: Option<SelectorParams>,
        noise: NoiseModel,
    ) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::InvalidParameter("model has no chains".into()));
        }
        for (i, c) in chains.iter().enumerate() {
            if chains[..i].iter().any(|o| o.label == c.label) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate chain label {:?}",
                    c.label
                )));
            }
            if let Some(tables) = &c.per_bin {
                if tables.len() != sampling.bins_per_day {
                    return Err(Error::LengthMismatch(format!(
                        "chain {:?} has {} per-bin tables for {} bins per day",
                        c.label,
                        tables.len(),
                        sampling.bins_per_day
                    )));
                }
            }
        }
        if let Some(sel) = &selector {
            if sel.num_chains() != chains.len() {
                return Err(Error::LengthMismatch(format!(
                    "selector is over {} chains but the model has {}",
                    sel.num_chains(),
                    chains.len()
                )));
            }
        }
        noise.validate(sampling.bins_per_day)?;
        Ok(HouseholdModel {
            sampling,
            chains,
            selector,
            noise,
        })
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn chain_labels(&self) -> Vec<String> {
        self.chains.iter().map(|c| c.label.clone()).collect()
    }

    /// Checks that this model carries every component `variant` needs.
    pub fn supports(&self, variant: ModelVariant) -> Result<()> {
        if variant.interleaved() && self.selector.is_none() {
            return Err(Error::UnsupportedVariant(format!(
                "{variant} needs a selector chain, which this model does not carry"
            )));
        }
        for c in &self.chains {
            if variant.nonhomogeneous() && c.per_bin.is_none() {
                return Err(Error::UnsupportedVariant(format!(
                    "{variant} needs per-bin transition tables, missing for chain {:?}",
                    c.label
                )));
            }
            if !variant.nonhomogeneous() && c.homogeneous.is_none() {
                return Err(Error::UnsupportedVariant(format!(
                    "{variant} needs a homogeneous transition table, missing for chain {:?}",
                    c.label
                )));
            }
        }
        Ok(())
    }
}

/// One hidden trajectory: a state index per chain per step, plus the selector
/// path for interleaved variants.
///
/// `new` checks shapes only; whether indices fit a particular model is
/// checked by [`StateAssignment::validate_against`], and the one-at-a-time
/// property by [`StateAssignment::one_at_a_time_holds`] (decoders and the
/// simulator guarantee it for everything they emit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateAssignment {
    pub states: Vec<Vec<usize>>,
    pub selector: Option<Vec<usize>>,
}

impl StateAssignment {
    pub fn new(states: Vec<Vec<usize>>, selector: Option<Vec<usize>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameter("assignment has no chains".into()));
        }
        let steps = states[0].len();
        if steps == 0 {
            return Err(Error::InvalidParameter("assignment has no steps".into()));
        }
        for (i, row) in states.iter().enumerate() {
            if row.len() != steps {
                return Err(Error::LengthMismatch(format!(
                    "chain {i} has {} states, expected {steps}",
                    row.len()
                )));
            }
        }
        if let Some(z) = &selector {
            if z.len() != steps {
                return Err(Error::LengthMismatch(format!(
                    "selector path has {} steps, expected {steps}",
                    z.len()
                )));
            }
        }
        Ok(StateAssignment { states, selector })
    }

    pub fn num_chains(&self) -> usize {
        self.states.len()
    }

    pub fn num_steps(&self) -> usize {
        self.states[0].len()
    }

    /// Index-range check against a model (state and selector indices).
    pub fn validate_against(&self, model: &HouseholdModel) -> Result<()> {
        if self.num_chains() != model.num_chains() {
            return Err(Error::LengthMismatch(format!(
                "assignment covers {} chains, model has {}",
                self.num_chains(),
                model.num_chains()
            )));
        }
        for (i, row) in self.states.iter().enumerate() {
            let k = model.chains[i].num_states();
            if let Some(&bad) = row.iter().find(|&&s| s >= k) {
                return Err(Error::InvalidParameter(format!(
                    "state {bad} out of range for {k}-state chain {:?}",
                    model.chains[i].label
                )));
            }
        }
        if let Some(z) = &self.selector {
            let i = model.num_chains();
            if let Some(&bad) = z.iter().find(|&&c| c >= i) {
                return Err(Error::InvalidParameter(format!(
                    "selector value {bad} out of range for {i} chains"
                )));
            }
        }
        Ok(())
    }

    /// True when, at every step past the first, no chain other than the
    /// selected one changes state. Vacuously true without a selector.
    pub fn one_at_a_time_holds(&self) -> bool {
        let Some(z) = &self.selector else { return true };
        for t in 1..self.num_steps() {
            for (i, row) in self.states.iter().enumerate() {
                if i != z[t] && row[t] != row[t - 1] {
                    return false;
                }
            }
        }
        true
    }
}

/// The four model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Fhmm,
    Fnhmm,
    Ifhmm,
    Ifnhmm,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Fhmm,
        ModelVariant::Fnhmm,
        ModelVariant::Ifhmm,
        ModelVariant::Ifnhmm,
    ];

    /// Does this variant constrain switching through a selector chain?
    pub fn interleaved(self) -> bool {
        matches!(self, ModelVariant::Ifhmm | ModelVariant::Ifnhmm)
    }

    /// Does this variant condition transitions on the time-of-day bin?
    pub fn nonhomogeneous(self) -> bool {
        matches!(self, ModelVariant::Fnhmm | ModelVariant::Ifnhmm)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Fhmm => "fhmm",
            ModelVariant::Fnhmm => "fnhmm",
            ModelVariant::Ifhmm => "ifhmm",
            ModelVariant::Ifnhmm => "ifnhmm",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fhmm" => Ok(ModelVariant::Fhmm),
            "fnhmm" => Ok(ModelVariant::Fnhmm),
            "ifhmm" => Ok(ModelVariant::Ifhmm),
            "ifnhmm" => Ok(ModelVariant::Ifnhmm),
            other => Err(Error::UnsupportedVariant(format!(
                "unknown variant {other:?}; expected fhmm, fnhmm, ifhmm, or ifnhmm"
            ))),
        }
    }
}
