//! MAP decoding: which appliance states best explain an aggregate series.
//!
//! Exact joint decoding over all chains is exponential in the number of
//! appliances, so the production decoders run coordinate ascent over exact
//! sub-decodes:
//!
//! * [`chainwise_viterbi`] (factorial variants) re-decodes one chain at a
//!   time against the residual left by the others;
//! * [`interleaved_viterbi`] (selector variants) re-decodes one *pair* of
//!   chains jointly with the selector path, which lets switching activity
//!   migrate between chains even though unselected chains are frozen.
//!
//! Both adopt a candidate only when it strictly increases the true joint
//! log-probability, so every recorded update delta is non-negative, sweeps
//! are monotone, and a converged result is a coordinate-wise fixed point.
//! [`exact_viterbi`] enumerates every feasible assignment outright — useful
//! as a ground-truth oracle on problems small enough to afford it.

mod chainwise;
mod exact;
mod interleaved;

pub use chainwise::chainwise_viterbi;
pub use exact::{exact_viterbi, exact_viterbi_with_guard, EXACT_SPACE_GUARD};
pub use interleaved::interleaved_viterbi;

use crate::error::{Error, Result};
use crate::model::{
    gaussian_log_density, AggregateSeries, ApplianceMatrix, HouseholdModel, ModelVariant,
    StateAssignment,
};

/// How coordinate-ascent decoding iterates and stops.
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    /// Upper bound on full sweeps (over chains, or over chain pairs).
    pub max_sweeps: usize,
    /// A sweep improving the joint log-probability by no more than this
    /// counts as converged.
    pub improvement_tol: f64,
    pub pair_schedule: PairSchedule,
    pub tie_break: TieBreak,
}

/// Order in which the interleaved decoder visits chain pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSchedule {
    /// (0,1), (0,2), ..., (1,2), ... — every unordered pair once per sweep.
    Lexicographic,
}

/// Score-tie policy inside the dynamic programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Prefer the lowest state index, then the lowest chain index.
    LowestIndex,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_sweeps: 50,
            improvement_tol: 1e-9,
            pair_schedule: PairSchedule::Lexicographic,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be >= 1".into()));
        }
        if !self.improvement_tol.is_finite() || self.improvement_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "improvement tolerance {} must be finite and >= 0",
                self.improvement_tol
            )));
        }
        Ok(())
    }
}

/// A decoded trajectory with its score and the ascent trace that produced it.
#[derive(Debug, Clone)]
pub struct DisaggregationResult {
    pub assignment: StateAssignment,
    /// Per-appliance energy implied by the assignment (chain means).
    pub energy: ApplianceMatrix,
    /// Joint log-probability of `assignment` with the decoded series.
    pub log_posterior: f64,
    /// Full sweeps executed (0 for the exact decoder).
    pub sweeps_used: usize,
    /// Whether the last sweep's improvement fell within tolerance before the
    /// sweep budget ran out.
    pub converged: bool,
    /// Log-probability gain of every accepted coordinate update, in order;
    /// rejected updates record 0. All entries are non-negative by
    /// construction.
    pub update_deltas: Vec<f64>,
}

/// Maps a state assignment to the energy matrix implied by the model's
/// per-state means. `start_step` anchors the result on the time grid (pass
/// the decoded series' start step).
pub fn states_to_energy(
    model: &HouseholdModel,
    a: &StateAssignment,
    start_step: usize,
) -> Result<ApplianceMatrix> {
    a.validate_against(model)?;
    let values = model
        .chains
        .iter()
        .zip(&a.states)
        .map(|(c, row)| row.iter().map(|&s| c.means[s]).collect())
        .collect();
    ApplianceMatrix::new(model.chain_labels(), values, start_step)
}

/// Log-domain lookup tables shared by the decoders, built once per decode.
pub(crate) struct DecodeTables {
    /// ln of each chain's initial distribution.
    pub init_ln: Vec<Vec<f64>>,
    /// ln transition tables per chain, indexed `[chain][bin][from * k + to]`;
    /// homogeneous variants hold a single pseudo-bin.
    trans_ln: Vec<Vec<Vec<f64>>>,
    /// ln selector initial / transitions (empty for factorial variants).
    pub sel_init_ln: Vec<f64>,
    sel_trans_ln: Vec<f64>,
    /// Emission sigma at each step of the decoded series.
    sigma: Vec<f64>,
    /// Bin of each step (all zero for homogeneous variants, mirroring
    /// `trans_ln`'s pseudo-bin).
    step_bin: Vec<usize>,
    num_chains: usize,
}

impl DecodeTables {
    pub fn new(model: &HouseholdModel, y: &AggregateSeries, variant: ModelVariant) -> Self {
        let ln_rows = |m: &crate::model::TransitionMatrix| -> Vec<f64> {
            m.rows().iter().flatten().map(|p| p.ln()).collect()
        };
        let trans_ln = model
            .chains
            .iter()
            .map(|c| {
                if variant.nonhomogeneous() {
                    c.per_bin
                        .as_ref()
                        .expect("caller checked supports()")
                        .iter()
                        .map(ln_rows)
                        .collect()
                } else {
                    vec![ln_rows(c.homogeneous.as_ref().expect("caller checked supports()"))]
                }
            })
            .collect();
        let (sel_init_ln, sel_trans_ln) = if variant.interleaved() {
            let sel = model.selector.as_ref().expect("caller checked supports()");
            (
                sel.initial.iter().map(|p| p.ln()).collect(),
                ln_rows(&sel.transitions),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let step_bin = (0..y.len())
            .map(|t| {
                if variant.nonhomogeneous() {
                    model.sampling.bin_of_step(y.abs_step(t))
                } else {
                    0
                }
            })
            .collect();
        DecodeTables {
            init_ln: model
                .chains
                .iter()
                .map(|c| c.initial.iter().map(|p| p.ln()).collect())
                .collect(),
            trans_ln,
            sel_init_ln,
            sel_trans_ln,
            sigma: (0..y.len())
                .map(|t| model.noise.sigma_at(&model.sampling, y.abs_step(t)))
                .collect(),
            step_bin,
            num_chains: model.num_chains(),
        }
    }

    /// ln P(chain `i`: from -> to) entering step `t`.
    #[inline]
    pub fn chain_ln(&self, i: usize, t: usize, from: usize, to: usize, k: usize) -> f64 {
        self.trans_ln[i][self.step_bin[t]][from * k + to]
    }

    /// ln P(selector: from -> to).
    #[inline]
    pub fn sel_ln(&self, from: usize, to: usize) -> f64 {
        self.sel_trans_ln[from * self.num_chains + to]
    }

    /// Emission log density at step `t` for total mean `mu`.
    #[inline]
    pub fn em(&self, t: usize, mu: f64, y_t: f64) -> f64 {
        gaussian_log_density(y_t, mu, self.sigma[t])
    }
}

/// Generic single-sequence Viterbi: maximizes
/// `init(s_0) + sum_{t>=1} step(t, s_{t-1}, s_t)` over state paths. Both
/// closures fold their emission term in. Score ties keep the lowest state
/// index at every decision. Returns the best path and its score.
pub(crate) fn viterbi_path(
    k: usize,
    t_len: usize,
    init: impl Fn(usize) -> f64,
    step: impl Fn(usize, usize, usize) -> f64,
) -> (Vec<usize>, f64) {
    debug_assert!(k >= 1 && t_len >= 1);
    let mut score: Vec<f64> = (0..k).map(&init).collect();
    let mut back = vec![0usize; k * t_len];
    let mut next = vec![0.0f64; k];
    for t in 1..t_len {
        for s in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for prev in 0..k {
                let cand = score[prev] + step(t, prev, s);
                if cand > best {
                    best = cand;
                    best_prev = prev;
                }
            }
            next[s] = best;
            back[t * k + s] = best_prev;
        }
        score.copy_from_slice(&next);
    }
    let mut best_s = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (s, &v) in score.iter().enumerate() {
        if v > best {
            best = v;
            best_s = s;
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = best_s;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * k + path[t]];
    }
    (path, best)
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    idx
}

/// Shared convergence bookkeeping for the coordinate-ascent decoders: runs
/// `sweep` until a full sweep gains no more than the tolerance or the budget
/// runs out. `sweep` performs every update of one sweep, pushing applied
/// deltas, and returns the updated incumbent score.
pub(crate) fn ascend(
    cfg: &DecodeConfig,
    mut current: f64,
    deltas: &mut Vec<f64>,
    mut sweep: impl FnMut(f64, &mut Vec<f64>) -> Result<f64>,
) -> Result<(f64, usize, bool)> {
    let mut sweeps_used = 0;
    let mut converged = false;
    while sweeps_used < cfg.max_sweeps {
        sweeps_used += 1;
        let before = current;
        current = sweep(current, deltas)?;
        // An -inf incumbent that stays -inf has made no measurable progress.
        let improvement = if current == before { 0.0 } else { current - before };
        if improvement <= cfg.improvement_tol {
            converged = true;
            break;
        }
    }
    Ok((current, sweeps_used, converged))
}
