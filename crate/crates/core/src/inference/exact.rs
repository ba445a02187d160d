//! Exhaustive MAP decoding for small problems.
//!
//! Enumerates every feasible assignment and keeps the best, so it is the
//! ground truth the coordinate-ascent decoders are measured against. The
//! search-space guard works on the *raw* product of per-step choices (before
//! any feasibility pruning), which makes the cost bound predictable.

use crate::error::{Error, Result};
use crate::model::{
    joint_log_prob, AggregateSeries, HouseholdModel, ModelVariant, StateAssignment,
};

use super::{states_to_energy, DecodeTables, DisaggregationResult};

/// Largest raw assignment-space size `exact_viterbi` will enumerate.
pub const EXACT_SPACE_GUARD: f64 = 1e7;

/// Exact MAP decode by exhaustive enumeration, refusing problems whose raw
/// assignment space exceeds [`EXACT_SPACE_GUARD`].
pub fn exact_viterbi(
    model: &HouseholdModel,
    y: &AggregateSeries,
    variant: ModelVariant,
) -> Result<DisaggregationResult> {
    exact_viterbi_with_guard(model, y, variant, EXACT_SPACE_GUARD)
}

/// Exact MAP decode with a caller-chosen search-space guard.
///
/// The raw space is `prod_i K_i` choices per step — times `I` selector
/// choices per step for interleaved variants — raised to the number of
/// steps. Ties between optimal assignments go to the lexicographically
/// smallest state grid (chain-major, step-minor, selector last).
pub fn exact_viterbi_with_guard(
    model: &HouseholdModel,
    y: &AggregateSeries,
    variant: ModelVariant,
    guard: f64,
) -> Result<DisaggregationResult> {
    model.supports(variant)?;
    let t_len = y.len();
    let i_count = model.num_chains();

    let mut per_step: f64 = model
        .chains
        .iter()
        .map(|c| c.num_states() as f64)
        .product();
    if variant.interleaved() {
        per_step *= i_count as f64;
    }
    let space = per_step.powi(t_len as i32);
    if space > guard {
        return Err(Error::SearchSpaceExceeded { size: space, guard });
    }

    let finish = |states: Vec<Vec<usize>>, selector: Option<Vec<usize>>| -> Result<DisaggregationResult> {
        let assignment = StateAssignment::new(states, selector)?;
        let log_posterior = joint_log_prob(model, y, &assignment, variant)?;
        let energy = states_to_energy(model, &assignment, y.start_step)?;
        Ok(DisaggregationResult {
            assignment,
            energy,
            log_posterior,
            sweeps_used: 0,
            converged: true,
            update_deltas: Vec::new(),
        })
    };

    if per_step == 1.0 {
        // Single-state chains leave exactly one assignment; skip the DFS so
        // arbitrarily long series stay in bounds.
        let states = vec![vec![0usize; t_len]; i_count];
        let selector = variant.interleaved().then(|| vec![0usize; t_len]);
        return finish(states, selector);
    }

    let mut dfs = Dfs {
        model,
        y,
        tables: DecodeTables::new(model, y, variant),
        interleaved: variant.interleaved(),
        t_len,
        i_count,
        ks: model.chains.iter().map(|c| c.num_states()).collect(),
        states: vec![vec![0usize; t_len]; i_count],
        zs: vec![0usize; t_len],
        best_score: f64::NEG_INFINITY,
        best: None,
    };
    dfs.descend(0, 0.0);

    let (states, selector) = dfs.best.ok_or_else(|| {
        Error::Internal("exhaustive search found no assignment with positive probability".into())
    })?;
    finish(states, selector)
}

struct Dfs<'a> {
    model: &'a HouseholdModel,
    y: &'a AggregateSeries,
    tables: DecodeTables,
    interleaved: bool,
    t_len: usize,
    i_count: usize,
    ks: Vec<usize>,
    states: Vec<Vec<usize>>,
    zs: Vec<usize>,
    best_score: f64,
    best: Option<(Vec<Vec<usize>>, Option<Vec<usize>>)>,
}

impl Dfs<'_> {
    fn mu_at(&self, t: usize) -> f64 {
        self.model
            .chains
            .iter()
            .zip(&self.states)
            .map(|(c, row)| c.means[row[t]])
            .sum()
    }

    fn record_leaf(&mut self, score: f64) {
        if score == f64::NEG_INFINITY {
            return;
        }
        let better = match self.best {
            None => true,
            Some(_) if score > self.best_score => true,
            Some(ref held) if score == self.best_score => {
                // Lexicographic tie-break on (states chain-major, selector).
                let cand_z = self.interleaved.then_some(&self.zs);
                (&self.states, cand_z) < (&held.0, held.1.as_ref())
            }
            _ => false,
        };
        if better {
            self.best_score = score;
            self.best = Some((
                self.states.clone(),
                self.interleaved.then(|| self.zs.clone()),
            ));
        }
    }

    fn descend(&mut self, t: usize, score: f64) {
        if t == self.t_len {
            self.record_leaf(score);
            return;
        }
        if self.interleaved {
            self.descend_interleaved(t, score);
        } else {
            self.descend_factorial(t, score);
        }
    }

    fn descend_factorial(&mut self, t: usize, score: f64) {
        let col_space: usize = self.ks.iter().product();
        for col in 0..col_space {
            let mut c = col;
            for i in 0..self.i_count {
                self.states[i][t] = c % self.ks[i];
                c /= self.ks[i];
            }
            let mut inc = self.tables.em(t, self.mu_at(t), self.y.values[t]);
            if t == 0 {
                for i in 0..self.i_count {
                    inc += self.tables.init_ln[i][self.states[i][0]];
                }
            } else {
                for i in 0..self.i_count {
                    inc += self.tables.chain_ln(
                        i,
                        t,
                        self.states[i][t - 1],
                        self.states[i][t],
                        self.ks[i],
                    );
                }
            }
            let total = score + inc;
            if total == f64::NEG_INFINITY {
                continue;
            }
            self.descend(t + 1, total);
        }
    }

    fn descend_interleaved(&mut self, t: usize, score: f64) {
        if t == 0 {
            let col_space: usize = self.ks.iter().product();
            for z0 in 0..self.i_count {
                self.zs[0] = z0;
                for col in 0..col_space {
                    let mut c = col;
                    for i in 0..self.i_count {
                        self.states[i][0] = c % self.ks[i];
                        c /= self.ks[i];
                    }
                    let mut inc = self.tables.sel_init_ln[z0]
                        + self.tables.em(0, self.mu_at(0), self.y.values[0]);
                    for i in 0..self.i_count {
                        inc += self.tables.init_ln[i][self.states[i][0]];
                    }
                    if score + inc == f64::NEG_INFINITY {
                        continue;
                    }
                    self.descend(1, score + inc);
                }
            }
            return;
        }
        // Feasible steps: the selected chain moves anywhere (holding
        // included, paying its matrix); every other chain holds for free.
        for z in 0..self.i_count {
            self.zs[t] = z;
            for i in 0..self.i_count {
                self.states[i][t] = self.states[i][t - 1];
            }
            let sel = self.tables.sel_ln(self.zs[t - 1], z);
            for s_new in 0..self.ks[z] {
                self.states[z][t] = s_new;
                let inc = sel
                    + self
                        .tables
                        .chain_ln(z, t, self.states[z][t - 1], s_new, self.ks[z])
                    + self.tables.em(t, self.mu_at(t), self.y.values[t]);
                let total = score + inc;
                if total == f64::NEG_INFINITY {
                    continue;
                }
                self.descend(t + 1, total);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{chainwise_viterbi, interleaved_viterbi, DecodeConfig};
    use crate::model::{ChainParams, NoiseModel, SamplingSpec, SelectorParams, TransitionMatrix};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn chain(label: &str, means: Vec<f64>, initial: Vec<f64>, rows: Vec<Vec<f64>>) -> ChainParams {
        ChainParams::new(
            label.into(),
            means,
            initial,
            Some(TransitionMatrix::new(rows).unwrap()),
            None,
        )
        .unwrap()
    }

    /// Random small household: `i_count` two-state chains with distinct
    /// means, random stochastic rows, always carrying a selector.
    fn random_model(rng: &mut ChaCha8Rng, i_count: usize) -> HouseholdModel {
        let mut chains = Vec::new();
        for i in 0..i_count {
            let hi = 40.0 + 60.0 * rng.random::<f64>() + 25.0 * i as f64;
            let p0 = 0.2 + 0.6 * rng.random::<f64>();
            let q = 0.2 + 0.6 * rng.random::<f64>();
            let r = 0.2 + 0.6 * rng.random::<f64>();
            chains.push(chain(
                &format!("a{i}"),
                vec![0.0, hi],
                vec![p0, 1.0 - p0],
                vec![vec![q, 1.0 - q], vec![1.0 - r, r]],
            ));
        }
        let sel_rows: Vec<Vec<f64>> = (0..i_count)
            .map(|_| {
                let raw: Vec<f64> = (0..i_count).map(|_| 0.1 + rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let sel = SelectorParams::new(
            vec![1.0 / i_count as f64; i_count],
            TransitionMatrix::new(sel_rows).unwrap(),
        )
        .unwrap();
        HouseholdModel::new(
            SamplingSpec::default(),
            chains,
            Some(sel),
            NoiseModel::Global(3.0 + 5.0 * rng.random::<f64>()),
        )
        .unwrap()
    }

    fn random_series(rng: &mut ChaCha8Rng, model: &HouseholdModel, t_len: usize) -> AggregateSeries {
        let top: f64 = model.chains.iter().map(|c| c.means[1]).sum();
        let values = (0..t_len).map(|_| rng.random::<f64>() * top).collect();
        AggregateSeries::new(values, 0).unwrap()
    }

    #[test]
    fn guard_rejects_oversized_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 1);
        // One 2-state chain, ifhmm: per-step = 2*1 = 2; 2^10 = 1024.
        let y = random_series(&mut rng, &model, 10);
        assert!(exact_viterbi_with_guard(&model, &y, ModelVariant::Ifhmm, 1024.0).is_ok());
        let err =
            exact_viterbi_with_guard(&model, &y, ModelVariant::Ifhmm, 1023.0).unwrap_err();
        match err {
            Error::SearchSpaceExceeded { size, guard } => {
                assert_eq!(size, 1024.0);
                assert_eq!(guard, 1023.0);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn guard_survives_astronomical_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 3);
        let y = random_series(&mut rng, &model, 4000);
        let err = exact_viterbi(&model, &y, ModelVariant::Fhmm).unwrap_err();
        match err {
            Error::SearchSpaceExceeded { size, .. } => assert!(size.is_infinite()),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn matches_hand_enumeration_on_a_tiny_case() {
        // One chain, two steps: small enough to check against the scorer
        // over all four assignments.
        let model = HouseholdModel::new(
            SamplingSpec::default(),
            vec![chain(
                "only",
                vec![0.0, 80.0],
                vec![0.6, 0.4],
                vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            )],
            None,
            NoiseModel::Global(5.0),
        )
        .unwrap();
        let y = AggregateSeries::new(vec![70.0, 10.0], 0).unwrap();
        let r = exact_viterbi(&model, &y, ModelVariant::Fhmm).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut arg = vec![];
        for s0 in 0..2usize {
            for s1 in 0..2usize {
                let a = StateAssignment::new(vec![vec![s0, s1]], None).unwrap();
                let lp = joint_log_prob(&model, &y, &a, ModelVariant::Fhmm).unwrap();
                if lp > best {
                    best = lp;
                    arg = vec![s0, s1];
                }
            }
        }
        assert_eq!(r.assignment.states[0], arg);
        assert_relative_eq!(r.log_posterior, best, max_relative = 1e-12);
    }

    #[test]
    fn ties_break_to_the_lexicographically_smallest_grid() {
        // Two interchangeable chains and an aggregate explained equally well
        // by either one being on.
        let rows = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let model = HouseholdModel::new(
            SamplingSpec::default(),
            vec![
                chain("a", vec![0.0, 100.0], vec![0.5, 0.5], rows.clone()),
                chain("b", vec![0.0, 100.0], vec![0.5, 0.5], rows),
            ],
            None,
            NoiseModel::Global(5.0),
        )
        .unwrap();
        let y = AggregateSeries::new(vec![100.0, 100.0], 0).unwrap();
        let r = exact_viterbi(&model, &y, ModelVariant::Fhmm).unwrap();
        // [[0,0],[1,1]] and [[1,1],[0,0]] score identically; chain-major
        // lexicographic order prefers chain 0 all-off.
        assert_eq!(r.assignment.states[0], vec![0, 0]);
        assert_eq!(r.assignment.states[1], vec![1, 1]);
    }

    #[test]
    fn interleaved_search_only_visits_feasible_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_model(&mut rng, 2);
        let y = random_series(&mut rng, &model, 5);
        let r = exact_viterbi(&model, &y, ModelVariant::Ifhmm).unwrap();
        assert!(r.assignment.one_at_a_time_holds());
        assert!(r.log_posterior.is_finite());
    }

    #[test]
    fn coordinate_ascent_never_beats_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DecodeConfig::default();
        for round in 0..25 {
            let i_count = 1 + (round % 3);
            let model = random_model(&mut rng, i_count);
            // Keep the raw interleaved space (2^I * I)^T under the guard.
            let t_len = if i_count == 3 { 4 } else { 4 + (round % 3) };
            let y = random_series(&mut rng, &model, t_len);

            let oracle = exact_viterbi(&model, &y, ModelVariant::Fhmm).unwrap();
            let heur = chainwise_viterbi(&model, &y, ModelVariant::Fhmm, &cfg).unwrap();
            assert!(
                heur.log_posterior <= oracle.log_posterior + 1e-9,
                "round {round}: chainwise {} beat oracle {}",
                heur.log_posterior,
                oracle.log_posterior
            );

            let oracle = exact_viterbi(&model, &y, ModelVariant::Ifhmm).unwrap();
            let heur = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &cfg).unwrap();
            assert!(
                heur.log_posterior <= oracle.log_posterior + 1e-9,
                "round {round}: interleaved {} beat oracle {}",
                heur.log_posterior,
                oracle.log_posterior
            );
        }
    }

    #[test]
    fn single_chain_decoders_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = DecodeConfig::default();
        for round in 0..30 {
            let model = random_model(&mut rng, 1);
            let y = random_series(&mut rng, &model, 6);

            let oracle = exact_viterbi(&model, &y, ModelVariant::Fhmm).unwrap();
            let heur = chainwise_viterbi(&model, &y, ModelVariant::Fhmm, &cfg).unwrap();
            assert_relative_eq!(
                heur.log_posterior,
                oracle.log_posterior,
                max_relative = 1e-9
            );

            let oracle = exact_viterbi(&model, &y, ModelVariant::Ifhmm).unwrap();
            let heur = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &cfg).unwrap();
            assert_relative_eq!(
                heur.log_posterior,
                oracle.log_posterior,
                max_relative = 1e-9,
            );
            assert!(heur.converged, "round {round} failed to converge");
        }
    }

    #[test]
    fn two_chain_interleaved_ascent_is_exact() {
        // A pairwise move re-decodes both chains and the selector at once,
        // which for two chains is the whole problem.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = DecodeConfig::default();
        for _ in 0..30 {
            let model = random_model(&mut rng, 2);
            let y = random_series(&mut rng, &model, 5);
            let oracle = exact_viterbi(&model, &y, ModelVariant::Ifhmm).unwrap();
            let heur = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &cfg).unwrap();
            assert_relative_eq!(
                heur.log_posterior,
                oracle.log_posterior,
                max_relative = 1e-9,
            );
        }
    }
}
