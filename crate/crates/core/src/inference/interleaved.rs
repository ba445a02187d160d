//! Coordinate ascent over chain pairs, for the interleaved variants.

use crate::error::{Error, Result};
use crate::model::{
    joint_log_prob, AggregateSeries, HouseholdModel, ModelVariant, StateAssignment,
};

use super::{
    argmax_lowest, ascend, states_to_energy, viterbi_path, DecodeConfig, DecodeTables,
    DisaggregationResult, PairSchedule,
};

/// Decodes an aggregate series under `ifhmm` or `ifnhmm` by pairwise
/// coordinate ascent.
///
/// Single-chain moves cannot explore an interleaved model: changing one
/// chain's step also dictates the selector there, and the incumbent selector
/// may already be spoken for. Each proposal therefore re-decodes a *pair* of
/// chains together with the whole selector path (exactly, by dynamic
/// programming over the pair-state x selector product), while the remaining
/// chains stay frozen. Proposals are adopted only on strict improvement of
/// the joint log-probability.
pub fn interleaved_viterbi(
    model: &HouseholdModel,
    y: &AggregateSeries,
    variant: ModelVariant,
    cfg: &DecodeConfig,
) -> Result<DisaggregationResult> {
    if !variant.interleaved() {
        return Err(Error::UnsupportedVariant(format!(
            "pairwise decoding covers ifhmm and ifnhmm; decode {variant} with chainwise_viterbi"
        )));
    }
    model.supports(variant)?;
    cfg.validate()?;

    let t_len = y.len();
    let i_count = model.num_chains();
    let tables = DecodeTables::new(model, y, variant);

    // Constant chains are feasible under any selector path: nothing moves,
    // so the one-at-a-time constraint is vacuous.
    let mut states: Vec<Vec<usize>> = model
        .chains
        .iter()
        .map(|c| vec![argmax_lowest(&c.initial); t_len])
        .collect();
    // Selector init: exact selector-only Viterbi given the constant chains.
    // Selecting chain a at step t>=1 makes that chain pay its own hold
    // probability; every other chain holds for free.
    let mut z: Vec<usize> = if i_count == 1 {
        vec![0; t_len]
    } else {
        let (path, _) = viterbi_path(
            i_count,
            t_len,
            |a| tables.sel_init_ln[a],
            |t, prev, a| {
                let k = model.chains[a].num_states();
                let s = states[a][t];
                tables.sel_ln(prev, a) + tables.chain_ln(a, t, s, s, k)
            },
        );
        path
    };

    let joint = |states: &[Vec<usize>], z: &[usize]| -> Result<f64> {
        joint_log_prob(
            model,
            y,
            &StateAssignment {
                states: states.to_vec(),
                selector: Some(z.to_vec()),
            },
            variant,
        )
    };

    let pairs: Vec<(usize, usize)> = match cfg.pair_schedule {
        PairSchedule::Lexicographic => (0..i_count)
            .flat_map(|m| (m + 1..i_count).map(move |n| (m, n)))
            .collect(),
    };

    let start = joint(&states, &z)?;
    let mut deltas = Vec::new();
    let (log_posterior, sweeps_used, converged) =
        ascend(cfg, start, &mut deltas, |mut cur, deltas| {
            if i_count == 1 {
                // Degenerate household: the selector is pinned to the only
                // chain, which therefore pays its transition matrix at every
                // step. Re-decode it exactly.
                let k = model.chains[0].num_states();
                let means = &model.chains[0].means;
                let (path, _) = viterbi_path(
                    k,
                    t_len,
                    |s| tables.init_ln[0][s] + tables.em(0, means[s], y.values[0]),
                    |t, prev, s| {
                        tables.chain_ln(0, t, prev, s, k) + tables.em(t, means[s], y.values[t])
                    },
                );
                if path != states[0] {
                    let trial = vec![path];
                    let cand = joint(&trial, &z)?;
                    if cand > cur {
                        deltas.push(cand - cur);
                        states = trial;
                        cur = cand;
                        return Ok(cur);
                    }
                }
                deltas.push(0.0);
                return Ok(cur);
            }
            for &(m, n) in &pairs {
                let (sm, sn, zp) = pair_decode(model, y, &tables, &states, m, n)?;
                if sm == states[m] && sn == states[n] && zp == z {
                    deltas.push(0.0);
                    continue;
                }
                let mut trial = states.clone();
                trial[m] = sm;
                trial[n] = sn;
                let cand = joint(&trial, &zp)?;
                if cand > cur {
                    deltas.push(cand - cur);
                    states = trial;
                    z = zp;
                    cur = cand;
                } else {
                    deltas.push(0.0);
                }
            }
            Ok(cur)
        })?;

    let assignment = StateAssignment::new(states, Some(z))?;
    if !assignment.one_at_a_time_holds() {
        return Err(Error::Internal(
            "decoded assignment violates the one-at-a-time constraint".into(),
        ));
    }
    let energy = states_to_energy(model, &assignment, y.start_step)?;
    Ok(DisaggregationResult {
        assignment,
        energy,
        log_posterior,
        sweeps_used,
        converged,
        update_deltas: deltas,
    })
}

/// Exact MAP over (chain m, chain n, selector) with every other chain frozen.
///
/// DP state at step t is (a, b, z) = (state of m, state of n, selected
/// chain), indexed `(a * K_n + b) * I + z`. Frozen chains constrain the
/// selector: at a step where a frozen chain changes state the selector must
/// name it, and the pair must hold; at a step where the selector names a
/// frozen chain that chain pays its own hold probability.
fn pair_decode(
    model: &HouseholdModel,
    y: &AggregateSeries,
    tables: &DecodeTables,
    states: &[Vec<usize>],
    m: usize,
    n: usize,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let t_len = y.len();
    let i_count = states.len();
    let km = model.chains[m].num_states();
    let kn = model.chains[n].num_states();
    let means_m = &model.chains[m].means;
    let means_n = &model.chains[n].means;

    let fixed_mu: Vec<f64> = (0..t_len)
        .map(|t| {
            (0..i_count)
                .filter(|&i| i != m && i != n)
                .map(|i| model.chains[i].means[states[i][t]])
                .sum()
        })
        .collect();

    // changed[t] = Some(q) when frozen chain q moves into step t, which pins
    // the selector there. Two frozen movers at once would mean the incumbent
    // was already infeasible.
    let mut changed: Vec<Option<usize>> = vec![None; t_len];
    for t in 1..t_len {
        for i in (0..i_count).filter(|&i| i != m && i != n) {
            if states[i][t] != states[i][t - 1] {
                if changed[t].is_some() {
                    return Err(Error::Internal(
                        "incumbent assignment has two frozen chains changing at once".into(),
                    ));
                }
                changed[t] = Some(i);
            }
        }
    }

    // Log factor the frozen chains contribute entering step t when the
    // selector picks z; -inf marks selector values the frozen chains forbid.
    let fixed_factor = |t: usize, z: usize| -> f64 {
        match changed[t] {
            Some(q) => {
                if z != q {
                    return f64::NEG_INFINITY;
                }
                let k = model.chains[q].num_states();
                tables.chain_ln(q, t, states[q][t - 1], states[q][t], k)
            }
            None => {
                if z == m || z == n {
                    0.0
                } else {
                    let k = model.chains[z].num_states();
                    let s = states[z][t];
                    tables.chain_ln(z, t, s, s, k)
                }
            }
        }
    };

    let idx = |a: usize, b: usize, z: usize| (a * kn + b) * i_count + z;
    let n_states = km * kn * i_count;

    let mut score = vec![f64::NEG_INFINITY; n_states];
    let mut next = vec![f64::NEG_INFINITY; n_states];
    let mut back = vec![0usize; n_states * t_len];

    // Frozen chains' initial factors are constant across this DP and are
    // restored by the joint recompute on adoption, so they are left out.
    for a in 0..km {
        for b in 0..kn {
            let em = tables.em(0, means_m[a] + means_n[b] + fixed_mu[0], y.values[0]);
            for zv in 0..i_count {
                score[idx(a, b, zv)] =
                    tables.sel_init_ln[zv] + tables.init_ln[m][a] + tables.init_ln[n][b] + em;
            }
        }
    }

    for t in 1..t_len {
        for a2 in 0..km {
            for b2 in 0..kn {
                let em = tables.em(t, means_m[a2] + means_n[b2] + fixed_mu[t], y.values[t]);
                for z2 in 0..i_count {
                    let target = idx(a2, b2, z2);
                    let ff = fixed_factor(t, z2);
                    if ff == f64::NEG_INFINITY {
                        next[target] = f64::NEG_INFINITY;
                        back[t * n_states + target] = 0;
                        continue;
                    }
                    let mut best = f64::NEG_INFINITY;
                    let mut best_src = 0usize;
                    if z2 == m {
                        // m may move into a2; n holds at b2.
                        for a in 0..km {
                            let move_ln = tables.chain_ln(m, t, a, a2, km);
                            for zv in 0..i_count {
                                let src = idx(a, b2, zv);
                                let cand = score[src] + tables.sel_ln(zv, z2) + move_ln;
                                if cand > best {
                                    best = cand;
                                    best_src = src;
                                }
                            }
                        }
                    } else if z2 == n {
                        for b in 0..kn {
                            let move_ln = tables.chain_ln(n, t, b, b2, kn);
                            for zv in 0..i_count {
                                let src = idx(a2, b, zv);
                                let cand = score[src] + tables.sel_ln(zv, z2) + move_ln;
                                if cand > best {
                                    best = cand;
                                    best_src = src;
                                }
                            }
                        }
                    } else {
                        // A frozen chain is selected: both m and n hold.
                        for zv in 0..i_count {
                            let src = idx(a2, b2, zv);
                            let cand = score[src] + tables.sel_ln(zv, z2);
                            if cand > best {
                                best = cand;
                                best_src = src;
                            }
                        }
                    }
                    next[target] = best + ff + em;
                    back[t * n_states + target] = best_src;
                }
            }
        }
        std::mem::swap(&mut score, &mut next);
    }

    let mut best = f64::NEG_INFINITY;
    let mut cursor = 0usize;
    for (i, &v) in score.iter().enumerate() {
        if v > best {
            best = v;
            cursor = i;
        }
    }

    let mut sm = vec![0usize; t_len];
    let mut sn = vec![0usize; t_len];
    let mut zp = vec![0usize; t_len];
    for t in (0..t_len).rev() {
        zp[t] = cursor % i_count;
        let ab = cursor / i_count;
        sn[t] = ab % kn;
        sm[t] = ab / kn;
        if t > 0 {
            cursor = back[t * n_states + cursor];
        }
    }
    Ok((sm, sn, zp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChainParams, NoiseModel, SamplingSpec, SelectorParams, TransitionMatrix};
    use approx::assert_relative_eq;

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

    fn interleaved_model() -> HouseholdModel {
        HouseholdModel::new(
            SamplingSpec::default(),
            vec![
                chain(
                    "big",
                    vec![0.0, 100.0],
                    vec![0.9, 0.1],
                    vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                ),
                chain(
                    "small",
                    vec![0.0, 30.0],
                    vec![0.9, 0.1],
                    vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                ),
                chain(
                    "mid",
                    vec![0.0, 60.0],
                    vec![0.9, 0.1],
                    vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                ),
            ],
            Some(
                SelectorParams::new(
                    vec![1.0 / 3.0; 3],
                    TransitionMatrix::new(vec![vec![1.0 / 3.0; 3]; 3]).unwrap(),
                )
                .unwrap(),
            ),
            NoiseModel::Global(2.0),
        )
        .unwrap()
    }

    #[test]
    fn result_is_feasible_and_scored_consistently() {
        let model = interleaved_model();
        let y = AggregateSeries::new(vec![0.0, 100.0, 130.0, 190.0, 90.0, 60.0], 0).unwrap();
        let r = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &DecodeConfig::default())
            .unwrap();
        assert!(r.assignment.one_at_a_time_holds());
        assert!(r.update_deltas.iter().all(|&d| d >= 0.0));
        assert_relative_eq!(
            r.log_posterior,
            joint_log_prob(&model, &y, &r.assignment, ModelVariant::Ifhmm).unwrap(),
            max_relative = 1e-12
        );
        // The trajectory needs a change at every step after t=1; decoded
        // energy should track the jumps the aggregate spells out.
        assert_eq!(r.assignment.states[0][1], 1, "big turns on at t=1");
    }

    #[test]
    fn one_at_a_time_shapes_the_decode() {
        let model = interleaved_model();
        // 0 -> 190 in one step wants several chains to flip at once; the
        // decoder has to stage the ramp one change per step (the initial
        // configuration itself is unconstrained).
        let y = AggregateSeries::new(vec![0.0, 190.0, 190.0, 190.0], 0).unwrap();
        let r = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &DecodeConfig::default())
            .unwrap();
        assert!(r.assignment.one_at_a_time_holds());
        let states = &r.assignment.states;
        for t in 1..4 {
            let changes = (0..3).filter(|&i| states[i][t] != states[i][t - 1]).count();
            assert!(changes <= 1, "step {t} changes {changes} chains");
        }
        assert_relative_eq!(
            r.log_posterior,
            joint_log_prob(&model, &y, &r.assignment, ModelVariant::Ifhmm).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn decoding_is_deterministic() {
        let model = interleaved_model();
        let y = AggregateSeries::new(vec![30.0, 130.0, 160.0, 60.0, 0.0], 5).unwrap();
        let a = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &DecodeConfig::default())
            .unwrap();
        let b = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &DecodeConfig::default())
            .unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.log_posterior, b.log_posterior);
    }

    #[test]
    fn rejects_factorial_variants() {
        let model = interleaved_model();
        let y = AggregateSeries::new(vec![0.0], 0).unwrap();
        let err = interleaved_viterbi(&model, &y, ModelVariant::Fhmm, &DecodeConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("chainwise_viterbi"), "{err}");
    }

    #[test]
    fn single_chain_household_decodes_exactly() {
        let model = HouseholdModel::new(
            SamplingSpec::default(),
            vec![chain(
                "only",
                vec![0.0, 50.0],
                vec![0.6, 0.4],
                vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            )],
            Some(
                SelectorParams::new(vec![1.0], TransitionMatrix::new(vec![vec![1.0]]).unwrap())
                    .unwrap(),
            ),
            NoiseModel::Global(2.0),
        )
        .unwrap();
        let y = AggregateSeries::new(vec![0.0, 50.0, 50.0, 0.0], 0).unwrap();
        let r = interleaved_viterbi(&model, &y, ModelVariant::Ifhmm, &DecodeConfig::default())
            .unwrap();
        assert_eq!(r.assignment.states[0], vec![0, 1, 1, 0]);
        assert_eq!(r.assignment.selector.as_deref(), Some(&[0, 0, 0, 0][..]));
        assert!(r.converged);
    }
}
