//! Seeded generators for ground-truth households and traces.
//!
//! Everything here is a pure function of its inputs and a 64-bit seed, so
//! synthetic cohorts are reproducible across runs and machines.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    AggregateSeries, ApplianceMatrix, ChainParams, HouseholdModel, ModelVariant, NoiseModel,
    SamplingSpec, SelectorParams, StateAssignment, TransitionMatrix,
};

/// Knobs for [`sample_household_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_appliances: usize,
    pub states_per_appliance: usize,
    pub days: usize,
    pub sampling: SamplingSpec,
    /// Spacing between consecutive state means before the per-chain factor.
    pub mean_scale: f64,
    /// Diagonal mass of sampled transition rows, in (0, 1).
    pub self_loop_bias: f64,
    /// How hard the daily profile suppresses OFF->ON entries; 0 keeps every
    /// per-bin matrix identical to the homogeneous one.
    pub nonhomogeneous_strength: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_appliances: 5,
            states_per_appliance: 3,
            days: 25,
            sampling: SamplingSpec::default(),
            mean_scale: 100.0,
            self_loop_bias: 0.95,
            nonhomogeneous_strength: 1.0,
            noise_sigma: 10.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_appliances == 0 {
            return Err(Error::InvalidParameter(
                "num_appliances must be positive".into(),
            ));
        }
        if self.states_per_appliance < 2 {
            return Err(Error::InvalidParameter(
                "states_per_appliance must be at least 2".into(),
            ));
        }
        if self.days == 0 {
            return Err(Error::InvalidParameter("days must be positive".into()));
        }
        if !(self.mean_scale.is_finite() && self.mean_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean_scale = {}; must be a positive real",
                self.mean_scale
            )));
        }
        if !(self.self_loop_bias > 0.0 && self.self_loop_bias < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "self_loop_bias = {}; must lie strictly inside (0, 1)",
                self.self_loop_bias
            )));
        }
        if !(self.nonhomogeneous_strength.is_finite() && self.nonhomogeneous_strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nonhomogeneous_strength = {}; must be >= 0",
                self.nonhomogeneous_strength
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma = {}; must be a positive real",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// One simulated trace: the metered aggregate, the hidden per-appliance
/// traces it sums, the generating state assignment, and how many steps had
/// their noisy reading clipped up to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub aggregate: AggregateSeries,
    pub appliances: ApplianceMatrix,
    pub truth: StateAssignment,
    pub truncated_steps: usize,
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A self-loop-biased stochastic row: `bias` on the diagonal, the rest split
/// over the off-diagonal entries in random proportions.
fn biased_row(rng: &mut ChaCha8Rng, dim: usize, diag: usize, bias: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..dim - 1).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut row = Vec::with_capacity(dim);
    let mut j = 0;
    for c in 0..dim {
        if c == diag {
            row.push(bias);
        } else {
            row.push((1.0 - bias) * raw[j] / total);
            j += 1;
        }
    }
    row
}

/// Multiplier applied to OFF->ON probabilities in daily bin `b`: a raised
/// cosine trough over the first third of the day (appliances rarely start
/// overnight/early morning) and a matching peak over the last third
/// (activity concentrates in the evening). Strength 0 gives exactly 1
/// everywhere.
fn entry_profile(bin: usize, bins_per_day: usize, strength: f64) -> f64 {
    if strength == 0.0 || bins_per_day == 1 {
        return 1.0;
    }
    let block = (bins_per_day / 3).max(1);
    let weight = |offset: usize| {
        let x = (offset as f64 + 0.5) / block as f64;
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * x).cos())
    };
    if bin < block {
        1.0 / (1.0 + 3.0 * strength * weight(bin))
    } else if bin >= bins_per_day - block {
        1.0 + 3.0 * strength * weight(bin - (bins_per_day - block))
    } else {
        1.0
    }
}

/// Draws a household model supporting all four variants: homogeneous and
/// per-bin transition tables for every chain, plus a selector. Deterministic
/// in `cfg.seed`.
pub fn sample_household_model(cfg: &SimConfig) -> Result<HouseholdModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.states_per_appliance;
    let bins = cfg.sampling.bins_per_day;

    let mut chains = Vec::with_capacity(cfg.num_appliances);
    for i in 0..cfg.num_appliances {
        let spacing = cfg.mean_scale * (0.5 + rng.random::<f64>());
        let means: Vec<f64> = (0..k).map(|s| s as f64 * spacing).collect();

        // Mostly-off initial distribution.
        let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut initial: Vec<f64> = raw.iter().map(|v| 0.4 * v / total).collect();
        initial[0] += 0.6;

        let rows: Vec<Vec<f64>> = (0..k)
            .map(|r| biased_row(&mut rng, k, r, cfg.self_loop_bias))
            .collect();
        let homogeneous = TransitionMatrix::new(rows.clone())?;

        let mut per_bin = Vec::with_capacity(bins);
        for b in 0..bins {
            let mut g = entry_profile(b, bins, cfg.nonhomogeneous_strength);
            if g == 1.0 {
                per_bin.push(homogeneous.clone());
                continue;
            }
            let mut binned = rows.clone();
            let base_on: f64 = binned[0][1..].iter().sum();
            if base_on > 0.0 {
                // Keep the boosted row a valid distribution.
                g = g.min(0.9 / base_on);
            }
            for p in binned[0][1..].iter_mut() {
                *p *= g;
            }
            binned[0][0] = 1.0 - base_on * g;
            per_bin.push(TransitionMatrix::new(binned)?);
        }

        chains.push(ChainParams::new(
            format!("appliance_{i}"),
            means,
            initial,
            Some(homogeneous),
            Some(per_bin),
        )?);
    }

    let i_count = cfg.num_appliances;
    let sel_initial = vec![1.0 / i_count as f64; i_count];
    let sel_rows: Vec<Vec<f64>> = (0..i_count)
        .map(|r| biased_row(&mut rng, i_count, r, cfg.self_loop_bias))
        .collect();
    let selector = SelectorParams::new(sel_initial, TransitionMatrix::new(sel_rows)?)?;

    HouseholdModel::new(
        cfg.sampling,
        chains,
        Some(selector),
        NoiseModel::Global(cfg.noise_sigma),
    )
}

/// Samples `days` of data from `model` under `variant`'s generative story,
/// using the model's own emission noise.
pub fn simulate(
    model: &HouseholdModel,
    days: usize,
    variant: ModelVariant,
    seed: u64,
) -> Result<SimOutput> {
    simulate_with_noise(model, days, variant, seed, None)
}

/// [`simulate`] with the emission noise replaced by `sigma` when given.
/// `Some(0.0)` yields an exactly noiseless aggregate; model parameters are
/// floored away from zero, so this override is the only noiseless path.
///
/// State and noise draws come from separate streams derived from `seed`, so
/// two runs differing only in noise share the same hidden trajectory.
pub fn simulate_with_noise(
    model: &HouseholdModel,
    days: usize,
    variant: ModelVariant,
    seed: u64,
    sigma: Option<f64>,
) -> Result<SimOutput> {
    model.supports(variant)?;
    if days == 0 {
        return Err(Error::InvalidParameter("days must be positive".into()));
    }
    if let Some(s) = sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise override = {s}; must be a finite value >= 0"
            )));
        }
    }

    let t_len = days * model.sampling.steps_per_day();
    let i_count = model.num_chains();
    let interleaved = variant.interleaved();
    let mut rng_states = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_noise = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);

    fn row_at<'a>(
        model: &'a HouseholdModel,
        variant: ModelVariant,
        chain: usize,
        abs_step: usize,
        prev: usize,
    ) -> &'a [f64] {
        let chain = &model.chains[chain];
        let table = if variant.nonhomogeneous() {
            &chain.per_bin.as_ref().unwrap()[model.sampling.bin_of_step(abs_step)]
        } else {
            chain.homogeneous.as_ref().unwrap()
        };
        &table.rows()[prev]
    }

    let mut states: Vec<Vec<usize>> = vec![vec![0; t_len]; i_count];
    let mut zs: Vec<usize> = vec![0; t_len];
    for (i, chain) in model.chains.iter().enumerate() {
        states[i][0] = sample_categorical(&mut rng_states, &chain.initial);
    }
    if interleaved {
        let sel = model.selector.as_ref().unwrap();
        zs[0] = sample_categorical(&mut rng_states, &sel.initial);
        for t in 1..t_len {
            let z = sample_categorical(&mut rng_states, &sel.transitions.rows()[zs[t - 1]]);
            zs[t] = z;
            for i in 0..i_count {
                states[i][t] = states[i][t - 1];
            }
            let row = row_at(model, variant, z, t, states[z][t - 1]);
            states[z][t] = sample_categorical(&mut rng_states, row);
        }
    } else {
        for t in 1..t_len {
            for i in 0..i_count {
                let row = row_at(model, variant, i, t, states[i][t - 1]);
                states[i][t] = sample_categorical(&mut rng_states, row);
            }
        }
    }

    let x: Vec<Vec<f64>> = (0..i_count)
        .map(|i| {
            let means = &model.chains[i].means;
            states[i].iter().map(|&s| means[s]).collect()
        })
        .collect();

    let mut truncated_steps = 0usize;
    let mut y = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mu: f64 = x.iter().map(|row| row[t]).sum();
        let s = sigma.unwrap_or_else(|| model.noise.sigma_at(&model.sampling, t));
        let z: f64 = rng_noise.sample(StandardNormal);
        let mut v = mu + s * z;
        if v < 0.0 {
            v = 0.0;
            truncated_steps += 1;
        }
        y.push(v);
    }

    Ok(SimOutput {
        aggregate: AggregateSeries::new(y, 0)?,
        appliances: ApplianceMatrix::new(model.chain_labels(), x, 0)?,
        truth: StateAssignment::new(states, interleaved.then_some(zs))?,
        truncated_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::joint_log_prob;

    fn small_cfg() -> SimConfig {
        SimConfig {
            num_appliances: 2,
            states_per_appliance: 2,
            days: 2,
            noise_sigma: 5.0,
            seed: 11,
            ..SimConfig::default()
        }
    }

    #[test]
    fn model_sampling_is_deterministic() {
        let cfg = small_cfg();
        assert_eq!(
            sample_household_model(&cfg).unwrap(),
            sample_household_model(&cfg).unwrap()
        );
        let other = SimConfig { seed: 12, ..cfg };
        assert_ne!(
            sample_household_model(&other).unwrap(),
            sample_household_model(&small_cfg()).unwrap()
        );
    }

    #[test]
    fn zero_strength_collapses_per_bin_tables() {
        let cfg = SimConfig {
            nonhomogeneous_strength: 0.0,
            ..small_cfg()
        };
        let model = sample_household_model(&cfg).unwrap();
        for chain in &model.chains {
            let homog = chain.homogeneous.as_ref().unwrap();
            for binned in chain.per_bin.as_ref().unwrap() {
                assert_eq!(binned, homog);
            }
        }
    }

    #[test]
    fn daily_profile_shapes_on_entries() {
        let model = sample_household_model(&small_cfg()).unwrap();
        let chain = &model.chains[0];
        let homog = chain.homogeneous.as_ref().unwrap();
        let per_bin = chain.per_bin.as_ref().unwrap();
        // Mid-trough bin (24 bins -> trough covers bins 0..8, deepest near 4).
        assert!(per_bin[4].prob(1, 0) < homog.prob(1, 0));
        assert!(per_bin[4].prob(0, 0) > homog.prob(0, 0));
        // Mid-peak bin (peak covers bins 16..24, highest near 20).
        assert!(per_bin[20].prob(1, 0) > homog.prob(1, 0));
        assert!(per_bin[20].prob(0, 0) < homog.prob(0, 0));
        // Midday bins are untouched.
        assert_eq!(per_bin[12], *homog);
        // Rows other than OFF keep their shape everywhere.
        assert_eq!(per_bin[4].rows()[1], homog.rows()[1]);
        assert_eq!(per_bin[20].rows()[1], homog.rows()[1]);
    }

    #[test]
    fn sampled_models_support_every_variant() {
        let model = sample_household_model(&small_cfg()).unwrap();
        for v in ModelVariant::ALL {
            model.supports(v).unwrap();
        }
    }

    #[test]
    fn simulation_is_deterministic_and_consistent() {
        let model = sample_household_model(&small_cfg()).unwrap();
        for v in ModelVariant::ALL {
            let a = simulate(&model, 1, v, 7).unwrap();
            let b = simulate(&model, 1, v, 7).unwrap();
            assert_eq!(a, b);
            for i in 0..model.num_chains() {
                for t in 0..a.aggregate.len() {
                    assert_eq!(
                        a.appliances.values[i][t],
                        model.chains[i].means[a.truth.states[i][t]]
                    );
                }
            }
            let lp = joint_log_prob(&model, &a.aggregate, &a.truth, v).unwrap();
            assert!(lp.is_finite(), "{v}: joint of truth is {lp}");
        }
    }

    #[test]
    fn interleaved_truth_moves_one_chain_at_a_time() {
        let model = sample_household_model(&SimConfig {
            num_appliances: 4,
            ..small_cfg()
        })
        .unwrap();
        let out = simulate(&model, 2, ModelVariant::Ifnhmm, 3).unwrap();
        assert!(out.truth.one_at_a_time_holds());
        assert!(out.truth.selector.is_some());
        // Factorial truth carries no selector.
        let out = simulate(&model, 1, ModelVariant::Fhmm, 3).unwrap();
        assert!(out.truth.selector.is_none());
    }

    #[test]
    fn noise_override_zero_is_exactly_noiseless() {
        let model = sample_household_model(&small_cfg()).unwrap();
        let out = simulate_with_noise(&model, 1, ModelVariant::Fnhmm, 9, Some(0.0)).unwrap();
        for t in 0..out.aggregate.len() {
            let mu: f64 = (0..model.num_chains())
                .map(|i| out.appliances.values[i][t])
                .sum();
            assert_eq!(out.aggregate.values[t], mu);
        }
        assert_eq!(out.truncated_steps, 0);
    }

    #[test]
    fn noise_level_does_not_disturb_the_hidden_trajectory() {
        let model = sample_household_model(&small_cfg()).unwrap();
        let quiet = simulate_with_noise(&model, 1, ModelVariant::Ifhmm, 21, Some(0.0)).unwrap();
        let loud = simulate_with_noise(&model, 1, ModelVariant::Ifhmm, 21, Some(40.0)).unwrap();
        assert_eq!(quiet.truth, loud.truth);
        assert_ne!(quiet.aggregate, loud.aggregate);
    }

    #[test]
    fn truncation_is_counted() {
        let model = sample_household_model(&small_cfg()).unwrap();
        // Enormous noise on a mostly-zero aggregate clips roughly half the
        // steps; certainly at least one.
        let out = simulate_with_noise(&model, 1, ModelVariant::Fhmm, 2, Some(1e4)).unwrap();
        assert!(out.truncated_steps > 0);
        assert!(out.aggregate.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn long_run_transition_frequencies_match_the_model() {
        // One 2-state chain, homogeneous: empirical row frequencies over
        // 10^5 steps sit within 0.02 of the matrix.
        let cfg = SimConfig {
            num_appliances: 1,
            states_per_appliance: 2,
            self_loop_bias: 0.8,
            seed: 5,
            ..SimConfig::default()
        };
        let model = sample_household_model(&cfg).unwrap();
        let spd = model.sampling.steps_per_day();
        let days = 100_000usize.div_ceil(spd);
        let out = simulate(&model, days, ModelVariant::Fhmm, 31).unwrap();
        let path = &out.truth.states[0];
        let mut counts = [[0usize; 2]; 2];
        for t in 1..path.len() {
            counts[path[t - 1]][path[t]] += 1;
        }
        let homog = model.chains[0].homogeneous.as_ref().unwrap();
        for prev in 0..2 {
            let total: usize = counts[prev].iter().sum();
            for next in 0..2 {
                let emp = counts[prev][next] as f64 / total as f64;
                let diff = (emp - homog.prob(next, prev)).abs();
                assert!(
                    diff < 0.02,
                    "row {prev} -> {next}: empirical {emp} vs model {}",
                    homog.prob(next, prev)
                );
            }
        }
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        for bad in [
            SimConfig {
                num_appliances: 0,
                ..SimConfig::default()
            },
            SimConfig {
                states_per_appliance: 1,
                ..SimConfig::default()
            },
            SimConfig {
                self_loop_bias: 1.0,
                ..SimConfig::default()
            },
            SimConfig {
                nonhomogeneous_strength: -0.5,
                ..SimConfig::default()
            },
            SimConfig {
                noise_sigma: 0.0,
                ..SimConfig::default()
            },
        ] {
            assert!(sample_household_model(&bad).is_err());
        }
    }
}
