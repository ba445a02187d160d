//! The joint log-probability the whole crate optimizes, and its factors.

use crate::error::{Error, Result};
use crate::model::types::{
    AggregateSeries, ApplianceMatrix, HouseholdModel, ModelVariant, StateAssignment,
};

const LN_2PI: f64 = 1.8378770664093453;

/// Sums per-appliance traces into an aggregate series on the same grid.
pub fn aggregate(x: &ApplianceMatrix) -> AggregateSeries {
    let t_len = x.num_steps();
    let mut values = vec![0.0; t_len];
    for row in &x.values {
        for (t, v) in row.iter().enumerate() {
            values[t] += v;
        }
    }
    // Rows are validated non-negative and finite, so the sums are too.
    AggregateSeries {
        values,
        start_step: x.start_step,
    }
}

/// log N(y; mu, sigma^2) for mean `mu` and standard deviation `sigma`.
pub(crate) fn gaussian_log_density(y: f64, mu: f64, sigma: f64) -> f64 {
    let dev = (y - mu) / sigma;
    -0.5 * (LN_2PI + 2.0 * sigma.ln() + dev * dev)
}

/// Log density of observing aggregate `y_t` when the chains occupy
/// `states_at_t`; `abs_step` locates the step within the day for per-bin
/// noise. Callers must pass one in-range state per chain.
pub fn emission_log_density(
    model: &HouseholdModel,
    states_at_t: &[usize],
    y_t: f64,
    abs_step: usize,
) -> f64 {
    assert_eq!(
        states_at_t.len(),
        model.num_chains(),
        "one state per chain required"
    );
    let mu: f64 = model
        .chains
        .iter()
        .zip(states_at_t)
        .map(|(c, &s)| c.means[s])
        .sum();
    let sigma = model.noise.sigma_at(&model.sampling, abs_step);
    gaussian_log_density(y_t, mu, sigma)
}

/// Log probability of chain `chain` moving `prev -> next` into absolute step
/// `abs_step` (the *destination* step's bin selects the table for
/// non-homogeneous variants).
///
/// For interleaved variants `z_t` names the chain allowed to switch at this
/// step: any other chain contributes `0.0` when it holds and `-inf` when it
/// moves. `z_t` must be `Some` exactly for interleaved variants.
pub fn transition_log_prob(
    model: &HouseholdModel,
    chain: usize,
    abs_step: usize,
    next: usize,
    prev: usize,
    z_t: Option<usize>,
    variant: ModelVariant,
) -> f64 {
    if variant.interleaved() {
        let z = z_t.expect("interleaved variants require the selector value");
        if z != chain {
            return if next == prev { 0.0 } else { f64::NEG_INFINITY };
        }
    } else {
        debug_assert!(z_t.is_none(), "selector value given for a factorial variant");
    }
    let params = &model.chains[chain];
    let table = if variant.nonhomogeneous() {
        let bin = model.sampling.bin_of_step(abs_step);
        &params.per_bin.as_ref().expect("per-bin tables required")[bin]
    } else {
        params.homogeneous.as_ref().expect("homogeneous table required")
    };
    table.log_prob(next, prev)
}

/// Joint log probability `log p(y, a)` of an observed aggregate series and a
/// hidden trajectory under `variant`.
///
/// Factors: selector initial and transitions (interleaved variants), chain
/// initial distributions, per-step transitions (with the hold constraint for
/// unselected chains), and the Gaussian emission at every step. Returns
/// `-inf` for assignments the variant forbids (for instance an unselected
/// chain changing state); shape mismatches and a missing or extraneous
/// selector path are reported as errors instead.
pub fn joint_log_prob(
    model: &HouseholdModel,
    y: &AggregateSeries,
    a: &StateAssignment,
    variant: ModelVariant,
) -> Result<f64> {
    model.supports(variant)?;
    a.validate_against(model)?;
    let t_len = y.len();
    if a.num_steps() != t_len {
        return Err(Error::LengthMismatch(format!(
            "assignment covers {} steps, series has {t_len}",
            a.num_steps()
        )));
    }
    if variant.interleaved() != a.selector.is_some() {
        return Err(Error::InvalidParameter(format!(
            "variant {variant} {} a selector path",
            if variant.interleaved() {
                "requires"
            } else {
                "does not take"
            }
        )));
    }

    let mut lp = 0.0;
    if let Some(z) = &a.selector {
        let sel = model.selector.as_ref().expect("checked by supports");
        lp += sel.initial[z[0]].ln();
        for t in 1..t_len {
            lp += sel.transitions.log_prob(z[t], z[t - 1]);
        }
    }
    for (i, chain) in model.chains.iter().enumerate() {
        lp += chain.initial[a.states[i][0]].ln();
    }
    let mut states_at_t = vec![0usize; a.num_chains()];
    for t in 0..t_len {
        for (i, row) in a.states.iter().enumerate() {
            states_at_t[i] = row[t];
        }
        lp += emission_log_density(model, &states_at_t, y.values[t], y.abs_step(t));
        if t > 0 {
            let z_t = a.selector.as_ref().map(|z| z[t]);
            for (i, row) in a.states.iter().enumerate() {
                lp += transition_log_prob(
                    model,
                    i,
                    y.abs_step(t),
                    row[t],
                    row[t - 1],
                    z_t,
                    variant,
                );
            }
        }
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::types::{
        ChainParams, NoiseModel, SamplingSpec, SelectorParams, TransitionMatrix,
    };
    use approx::assert_relative_eq;

    fn chain(label: &str, means: Vec<f64>, initial: Vec<f64>, rows: Vec<Vec<f64>>) -> ChainParams {
        let m = TransitionMatrix::new(rows).unwrap();
        let per_bin = vec![m.clone(); SamplingSpec::default().bins_per_day];
        ChainParams::new(label.into(), means, initial, Some(m), Some(per_bin)).unwrap()
    }

    fn simple_model(sigma: f64) -> HouseholdModel {
        HouseholdModel::new(
            SamplingSpec::default(),
            vec![
                chain(
                    "a",
                    vec![0.0, 100.0],
                    vec![0.5, 0.5],
                    vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                ),
                chain(
                    "b",
                    vec![0.0, 50.0],
                    vec![0.25, 0.75],
                    vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                ),
            ],
            Some(
                SelectorParams::new(
                    vec![0.5, 0.5],
                    TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
                )
                .unwrap(),
            ),
            NoiseModel::Global(sigma),
        )
        .unwrap()
    }

    #[test]
    fn aggregate_sums_rows() {
        let x = ApplianceMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0]],
            5,
        )
        .unwrap();
        let y = aggregate(&x);
        assert_eq!(y.values, vec![11.0, 22.0, 33.0]);
        assert_eq!(y.start_step, 5);
    }

    #[test]
    fn gaussian_log_density_reference_values() {
        // Standard normal at its mean: -0.5 ln(2 pi).
        assert_relative_eq!(
            gaussian_log_density(0.0, 0.0, 1.0),
            -0.9189385332046727,
            max_relative = 1e-12
        );
        // One standard deviation out.
        assert_relative_eq!(
            gaussian_log_density(1.0, 0.0, 1.0),
            -1.4189385332046727,
            max_relative = 1e-12
        );
        // sigma = 2, deviation 2: -0.5(ln 2pi + 2 ln 2) - 0.5.
        assert_relative_eq!(
            gaussian_log_density(2.0, 0.0, 2.0),
            -2.112085713764618,
            max_relative = 1e-12
        );
    }

    #[test]
    fn emission_adds_means_across_chains() {
        let model = simple_model(1.0);
        // States (1, 1): mu = 100 + 50; observing exactly 150 hits the peak.
        assert_relative_eq!(
            emission_log_density(&model, &[1, 1], 150.0, 0),
            -0.9189385332046727,
            max_relative = 1e-12
        );
        // One sigma off the summed mean.
        assert_relative_eq!(
            emission_log_density(&model, &[1, 0], 101.0, 0),
            -1.4189385332046727,
            max_relative = 1e-12
        );
    }

    #[test]
    fn per_bin_noise_selects_by_destination_bin() {
        let mut model = simple_model(1.0);
        let mut sigmas = vec![1.0; 24];
        sigmas[1] = 2.0;
        model.noise = NoiseModel::PerBin(sigmas);
        // Steps 0..30 are bin 0 (sigma 1), steps 30..60 bin 1 (sigma 2).
        assert_relative_eq!(
            emission_log_density(&model, &[1, 1], 152.0, 29),
            gaussian_log_density(2.0, 0.0, 1.0),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            emission_log_density(&model, &[1, 1], 152.0, 30),
            gaussian_log_density(2.0, 0.0, 2.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn factorial_transition_reads_the_right_table() {
        let model = simple_model(1.0);
        assert_relative_eq!(
            transition_log_prob(&model, 0, 3, 1, 0, None, ModelVariant::Fhmm),
            0.1f64.ln(),
            max_relative = 1e-12
        );
        // Chain b is uniform: ln 0.25 would be two independent steps; one step
        // is ln 0.5.
        assert_relative_eq!(
            transition_log_prob(&model, 1, 3, 0, 1, None, ModelVariant::Fnhmm),
            0.5f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn interleaved_transition_enforces_holds() {
        let model = simple_model(1.0);
        // Unselected chain holding: probability one.
        assert_eq!(
            transition_log_prob(&model, 0, 3, 1, 1, Some(1), ModelVariant::Ifhmm),
            0.0
        );
        // Unselected chain moving: impossible.
        assert_eq!(
            transition_log_prob(&model, 0, 3, 0, 1, Some(1), ModelVariant::Ifhmm),
            f64::NEG_INFINITY
        );
        // The selected chain pays its own matrix even to hold.
        assert_relative_eq!(
            transition_log_prob(&model, 0, 3, 1, 1, Some(0), ModelVariant::Ifhmm),
            0.8f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn joint_log_prob_single_chain_single_step() {
        // One chain, one state, one step: only the initial probability (ln 1)
        // and the emission at the mean survive.
        let model = HouseholdModel::new(
            SamplingSpec::default(),
            vec![ChainParams::new(
                "only".into(),
                vec![5.0],
                vec![1.0],
                Some(TransitionMatrix::new(vec![vec![1.0]]).unwrap()),
                None,
            )
            .unwrap()],
            None,
            NoiseModel::Global(1.0),
        )
        .unwrap();
        let y = AggregateSeries::new(vec![5.0], 0).unwrap();
        let a = StateAssignment::new(vec![vec![0]], None).unwrap();
        let lp = joint_log_prob(&model, &y, &a, ModelVariant::Fhmm).unwrap();
        assert_relative_eq!(lp, -0.9189385332046727, max_relative = 1e-12);
    }

    #[test]
    fn joint_log_prob_hand_computed_two_steps() {
        let model = simple_model(1.0);
        let y = AggregateSeries::new(vec![150.0, 50.0], 0).unwrap();
        let a = StateAssignment::new(vec![vec![1, 0], vec![1, 1]], None).unwrap();
        let lp = joint_log_prob(&model, &y, &a, ModelVariant::Fhmm).unwrap();
        // init: ln .5 + ln .75; transitions: ln .2 (a: 1->0) + ln .5 (b hold);
        // emissions both exactly at mean.
        let expected = 0.5f64.ln() + 0.75f64.ln() + 0.2f64.ln() + 0.5f64.ln()
            - 2.0 * 0.9189385332046727;
        assert_relative_eq!(lp, expected, max_relative = 1e-12);
    }

    #[test]
    fn joint_log_prob_interleaved_hand_computed() {
        let model = simple_model(1.0);
        let y = AggregateSeries::new(vec![150.0, 50.0], 0).unwrap();
        // Selector picks chain 0 at t=1; chain 0 drops to state 0, chain 1 holds.
        let a = StateAssignment::new(vec![vec![1, 0], vec![1, 1]], Some(vec![0, 0])).unwrap();
        let lp = joint_log_prob(&model, &y, &a, ModelVariant::Ifhmm).unwrap();
        // selector: ln .5 (initial) + ln .5 (0->0); chains init ln .5 + ln .75;
        // chain 0 pays ln .2, chain 1 holds for free; emissions at mean.
        let expected = 0.5f64.ln() + 0.5f64.ln() + 0.5f64.ln() + 0.75f64.ln() + 0.2f64.ln()
            - 2.0 * 0.9189385332046727;
        assert_relative_eq!(lp, expected, max_relative = 1e-12);
    }

    #[test]
    fn joint_log_prob_interleaved_violation_is_neg_inf() {
        let model = simple_model(1.0);
        let y = AggregateSeries::new(vec![150.0, 0.0], 0).unwrap();
        // Both chains change at t=1; the selector can only license one.
        let a = StateAssignment::new(vec![vec![1, 0], vec![1, 0]], Some(vec![0, 0])).unwrap();
        let lp = joint_log_prob(&model, &y, &a, ModelVariant::Ifhmm).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn joint_log_prob_shape_errors_are_errors_not_neg_inf() {
        let model = simple_model(1.0);
        let y = AggregateSeries::new(vec![150.0, 50.0], 0).unwrap();
        // Too few steps in the assignment.
        let short = StateAssignment::new(vec![vec![1], vec![1]], None).unwrap();
        assert!(joint_log_prob(&model, &y, &short, ModelVariant::Fhmm).is_err());
        // Selector path with a factorial variant.
        let with_z = StateAssignment::new(vec![vec![1, 0], vec![1, 1]], Some(vec![0, 0])).unwrap();
        assert!(joint_log_prob(&model, &y, &with_z, ModelVariant::Fhmm).is_err());
        // Missing selector path with an interleaved variant.
        let without_z = StateAssignment::new(vec![vec![1, 0], vec![1, 1]], None).unwrap();
        assert!(joint_log_prob(&model, &y, &without_z, ModelVariant::Ifhmm).is_err());
    }

    #[test]
    fn joint_log_prob_is_invariant_under_state_relabeling() {
        // Swap the two states of chain 0 everywhere (means, initial, both
        // matrix axes) and relabel the assignment accordingly: the joint
        // probability is a sum over matched factors, so it cannot change.
        // The permuted model violates the ascending-means convention, so it is
        // assembled literally rather than through the constructors.
        let model = simple_model(1.0);
        let y = AggregateSeries::new(vec![150.0, 50.0, 100.0], 0).unwrap();
        let a = StateAssignment::new(vec![vec![1, 0, 1], vec![1, 1, 0]], None).unwrap();
        let lp = joint_log_prob(&model, &y, &a, ModelVariant::Fhmm).unwrap();

        let mut permuted = model.clone();
        let c = &mut permuted.chains[0];
        c.means.swap(0, 1);
        c.initial.swap(0, 1);
        let rows = c.homogeneous.as_ref().unwrap().rows().to_vec();
        // A doubly-permuted stochastic matrix is still stochastic, so the
        // ordinary constructor accepts it.
        c.homogeneous = Some(
            TransitionMatrix::new(vec![
                vec![rows[1][1], rows[1][0]],
                vec![rows[0][1], rows[0][0]],
            ])
            .unwrap(),
        );
        c.per_bin = None;
        let a_perm = StateAssignment::new(vec![vec![0, 1, 0], vec![1, 1, 0]], None).unwrap();
        let lp_perm = joint_log_prob(&permuted, &y, &a_perm, ModelVariant::Fhmm).unwrap();
        assert_relative_eq!(lp, lp_perm, max_relative = 1e-12);
    }
}
