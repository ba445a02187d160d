//! Supervised maximum-likelihood training from labelled appliance traces.
//!
//! Training quantizes each appliance's trace into energy levels (exact 1-D
//! k-means), reads off state sequences, and estimates initial, transition,
//! selector, and noise parameters by smoothed counting. One pass produces a
//! model carrying *both* homogeneous and per-bin transition tables plus a
//! selector chain, so the same trained model can be decoded under any of the
//! four variants.

mod kmeans;

pub use kmeans::{quantize_appliance, Quantization, EXACT_DISTINCT_LIMIT};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{
    aggregate, AggregateSeries, ApplianceMatrix, ChainParams, HouseholdModel, NoiseModel,
    SamplingSpec, SelectorParams, TransitionMatrix, SIGMA_FLOOR,
};

/// Knobs for [`train`]. `num_states` applies to every appliance unless an
/// entry in `num_states_overrides` names it specifically.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub num_states: usize,
    pub num_states_overrides: BTreeMap<String, usize>,
    /// Time-of-day bins for the per-bin transition tables (and per-bin noise
    /// when enabled); the trained model's `SamplingSpec` gets this value.
    pub bins_per_day: usize,
    /// Additive smoothing pseudo-count for every estimated distribution.
    pub smoothing_alpha: f64,
    pub sigma_floor: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Estimate one noise sigma per time-of-day bin instead of one global.
    pub per_bin_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_states: 3,
            num_states_overrides: BTreeMap::new(),
            bins_per_day: 24,
            smoothing_alpha: 0.5,
            sigma_floor: SIGMA_FLOOR,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            per_bin_noise: false,
        }
    }
}

impl TrainConfig {
    pub fn states_for(&self, appliance: &str) -> usize {
        self.num_states_overrides
            .get(appliance)
            .copied()
            .unwrap_or(self.num_states)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_states_overrides.values().any(|&k| k == 0) {
            return Err(Error::InvalidParameter(
                "every appliance needs at least one state".into(),
            ));
        }
        if self.bins_per_day == 0 {
            return Err(Error::InvalidParameter("bins_per_day must be >= 1".into()));
        }
        if !self.smoothing_alpha.is_finite() || self.smoothing_alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "smoothing alpha {} must be finite and >= 0",
                self.smoothing_alpha
            )));
        }
        if !self.sigma_floor.is_finite() || self.sigma_floor < SIGMA_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "sigma floor {} must be >= {SIGMA_FLOOR}",
                self.sigma_floor
            )));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::InvalidParameter("kmeans_max_iter must be >= 1".into()));
        }
        if !self.kmeans_tol.is_finite() || self.kmeans_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kmeans tolerance {} must be finite and >= 0",
                self.kmeans_tol
            )));
        }
        Ok(())
    }
}

/// Per-appliance ground-truth traces, optionally with the observed aggregate.
/// When the aggregate is absent (sub-metered data without a site meter) the
/// noiseless row sum stands in for it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub appliances: ApplianceMatrix,
    pub aggregate: Option<AggregateSeries>,
    pub sampling: SamplingSpec,
}

impl LabeledDataset {
    pub fn new(
        appliances: ApplianceMatrix,
        aggregate: Option<AggregateSeries>,
        sampling: SamplingSpec,
    ) -> Result<Self> {
        if let Some(y) = &aggregate {
            if y.len() != appliances.num_steps() {
                return Err(Error::LengthMismatch(format!(
                    "aggregate has {} steps, appliance traces have {}",
                    y.len(),
                    appliances.num_steps()
                )));
            }
            if y.start_step != appliances.start_step {
                return Err(Error::InvalidParameter(format!(
                    "aggregate starts at step {} but appliance traces at {}",
                    y.start_step, appliances.start_step
                )));
            }
        }
        Ok(LabeledDataset {
            appliances,
            aggregate,
            sampling,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.appliances.num_steps()
    }

    /// The observed aggregate, or the appliance row sum when none was
    /// recorded.
    pub fn aggregate_series(&self) -> AggregateSeries {
        match &self.aggregate {
            Some(y) => y.clone(),
            None => aggregate(&self.appliances),
        }
    }
}

/// A transition structure estimated for one chain.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionTable {
    Homogeneous(TransitionMatrix),
    PerBin(Vec<TransitionMatrix>),
}

fn smooth_row(counts: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    let k = counts.len() as f64;
    if total == 0.0 && alpha == 0.0 {
        return None;
    }
    Some(counts.iter().map(|&c| (c + alpha) / (total + alpha * k)).collect())
}

/// Estimates the initial distribution and transition table of one chain from
/// its per-step state labels.
///
/// Initial-state evidence is the label at every step that begins a day
/// (plus the very first step when the series starts mid-day); transition
/// counts come from consecutive label pairs, assigned to the *destination*
/// step's time-of-day bin in per-bin mode. All counts receive `alpha`
/// additive smoothing. With `alpha = 0`, a state that never emits an
/// observed transition has no estimable row and is reported as an error.
pub fn estimate_chain_params(
    labels: &[usize],
    k: usize,
    homogeneous: bool,
    sampling: &SamplingSpec,
    start_step: usize,
    alpha: f64,
) -> Result<(Vec<f64>, TransitionTable)> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("no labels to estimate from".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("chain needs at least one state".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {k} states"
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing alpha {alpha} must be finite and >= 0"
        )));
    }

    let spd = sampling.steps_per_day();
    let mut init_counts = vec![0.0f64; k];
    init_counts[labels[0]] += 1.0;
    for (t, &l) in labels.iter().enumerate().skip(1) {
        if (start_step + t) % spd == 0 {
            init_counts[l] += 1.0;
        }
    }
    // At least one day-start count exists, so this cannot be None.
    let initial = smooth_row(&init_counts, alpha).expect("first step always counts");

    let table = if homogeneous {
        let mut counts = vec![vec![0.0f64; k]; k];
        for t in 1..labels.len() {
            counts[labels[t - 1]][labels[t]] += 1.0;
        }
        let rows = rows_from_counts(&counts, alpha, |from| {
            format!("state {from} has no observed outgoing transitions and alpha = 0")
        })?;
        TransitionTable::Homogeneous(TransitionMatrix::new(rows)?)
    } else {
        let bins = sampling.bins_per_day;
        let mut counts = vec![vec![vec![0.0f64; k]; k]; bins];
        for t in 1..labels.len() {
            let bin = sampling.bin_of_step(start_step + t);
            counts[bin][labels[t - 1]][labels[t]] += 1.0;
        }
        let mut tables = Vec::with_capacity(bins);
        for (bin, c) in counts.iter().enumerate() {
            let rows = rows_from_counts(c, alpha, |from| {
                format!(
                    "state {from} has no observed outgoing transitions in bin {bin} and alpha = 0"
                )
            })?;
            tables.push(TransitionMatrix::new(rows)?);
        }
        TransitionTable::PerBin(tables)
    };
    Ok((initial, table))
}

fn rows_from_counts(
    counts: &[Vec<f64>],
    alpha: f64,
    describe: impl Fn(usize) -> String,
) -> Result<Vec<Vec<f64>>> {
    counts
        .iter()
        .enumerate()
        .map(|(from, row)| smooth_row(row, alpha).ok_or_else(|| Error::Estimation(describe(from))))
        .collect()
}

/// Estimates the selector chain from every appliance's state labels.
///
/// The selector's hidden path is reconstructed deterministically: at each
/// step the chain that changed state is the selected one; if several changed
/// at once (possible in real data, impossible under the interleaved model)
/// the one with the largest energy jump `|mean[new] - mean[old]|` is charged
/// with the step, ties toward the lower chain index; if none changed the
/// previous selection persists, defaulting to chain 0 before any event.
/// The initial distribution counts the reconstructed first selection only
/// when at least one change event was observed — a fully static recording
/// carries no evidence about who moves first — and falls back to uniform
/// when there are no counts and no smoothing.
pub fn estimate_selector_params(
    labels: &[Vec<usize>],
    means: &[Vec<f64>],
    alpha: f64,
) -> Result<SelectorParams> {
    let i_count = labels.len();
    if i_count == 0 || means.len() != i_count {
        return Err(Error::InvalidParameter(format!(
            "{i_count} label sequences with {} mean tables",
            means.len()
        )));
    }
    let t_len = labels[0].len();
    if t_len == 0 {
        return Err(Error::InvalidParameter("no labels to estimate from".into()));
    }
    for (i, seq) in labels.iter().enumerate() {
        if seq.len() != t_len {
            return Err(Error::LengthMismatch(format!(
                "chain {i} has {} labels, expected {t_len}",
                seq.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&l| l >= means[i].len()) {
            return Err(Error::InvalidParameter(format!(
                "chain {i} label {bad} out of range for {} states",
                means[i].len()
            )));
        }
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing alpha {alpha} must be finite and >= 0"
        )));
    }

    let mut z = vec![0usize; t_len];
    let mut any_event = false;
    for t in 1..t_len {
        let mut selected: Option<usize> = None;
        let mut best_jump = f64::NEG_INFINITY;
        for i in 0..i_count {
            let (prev, next) = (labels[i][t - 1], labels[i][t]);
            if prev != next {
                let jump = (means[i][next] - means[i][prev]).abs();
                if jump > best_jump {
                    best_jump = jump;
                    selected = Some(i);
                }
            }
        }
        match selected {
            Some(i) => {
                any_event = true;
                z[t] = i;
            }
            None => z[t] = z[t - 1],
        }
    }

    let mut init_counts = vec![0.0f64; i_count];
    if any_event {
        init_counts[z[0]] += 1.0;
    }
    let initial = smooth_row(&init_counts, alpha)
        .unwrap_or_else(|| vec![1.0 / i_count as f64; i_count]);

    let mut counts = vec![vec![0.0f64; i_count]; i_count];
    for t in 1..t_len {
        counts[z[t - 1]][z[t]] += 1.0;
    }
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            smooth_row(row, alpha).unwrap_or_else(|| vec![1.0 / i_count as f64; i_count])
        })
        .collect();
    SelectorParams::new(initial, TransitionMatrix::new(rows)?)
}

/// Estimates emission noise from the residuals between the observed
/// aggregate and the quantized reconstruction `sum_i mean_i[label_i[t]]`.
/// Sigmas are population standard deviations around the residual mean,
/// clamped to `sigma_floor`; in per-bin mode a bin with no samples falls
/// back to the floor.
pub fn estimate_noise(
    y: &AggregateSeries,
    quantized: &[Quantization],
    sampling: &SamplingSpec,
    per_bin: bool,
    sigma_floor: f64,
) -> Result<NoiseModel> {
    if quantized.is_empty() {
        return Err(Error::InvalidParameter("no quantized chains".into()));
    }
    for (i, q) in quantized.iter().enumerate() {
        if q.labels.len() != y.len() {
            return Err(Error::LengthMismatch(format!(
                "chain {i} has {} labels, aggregate has {} steps",
                q.labels.len(),
                y.len()
            )));
        }
    }
    if !sigma_floor.is_finite() || sigma_floor < SIGMA_FLOOR {
        return Err(Error::InvalidParameter(format!(
            "sigma floor {sigma_floor} must be >= {SIGMA_FLOOR}"
        )));
    }

    let residuals: Vec<f64> = (0..y.len())
        .map(|t| {
            let recon: f64 = quantized.iter().map(|q| q.means[q.labels[t]]).sum();
            y.values[t] - recon
        })
        .collect();

    fn pop_std(r: &[f64]) -> f64 {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
    }

    if per_bin {
        let mut by_bin: Vec<Vec<f64>> = vec![Vec::new(); sampling.bins_per_day];
        for (t, &r) in residuals.iter().enumerate() {
            by_bin[sampling.bin_of_step(y.abs_step(t))].push(r);
        }
        let sigmas = by_bin
            .iter()
            .map(|r| {
                if r.is_empty() {
                    sigma_floor
                } else {
                    pop_std(r).max(sigma_floor)
                }
            })
            .collect();
        Ok(NoiseModel::PerBin(sigmas))
    } else {
        Ok(NoiseModel::Global(pop_std(&residuals).max(sigma_floor)))
    }
}

/// A trained model plus anything worth surfacing about how training went.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: HouseholdModel,
    pub warnings: Vec<String>,
}

fn in_appliance(name: &str, e: Error) -> Error {
    match e {
        Error::Estimation(msg) => Error::Estimation(format!("appliance {name:?}: {msg}")),
        other => other,
    }
}

/// Trains a household model from labelled traces.
///
/// Every chain gets means from exact k-means quantization plus *both* a
/// homogeneous and a per-bin transition table; the selector chain and noise
/// model are always estimated too, so the output supports all four variants.
/// Quantizations that had to shrink below the requested state count surface
/// as warnings, not errors.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let sampling = SamplingSpec::new(data.sampling.interval_seconds, cfg.bins_per_day)?;
    let t_len = data.num_steps();
    if cfg.bins_per_day > 1 && t_len < sampling.steps_per_day() {
        return Err(Error::Estimation(format!(
            "training span of {t_len} steps is shorter than one day ({} steps); \
             time-of-day tables need at least a full day of data",
            sampling.steps_per_day()
        )));
    }

    let x = &data.appliances;
    let start = x.start_step;
    let mut warnings = Vec::new();
    let mut quants = Vec::with_capacity(x.num_appliances());
    let mut chains = Vec::with_capacity(x.num_appliances());
    for (i, name) in x.names.iter().enumerate() {
        let requested = cfg.states_for(name);
        let q = quantize_appliance(&x.values[i], requested, cfg.kmeans_max_iter, cfg.kmeans_tol)
            .map_err(|e| in_appliance(name, e))?;
        if let Some(req) = q.reduced_from {
            let k = q.num_states();
            if k == 1 && q.means[0] == 0.0 {
                warnings.push(format!(
                    "appliance {name:?} is constant at zero; retained as a 1-state chain"
                ));
            } else {
                warnings.push(format!(
                    "appliance {name:?} has only {k} distinct level(s); \
                     using {k} states instead of the requested {req}"
                ));
            }
        }
        let k = q.num_states();
        let (initial, hom) =
            estimate_chain_params(&q.labels, k, true, &sampling, start, cfg.smoothing_alpha)
                .map_err(|e| in_appliance(name, e))?;
        let (_, per_bin) =
            estimate_chain_params(&q.labels, k, false, &sampling, start, cfg.smoothing_alpha)
                .map_err(|e| in_appliance(name, e))?;
        let TransitionTable::Homogeneous(hom) = hom else {
            return Err(Error::Internal("homogeneous estimate came back binned".into()));
        };
        let TransitionTable::PerBin(per_bin) = per_bin else {
            return Err(Error::Internal("per-bin estimate came back homogeneous".into()));
        };
        chains.push(ChainParams::new(
            name.clone(),
            q.means.clone(),
            initial,
            Some(hom),
            Some(per_bin),
        )?);
        quants.push(q);
    }

    let labels: Vec<Vec<usize>> = quants.iter().map(|q| q.labels.clone()).collect();
    let means: Vec<Vec<f64>> = quants.iter().map(|q| q.means.clone()).collect();
    let selector = estimate_selector_params(&labels, &means, cfg.smoothing_alpha)?;

    let y = data.aggregate_series();
    let noise = estimate_noise(&y, &quants, &sampling, cfg.per_bin_noise, cfg.sigma_floor)?;

    let model = HouseholdModel::new(sampling, chains, Some(selector), noise)?;
    Ok(TrainOutput { model, warnings })
}
