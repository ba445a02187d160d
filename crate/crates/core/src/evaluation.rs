//! Reconstruction metric and the cross-household comparison protocol.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{train, LabeledDataset, TrainConfig};
use crate::inference::{chainwise_viterbi, interleaved_viterbi, DecodeConfig};
use crate::model::{AggregateSeries, ApplianceMatrix, ModelVariant, SamplingSpec};

/// Normalized squared reconstruction error: the squared deviation between
/// estimated and true traces, pooled over appliances and steps, divided by
/// the pooled squared truth.
///
/// Scale-covariant (scaling truth and estimate together changes nothing),
/// zero exactly when the estimate matches the truth elementwise, and 1 for
/// the all-zero estimate. Undefined (an error) when the truth is all zero.
pub fn normalized_error(truth: &ApplianceMatrix, estimate: &ApplianceMatrix) -> Result<f64> {
    if truth.names != estimate.names {
        return Err(Error::LengthMismatch(format!(
            "appliance sets differ: truth has {:?}, estimate has {:?}",
            truth.names, estimate.names
        )));
    }
    if truth.num_steps() != estimate.num_steps() {
        return Err(Error::LengthMismatch(format!(
            "truth spans {} steps, estimate {}",
            truth.num_steps(),
            estimate.num_steps()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (tr, er) in truth.values.iter().zip(&estimate.values) {
        for (&x, &xh) in tr.iter().zip(er) {
            num += (xh - x) * (xh - x);
            den += x * x;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter(
            "truth is all zeros; the normalized error is undefined".into(),
        ));
    }
    Ok(num / den)
}

/// Cross-household error table for a set of model variants, plus the
/// protocol metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub variants: Vec<ModelVariant>,
    /// Evaluated household ids, in input order.
    pub household_ids: Vec<String>,
    /// `errors[h][v]` is household `household_ids[h]` under `variants[v]`.
    pub errors: Vec<Vec<f64>>,
    /// Households left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub train_days: usize,
    pub test_days: usize,
}

/// `m (s)` with three decimals, the layout comparison tables are printed in.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ({std:.3})")
}

impl ComparisonReport {
    /// Mean and population standard deviation of a variant's column across
    /// evaluated households; `None` when no household was evaluated.
    pub fn mean_std(&self, variant: ModelVariant) -> Option<(f64, f64)> {
        let v = self.variants.iter().position(|&x| x == variant)?;
        let n = self.errors.len();
        if n == 0 {
            return None;
        }
        let mean = self.errors.iter().map(|row| row[v]).sum::<f64>() / n as f64;
        let var = self
            .errors
            .iter()
            .map(|row| (row[v] - mean) * (row[v] - mean))
            .sum::<f64>()
            / n as f64;
        Some((mean, var.sqrt()))
    }

    /// Human-readable summary grid, one variant per row.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "normalized error over {} households ({} train days, {} test days)\n",
            self.errors.len(),
            self.train_days,
            self.test_days
        ));
        for &v in &self.variants {
            let cell = match self.mean_std(v) {
                Some((m, s)) => format_mean_std(m, s),
                None => "n/a".into(),
            };
            out.push_str(&format!("{:<8}{cell}\n", v.name()));
        }
        for (id, reason) in &self.skipped {
            out.push_str(&format!("skipped {id}: {reason}\n"));
        }
        out
    }

    /// Machine-readable report: `#`-prefixed metadata and summary lines
    /// around a household x variant CSV grid. Deterministic byte-for-byte
    /// given the same inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# disagg-compare/1\n");
        out.push_str(&format!(
            "# train_days={} test_days={}\n",
            self.train_days, self.test_days
        ));
        for &v in &self.variants {
            if let Some((m, s)) = self.mean_std(v) {
                out.push_str(&format!("# {} {}\n", v.name(), format_mean_std(m, s)));
            }
        }
        out.push_str("household");
        for &v in &self.variants {
            out.push(',');
            out.push_str(v.name());
        }
        out.push('\n');
        for (id, row) in self.household_ids.iter().zip(&self.errors) {
            out.push_str(id);
            for &e in row {
                out.push(',');
                out.push_str(&format!("{e}"));
            }
            out.push('\n');
        }
        for (id, reason) in &self.skipped {
            out.push_str(&format!("# skipped {id}: {reason}\n"));
        }
        out
    }
}

fn slice_days(
    data: &LabeledDataset,
    sampling: SamplingSpec,
    day_from: usize,
    day_to: usize,
) -> Result<LabeledDataset> {
    let spd = sampling.steps_per_day();
    let (a, b) = (day_from * spd, day_to * spd);
    let appliances = ApplianceMatrix::new(
        data.appliances.names.clone(),
        data.appliances
            .values
            .iter()
            .map(|row| row[a..b].to_vec())
            .collect(),
        data.appliances.start_step + a,
    )?;
    let aggregate = match &data.aggregate {
        Some(y) => Some(AggregateSeries::new(
            y.values[a..b].to_vec(),
            y.start_step + a,
        )?),
        None => None,
    };
    LabeledDataset::new(appliances, aggregate, sampling)
}

enum HouseholdOutcome {
    Evaluated(Vec<f64>),
    Skipped(String),
}

/// Runs the comparison protocol: for each household, train one model on the
/// first `train_days` of labeled data, decode the next `test_days` of the
/// aggregate under every requested variant, and score each decode with
/// [`normalized_error`] against the held-out truth.
///
/// Households spanning fewer than `train_days + test_days` full days are
/// skipped and reported, not failed. Households run in parallel; every other
/// error aborts the comparison, tagged with the household id.
pub fn compare_models(
    households: &[(String, LabeledDataset)],
    variants: &[ModelVariant],
    train_days: usize,
    test_days: usize,
    train_cfg: &TrainConfig,
    decode_cfg: &DecodeConfig,
) -> Result<ComparisonReport> {
    if variants.is_empty() {
        return Err(Error::InvalidParameter(
            "compare_models needs at least one variant".into(),
        ));
    }
    for (i, v) in variants.iter().enumerate() {
        if variants[..i].contains(v) {
            return Err(Error::InvalidParameter(format!(
                "variant {v} listed more than once"
            )));
        }
    }
    if train_days == 0 || test_days == 0 {
        return Err(Error::InvalidParameter(
            "train_days and test_days must both be positive".into(),
        ));
    }
    for (i, (id, _)) in households.iter().enumerate() {
        if households[..i].iter().any(|(other, _)| other == id) {
            return Err(Error::InvalidParameter(format!(
                "household id {id:?} appears more than once"
            )));
        }
    }
    train_cfg.validate()?;
    decode_cfg.validate()?;

    let outcomes: Vec<(String, Result<HouseholdOutcome>)> = households
        .par_iter()
        .map(|(id, data)| {
            let run = || -> Result<HouseholdOutcome> {
                let spd = data.sampling.steps_per_day();
                let available = data.num_steps() / spd;
                if available < train_days + test_days {
                    return Ok(HouseholdOutcome::Skipped(format!(
                        "spans {available} full days, protocol needs {}",
                        train_days + test_days
                    )));
                }
                let train_slice = slice_days(data, data.sampling, 0, train_days)?;
                let test_slice =
                    slice_days(data, data.sampling, train_days, train_days + test_days)?;
                let model = train(&train_slice, train_cfg)?.model;
                let y = test_slice.aggregate_series();
                let mut errs = Vec::with_capacity(variants.len());
                for &v in variants {
                    let decoded = if v.interleaved() {
                        interleaved_viterbi(&model, &y, v, decode_cfg)?
                    } else {
                        chainwise_viterbi(&model, &y, v, decode_cfg)?
                    };
                    errs.push(normalized_error(&test_slice.appliances, &decoded.energy)?);
                }
                Ok(HouseholdOutcome::Evaluated(errs))
            };
            (id.clone(), run())
        })
        .collect();

    let mut report = ComparisonReport {
        variants: variants.to_vec(),
        household_ids: Vec::new(),
        errors: Vec::new(),
        skipped: Vec::new(),
        train_days,
        test_days,
    };
    for (id, outcome) in outcomes {
        match outcome {
            Ok(HouseholdOutcome::Evaluated(errs)) => {
                report.household_ids.push(id);
                report.errors.push(errs);
            }
            Ok(HouseholdOutcome::Skipped(reason)) => report.skipped.push((id, reason)),
            Err(e) => {
                return Err(Error::Estimation(format!("household {id:?}: {e}")));
            }
        }
    }
    Ok(report)
}
