//! Long-format export of one day of truth vs estimate, for plotting.

use crate::error::{Error, Result};
use crate::model::{ApplianceMatrix, SamplingSpec};

/// Renders one day of per-appliance truth and estimate as a long CSV
/// `appliance,hour,true_wh,estimated_wh`, hours as fractions of the clock
/// day. `appliances` selects and orders the rows; an empty list means all.
pub fn export_plot_table(
    truth: &ApplianceMatrix,
    estimate: &ApplianceMatrix,
    appliances: &[String],
    day_index: usize,
    sampling: &SamplingSpec,
) -> Result<String> {
    if truth.names != estimate.names {
        return Err(Error::LengthMismatch(format!(
            "appliance sets differ: truth has {:?}, estimate has {:?}",
            truth.names, estimate.names
        )));
    }
    if truth.num_steps() != estimate.num_steps() || truth.start_step != estimate.start_step {
        return Err(Error::LengthMismatch(format!(
            "truth covers {} steps from step {}, estimate {} from {}",
            truth.num_steps(),
            truth.start_step,
            estimate.num_steps(),
            estimate.start_step
        )));
    }
    let spd = sampling.steps_per_day();
    let full_days = truth.num_steps() / spd;
    if (day_index + 1) * spd > truth.num_steps() {
        return Err(Error::InvalidParameter(format!(
            "day {day_index} is out of range; the data covers {full_days} full days"
        )));
    }
    let selected: Vec<usize> = if appliances.is_empty() {
        (0..truth.num_appliances()).collect()
    } else {
        appliances
            .iter()
            .map(|name| {
                truth.index_of(name).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "unknown appliance {name:?}; have {:?}",
                        truth.names
                    ))
                })
            })
            .collect::<Result<_>>()?
    };

    let mut out = String::from("appliance,hour,true_wh,estimated_wh\n");
    for &i in &selected {
        for t in day_index * spd..(day_index + 1) * spd {
            let step_of_day = (truth.start_step + t) % spd;
            let hour =
                step_of_day as f64 * f64::from(sampling.interval_seconds) / 3600.0;
            out.push_str(&format!(
                "{},{hour},{},{}\n",
                truth.names[i], truth.values[i][t], estimate.values[i][t]
            ));
        }
    }
    Ok(out)
}
