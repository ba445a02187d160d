//! Disaggregation-output serialization: estimate CSV plus sidecar metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LabeledDataset;
use crate::inference::DisaggregationResult;
use crate::model::{aggregate, ModelVariant, SamplingSpec};

use super::dataset::write_dataset;
use super::write_atomic;

/// Schema tag carried by result metadata documents.
pub const RESULT_SCHEMA: &str = "disagg-result/1";

/// Decode provenance written beside an estimate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub schema: String,
    pub variant: String,
    pub log_posterior: f64,
    pub sweeps_used: usize,
    pub converged: bool,
}

/// Where [`write_disaggregation`] puts the metadata for `csv_path`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes a decode as a wide CSV (aggregate column synthesized as the sum
/// of the estimated traces) plus a `.meta.json` sidecar. The CSV is written
/// even for non-converged decodes; the sidecar says so.
pub fn write_disaggregation(
    result: &DisaggregationResult,
    variant: ModelVariant,
    sampling: &SamplingSpec,
    csv_path: &Path,
) -> Result<()> {
    let estimate = LabeledDataset::new(
        result.energy.clone(),
        Some(aggregate(&result.energy)),
        *sampling,
    )?;
    write_dataset(&estimate, csv_path)?;
    let meta = ResultMeta {
        schema: RESULT_SCHEMA.into(),
        variant: variant.name().into(),
        log_posterior: result.log_posterior,
        sweeps_used: result.sweeps_used,
        converged: result.converged,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write_atomic(&meta_path(csv_path), text.as_bytes())
}

/// Reads the sidecar written by [`write_disaggregation`].
pub fn read_result_meta(path: &Path) -> Result<ResultMeta> {
    let text = std::fs::read_to_string(path)?;
    let meta: ResultMeta = serde_json::from_str(&text)?;
    if meta.schema != RESULT_SCHEMA {
        return Err(Error::DataFormat {
            path: path.display().to_string(),
            line: 1,
            msg: format!("schema {:?}, expected {RESULT_SCHEMA:?}", meta.schema),
        });
    }
    Ok(meta)
}
