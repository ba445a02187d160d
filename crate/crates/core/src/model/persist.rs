//! JSON persistence for household models.
//!
//! The on-disk document is versioned through its `schema` field; loading
//! rebuilds the model through the ordinary constructors, so a hand-edited
//! file with, say, a non-stochastic row is rejected with the same message as
//! any other invalid parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::types::{
    ChainParams, HouseholdModel, NoiseModel, SamplingSpec, SelectorParams, TransitionMatrix,
};

/// Schema tag written to and required from every model document.
pub const MODEL_SCHEMA: &str = "disagg-model/1";

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema: String,
    sampling: SamplingDoc,
    chains: Vec<ChainDoc>,
    selector: Option<SelectorDoc>,
    noise: NoiseDoc,
}

#[derive(Serialize, Deserialize)]
struct SamplingDoc {
    interval_seconds: u32,
    bins_per_day: usize,
}

#[derive(Serialize, Deserialize)]
struct ChainDoc {
    label: String,
    means: Vec<f64>,
    initial: Vec<f64>,
    homogeneous: Option<Vec<Vec<f64>>>,
    per_bin: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Serialize, Deserialize)]
struct SelectorDoc {
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NoiseDoc {
    Global(f64),
    PerBin(Vec<f64>),
}

impl HouseholdModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            schema: MODEL_SCHEMA.to_string(),
            sampling: SamplingDoc {
                interval_seconds: self.sampling.interval_seconds,
                bins_per_day: self.sampling.bins_per_day,
            },
            chains: self
                .chains
                .iter()
                .map(|c| ChainDoc {
                    label: c.label.clone(),
                    means: c.means.clone(),
                    initial: c.initial.clone(),
                    homogeneous: c.homogeneous.as_ref().map(|m| m.rows().to_vec()),
                    per_bin: c
                        .per_bin
                        .as_ref()
                        .map(|ts| ts.iter().map(|m| m.rows().to_vec()).collect()),
                })
                .collect(),
            selector: self.selector.as_ref().map(|s| SelectorDoc {
                initial: s.initial.clone(),
                transitions: s.transitions.rows().to_vec(),
            }),
            noise: match &self.noise {
                NoiseModel::Global(s) => NoiseDoc::Global(*s),
                NoiseModel::PerBin(v) => NoiseDoc::PerBin(v.clone()),
            },
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported model schema {:?}, expected {MODEL_SCHEMA:?}",
                doc.schema
            )));
        }
        let sampling = SamplingSpec::new(doc.sampling.interval_seconds, doc.sampling.bins_per_day)?;
        let chains = doc
            .chains
            .into_iter()
            .map(|c| {
                let homogeneous = c.homogeneous.map(TransitionMatrix::new).transpose()?;
                let per_bin = c
                    .per_bin
                    .map(|ts| ts.into_iter().map(TransitionMatrix::new).collect())
                    .transpose()?;
                ChainParams::new(c.label, c.means, c.initial, homogeneous, per_bin)
            })
            .collect::<Result<Vec<_>>>()?;
        let selector = doc
            .selector
            .map(|s| SelectorParams::new(s.initial, TransitionMatrix::new(s.transitions)?))
            .transpose()?;
        let noise = match doc.noise {
            NoiseDoc::Global(s) => NoiseModel::Global(s),
            NoiseDoc::PerBin(v) => NoiseModel::PerBin(v),
        };
        HouseholdModel::new(sampling, chains, selector, noise)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
