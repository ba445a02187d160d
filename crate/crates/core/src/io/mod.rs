//! Reading and writing datasets, decode outputs, plot tables, and manifests.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub mod dataset;
pub mod plot;
pub mod result;

pub use dataset::{
    default_bins, manifest_path, read_aggregate_series, read_dataset, read_dataset_with_bins,
    read_household_dir, write_dataset, DatasetManifest, StartSpec, DATA_SCHEMA,
};
pub use plot::export_plot_table;
pub use result::{meta_path, read_result_meta, write_disaggregation, ResultMeta, RESULT_SCHEMA};

/// Writes a file via a temporary sibling plus rename, so readers never see a
/// partially written file and a failed write leaves any existing file intact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
