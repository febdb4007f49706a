//! Task files: the agreed TaskSpec plus where the data comes from.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use veriml_core::dataio::{self, Dataset, SynthKind};
use veriml_core::protocol::TaskSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub spec: TaskSpec,
    pub data: DataSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: String,
        label_col: usize,
    },
    Synth {
        kind: String,
        n: usize,
        d: usize,
        seed: u64,
        #[serde(default)]
        noise: f64,
    },
}

impl TaskFile {
    pub fn load(path: &Path) -> Result<TaskFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading task file {}", path.display()))?;
        let tf: TaskFile = serde_json::from_str(&text).context("parsing task file JSON")?;
        Ok(tf)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let l = self.spec.config.frac_bits;
        let ds = match &self.data {
            DataSource::Csv { path, label_col } => {
                dataio::load_csv(Path::new(path), *label_col, l)?
            }
            DataSource::Synth {
                kind,
                n,
                d,
                seed,
                noise,
            } => {
                let kind = match kind.as_str() {
                    "regression" => SynthKind::Regression,
                    "binary" => SynthKind::Binary,
                    "blobs" => SynthKind::Blobs,
                    "multiclass" => SynthKind::Multiclass,
                    other => bail!("unknown synthetic kind {other:?}"),
                };
                let noise = if *noise == 0.0 { 0.01 } else { *noise };
                dataio::synth_with(kind, *n, *d, *seed, l, noise)?
            }
        };
        Ok(ds)
    }

    /// Load data and bind the digest: fill it when the task leaves it empty,
    /// verify it otherwise.
    pub fn resolve(&mut self) -> Result<Dataset> {
        let ds = self.dataset()?;
        let digest = hex::encode(ds.digest);
        if self.spec.dataset_digest.is_empty() {
            self.spec.dataset_digest = digest;
        } else if self.spec.dataset_digest != digest {
            bail!(
                "task pins dataset digest {} but the data hashes to {digest}",
                self.spec.dataset_digest
            );
        }
        Ok(ds)
    }
}
