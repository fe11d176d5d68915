//! Run manifests.
//!
//! Every command writes `manifest.json` next to its outputs. The `command`
//! key selects the variant; `args` holds the resolved arguments (output paths
//! excepted), so the run can be repeated from the manifest alone.

use std::fs;
use std::path::Path;

use pmri_core::phantom::{AcquisitionConfig, PhantomSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{EvaluateArgs, GenerateArgs, ReconstructArgs, TrainArgs};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// JSON has no infinities: non-finite values are written as the strings
/// `"inf"`, `"-inf"` or `"nan"`.
mod float_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string().to_lowercase())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("`{other}` is not a number"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    /// Acceleration the mask was drawn for.
    pub accel: f64,
    pub sampled_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateManifest {
    pub version: u32,
    pub args: GenerateArgs,
    pub phantom: PhantomSpec,
    pub acquisition: AcquisitionConfig,
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconEntry {
    pub id: String,
    #[serde(with = "float_text")]
    pub snr_db: f64,
    pub segmented: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_unconverged: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructManifest {
    pub version: u32,
    pub args: ReconstructArgs,
    /// Method tag carried into evaluation reports.
    pub method: String,
    pub config: Value,
    pub datasets: Vec<ReconEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainManifest {
    pub version: u32,
    pub args: TrainArgs,
    pub mode: String,
    pub precision: String,
    pub config: Value,
    pub param_count: usize,
    pub datasets: Vec<String>,
    pub labelled: Vec<String>,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateManifest {
    pub version: u32,
    pub args: EvaluateArgs,
    pub method: String,
    pub datasets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Manifest {
    Generate(GenerateManifest),
    Reconstruct(ReconstructManifest),
    Train(TrainManifest),
    Evaluate(EvaluateManifest),
}

impl Manifest {
    pub fn version(&self) -> u32 {
        match self {
            Manifest::Generate(m) => m.version,
            Manifest::Reconstruct(m) => m.version,
            Manifest::Train(m) => m.version,
            Manifest::Evaluate(m) => m.version,
        }
    }

    /// Dataset IDs covered by the run, in manifest order.
    pub fn dataset_ids(&self) -> Vec<String> {
        match self {
            Manifest::Generate(m) => m.datasets.iter().map(|d| d.id.clone()).collect(),
            Manifest::Reconstruct(m) => m.datasets.iter().map(|d| d.id.clone()).collect(),
            Manifest::Train(m) => m.datasets.clone(),
            Manifest::Evaluate(m) => m.datasets.clone(),
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, CliError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| CliError::data(format!("bad manifest: {e}")))?;
    if m.version() != MANIFEST_VERSION {
        return Err(CliError::data(format!("unsupported manifest version {}", m.version())));
    }
    Ok(m)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    parse_manifest(&text).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.message)))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
