//! Versioned scenario files and the provenance block stamped on every output.

use crate::error::{Error, Result};
use crate::forward_model::{Beam, SourceProfile};
use crate::geometry::{BeamAxis, Camera};
use crate::pencil_beam::{GridSpec, MediumParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Recovery branch used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMethod {
    #[default]
    General,
    /// Gaussian beam, two stations suffice.
    S1,
}

/// Axial stations: the first at `origin` (a world point near the beam), the
/// rest at known offsets along the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stations {
    pub origin: [f64; 3],
    pub offsets: Vec<f64>,
    /// Sinogram half-window in beam widths.
    #[serde(default = "default_window")]
    pub window_widths: f64,
    /// Samples per core width of the projected profile.
    #[serde(default = "default_per_core")]
    pub samples_per_core: f64,
}

fn default_window() -> f64 {
    50.0
}

fn default_per_core() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative standard deviation of multiplicative Gaussian noise.
    #[serde(default)]
    pub relative_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub noise: Option<u64>,
    pub mc: Option<u64>,
}

/// Grid for `simulate-beam`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGrid {
    pub z: f64,
    pub grid: GridSpec,
}

/// Model comparison settings for `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    pub eps: Vec<f64>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_dz")]
    pub dz: f64,
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default = "default_centroids")]
    pub centroids: usize,
}

fn default_particles() -> usize {
    100_000
}

fn default_dz() -> f64 {
    0.005
}

fn default_z() -> f64 {
    1.0
}

fn default_centroids() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// Length unit shared by every physical quantity in the file.
    pub units: String,
    pub medium: MediumParams,
    pub source: SourceProfile,
    /// Ground-truth beam axis; `axis.point` is the source.
    pub axis: BeamAxis,
    /// Triangulation cameras.
    pub cameras: Vec<Camera>,
    pub stations: Stations,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub recovery: RecoveryMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_grid: Option<BeamGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported scenario version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        self.medium.validate()?;
        if let SourceProfile::Broad { h } = &self.source {
            h.validate()?;
        }
        if self.cameras.len() < 2 {
            return Err(Error::Schema("`cameras` needs at least two entries for triangulation".into()));
        }
        for c in &self.cameras {
            c.validate().map_err(|e| Error::Schema(format!("camera: {e}")))?;
        }
        let t = &self.stations.offsets;
        let min = if self.recovery == RecoveryMethod::S1 { 2 } else { 3 };
        if t.len() < min || t[0] != 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema(format!(
                "`stations.offsets` must start at 0, increase strictly and hold at least {min} entries"
            )));
        }
        if !(self.stations.window_widths > 0.0 && self.stations.samples_per_core > 0.0) {
            return Err(Error::Schema("station window and sampling must be positive".into()));
        }
        if self.noise.relative_std < 0.0 {
            return Err(Error::Schema("`noise.relative_std` must be nonnegative".into()));
        }
        if self.noise.relative_std > 0.0 && self.seeds.noise.is_none() {
            return Err(Error::Schema("`seeds.noise` is required when noise is enabled".into()));
        }
        if self.validation.is_some() && self.seeds.mc.is_none() {
            return Err(Error::Schema("`seeds.mc` is required when validation is configured".into()));
        }
        let z0 = self.axis.axial(self.stations.origin);
        if !(z0 > 0.0) {
            return Err(Error::Schema(format!("first station lies at z = {z0}, behind the source")));
        }
        Ok(())
    }

    pub fn beam(&self) -> Beam {
        Beam { axis: self.axis, medium: self.medium, source: self.source.clone() }
    }

    /// Ground-truth distance from the source to the first station.
    pub fn true_z0(&self) -> f64 {
        self.axis.axial(self.stations.origin)
    }

    /// SHA-256 of the canonical JSON serialization, output path excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = None;
        let bytes = serde_json::to_vec(&canon).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self, seed: Option<u64>) -> Provenance {
        Provenance {
            scenario_hash: self.hash(),
            schema_version: SCHEMA_VERSION,
            generator: concat!("offaxis ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            medium: self.medium,
        }
    }
}

/// Self-description embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub schema_version: u32,
    pub generator: String,
    pub seed: Option<u64>,
    pub medium: MediumParams,
}

impl Provenance {
    /// `# key: value` lines for CSV headers.
    pub fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("scenario_hash".into(), self.scenario_hash.clone()),
            ("schema_version".into(), self.schema_version.to_string()),
            ("generator".into(), self.generator.clone()),
            ("seed".into(), self.seed.map_or("none".into(), |s| s.to_string())),
            ("params".into(), serde_json::to_string(&self.medium).expect("params serialize")),
        ]
    }
}
