//! Run configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crystal::{Miller, PotentialPreset, XcModel};
use crate::error::{Error, Result};
use crate::scalar::Cplx;
use crate::tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Rows are the lattice vectors.
    pub lattice: [[f64; 3]; 3],
    pub potential: PotentialConfig,
    #[serde(rename = "Z")]
    pub occupied: usize,
    pub ecut: f64,
    pub kgrid: KGridConfig,
    #[serde(default)]
    pub xc: XcConfig,
    #[serde(default)]
    pub frequencies: Option<FrequencyConfig>,
    #[serde(default)]
    pub maxwell: Option<MaxwellConfig>,
    #[serde(default)]
    pub kernels: Option<KernelConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Number of bands kept; defaults to the full basis.
    #[serde(default)]
    pub nbands: Option<usize>,
    /// Coulomb part of the potential operator; switched off only in tests.
    #[serde(default = "yes")]
    pub coulomb: bool,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub test_hooks: TestHooks,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum PotentialConfig {
    Preset { name: String, amplitude: f64 },
    Fourier(Vec<FourierTerm>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub g: Miller,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGridConfig {
    pub dims: [usize; 3],
    #[serde(default = "yes")]
    pub shifted: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "model", rename_all = "lowercase")]
pub enum XcConfig {
    #[default]
    None,
    Power { c: f64, p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum FrequencyConfig {
    List {
        values: Vec<f64>,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

fn default_gamma() -> f64 {
    tolerances::DEFAULT_GAMMA
}

impl FrequencyConfig {
    pub fn omegas(&self) -> Vec<f64> {
        match self {
            FrequencyConfig::List { values, .. } => values.clone(),
            FrequencyConfig::Range { start, stop, count, .. } => match count {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            FrequencyConfig::List { gamma, .. } | FrequencyConfig::Range { gamma, .. } => *gamma,
        }
    }

    pub fn set_gamma(&mut self, g: f64) {
        match self {
            FrequencyConfig::List { gamma, .. } | FrequencyConfig::Range { gamma, .. } => *gamma = g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellConfig {
    pub sources: Vec<SourceConfig>,
}

/// One driven mode. `q` is in units of `2 pi`; complex numbers are `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub omega: f64,
    pub q: [i32; 3],
    #[serde(default)]
    pub v_ext: [f64; 2],
    #[serde(default)]
    pub a_ext: [[f64; 2]; 3],
    /// Project `a_ext` onto the plane orthogonal to `q`.
    #[serde(default = "yes")]
    pub transverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub ds: f64,
    pub span: f64,
    pub gamma: f64,
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default = "default_resonance")]
    pub resonance: f64,
}

fn default_gap() -> f64 {
    tolerances::GAP_TOL
}

fn default_resonance() -> f64 {
    tolerances::RESONANCE
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            gap: tolerances::GAP_TOL,
            resonance: tolerances::RESONANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestHooks {
    /// Deliberately wrong sign of the second response term (mutation testing).
    #[serde(default)]
    pub flip_chi_second_term: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.occupied == 0 {
            return Err(Error::Config("Z must be at least 1".into()));
        }
        if let Some(n) = self.nbands {
            if n <= self.occupied {
                return Err(Error::TooFewBands {
                    nbands: n,
                    needed: self.occupied + 1,
                });
            }
        }
        if let Some(f) = &self.frequencies {
            if f.gamma() < 0.0 {
                return Err(Error::InvalidFrequency(format!("negative broadening {}", f.gamma())));
            }
        }
        if let Some(m) = &self.maxwell {
            let omegas = self.frequencies.as_ref().map(|f| f.omegas()).unwrap_or_default();
            for s in &m.sources {
                if !omegas.iter().any(|w| (w - s.omega).abs() <= 1e-12 * s.omega.abs().max(1.0)) {
                    return Err(Error::Config(format!(
                        "maxwell source frequency {} is not among the sampled frequencies",
                        s.omega
                    )));
                }
                if s.q == [0, 0, 0] {
                    return Err(Error::ZeroWaveVector);
                }
            }
        }
        if let Some(k) = &self.kernels {
            if k.ds <= 0.0 || k.span <= 0.0 {
                return Err(Error::Config("kernel trace needs positive ds and span".into()));
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<PotentialPreset<f64>> {
        match &self.potential {
            PotentialConfig::Preset { name, amplitude } => PotentialPreset::from_name(name, *amplitude),
            PotentialConfig::Fourier(terms) => Ok(PotentialPreset::FourierList(
                terms.iter().map(|t| (t.g, Cplx::new(t.re, t.im))).collect(),
            )),
        }
    }

    pub fn xc_model(&self) -> XcModel<f64> {
        match self.xc {
            XcConfig::None => XcModel::None,
            XcConfig::Power { c, p } => XcModel::Power { c, p },
        }
    }

    pub fn gamma(&self) -> f64 {
        self.frequencies
            .as_ref()
            .map(|f| f.gamma())
            .unwrap_or(tolerances::DEFAULT_GAMMA)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "lattice": [[1,0,0],[0,1,0],[0,0,1]],
        "potential": {"preset": {"name": "cosine3d", "amplitude": 3.0}},
        "Z": 1,
        "ecut": 60,
        "kgrid": {"dims": [4,4,4]},
        "frequencies": {"range": {"start": 0.5, "stop": 2.0, "count": 4}}
    }"#;

    #[test]
    fn parses_minimal() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.kgrid.shifted && cfg.coulomb);
        assert_eq!(cfg.gamma(), 0.05);
        assert_eq!(cfg.frequencies.unwrap().omegas(), vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let extra = MINIMAL.replace("\"Z\": 1,", "\"Z\": 1, \"bogus\": 2,");
        assert!(matches!(RunConfig::from_json(&extra), Err(Error::Json(_))));
        assert!(RunConfig::from_json("{").is_err());
        let bad_source = MINIMAL.replace(
            "\"ecut\": 60,",
            "\"ecut\": 60, \"maxwell\": {\"sources\": [{\"omega\": 0.7, \"q\": [1,0,0]}]},",
        );
        assert!(matches!(RunConfig::from_json(&bad_source), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.frequencies.as_mut().unwrap().set_gamma(0.1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
