use serde::{Deserialize, Serialize};
use transverse_core::asymptotics::{DEFAULT_K_LADDER, DEFAULT_MU_PROBES};
use transverse_core::{NonlinearitySpec, Result, Sigma, Tolerances, WaveParams};

/// A problem definition read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub nonlinearity: NonlinearitySpec,
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub c: f64,
    pub sigma: Sigma,
    /// Bracket `[lo, hi]` selecting the well when several admit orbits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub well: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    /// Extra `(a, E, c)` points for `invariants`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<[f64; 3]>,
}

fn default_samples() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<MuGrid>,
    #[serde(default)]
    pub k: Vec<f64>,
    /// Floquet multiplier as `[re, im]`.
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_freq: Option<HighFreqConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_freq: Option<LowFreqConfig>,
}

fn default_lambda() -> [f64; 2] {
    [1.0, 0.0]
}

/// Either an explicit list or `count` evenly spaced points from `start` to `stop`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuGrid {
    List(Vec<f64>),
    Linspace { start: f64, stop: f64, count: usize },
}

impl MuGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            MuGrid::List(v) => v.clone(),
            MuGrid::Linspace { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighFreqConfig {
    pub k: Vec<f64>,
    #[serde(default = "default_mu_probes")]
    pub mu: Vec<f64>,
}

fn default_mu_probes() -> Vec<f64> {
    DEFAULT_MU_PROBES.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowFreqConfig {
    #[serde(default = "default_ladder")]
    pub k: Vec<f64>,
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_K_LADDER.to_vec()
}

impl ProblemConfig {
    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn wave_params(&self) -> Result<WaveParams> {
        let p = WaveParams::new(self.a, self.e, self.c, self.nonlinearity.clone(), self.sigma)?;
        let p = match self.well {
            Some([lo, hi]) => p.with_well(lo, hi),
            None => p,
        };
        p.validate()?;
        Ok(p)
    }
}
