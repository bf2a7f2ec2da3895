//! Run configuration: one TOML file per run, with CLI flags overriding
//! individual keys. All cross-field constraints are validated before any
//! computation starts.

use serde::{Deserialize, Serialize};

use qplab::error::Error;
use qplab::lattice::Frequency;
use qplab::msa::ScaleTable;
use qplab::operator::{
    builtin_potential, builtin_potential_unchecked, OperatorParams, PotentialKind,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: Model,
    pub scales: Scales,
    pub grids: Grids,
    pub run: Run,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: Model::default(),
            scales: Scales::default(),
            grids: Grids::default(),
            run: Run::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Model {
    pub dimension: usize,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub potential: Potential,
    pub frequency: FrequencySpec,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            dimension: 1,
            epsilon: 1e-3,
            epsilon0: 1e-2,
            potential: Potential::default(),
            frequency: FrequencySpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Potential {
    /// `cosine` or `asymmetric`.
    pub name: String,
    /// Cosine amplitude.
    pub c: f64,
    /// Asymmetric coefficients.
    pub c1: f64,
    pub c2: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Potential { name: "cosine".into(), c: 1.0, c1: 1.0, c2: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencySpec {
    /// `golden` or `explicit`.
    pub kind: String,
    pub omega: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    pub check_radius: u32,
}

impl Default for FrequencySpec {
    fn default() -> Self {
        FrequencySpec {
            kind: "golden".into(),
            omega: vec![],
            tau: 1.5,
            gamma: 1e-3,
            check_radius: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scales {
    /// `desk` or `paper`.
    pub policy: String,
    /// Desk length table `l_0, l_1, …`.
    pub lengths: Vec<f64>,
    pub depth: usize,
}

impl Default for Scales {
    fn default() -> Self {
        Scales { policy: "desk".into(), lengths: vec![3.5, 40.0, 60.0], depth: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub theta: usize,
    pub energy: usize,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub eta_count: usize,
    pub time_lo: f64,
    pub time_hi: f64,
    pub time_count: usize,
    pub moment_q: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            theta: 512,
            energy: 64,
            eta_lo: 1e-4,
            eta_hi: 1e-1,
            eta_count: 13,
            time_lo: 1.0,
            time_hi: 1e6,
            time_count: 60,
            moment_q: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Run {
    pub seed: u64,
    pub out: String,
    pub threads: usize,
    pub theta: f64,
    pub box_radius: f64,
}

impl Default for Run {
    fn default() -> Self {
        Run { seed: 7, out: "out".into(), threads: 0, theta: 0.0, box_radius: 100.0 }
    }
}

impl Config {
    pub fn load(path: &str) -> Result<Config, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {path}: {e}"))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
        Ok(cfg)
    }

    /// Validate every cross-field constraint and build the operator
    /// parameters.
    pub fn build_ops(&self, unchecked: bool) -> Result<OperatorParams, String> {
        let m = &self.model;
        if m.dimension == 0 {
            return Err("model.dimension must be >= 1".into());
        }
        if !(m.epsilon >= 0.0 && m.epsilon <= m.epsilon0) {
            return Err(format!(
                "need 0 <= epsilon <= epsilon0, got {} and {}",
                m.epsilon, m.epsilon0
            ));
        }
        let kind = match m.potential.name.as_str() {
            "cosine" => PotentialKind::Cosine { c: m.potential.c },
            "asymmetric" => PotentialKind::Asymmetric { c1: m.potential.c1, c2: m.potential.c2 },
            other => return Err(format!("unknown potential {other:?}")),
        };
        let pot = if unchecked {
            builtin_potential_unchecked(kind)
        } else {
            builtin_potential(kind)
        }
        .map_err(|e| format!("model.potential: {e}"))?;

        let f = &m.frequency;
        if !(f.tau > m.dimension as f64) {
            return Err(format!(
                "frequency.tau = {} must exceed the dimension {}",
                f.tau, m.dimension
            ));
        }
        let freq = match f.kind.as_str() {
            "golden" => {
                if m.dimension != 1 {
                    return Err("golden frequency is one-dimensional".into());
                }
                Frequency::golden(f.tau, f.gamma)
            }
            "explicit" => {
                if f.omega.len() != m.dimension {
                    return Err(format!(
                        "frequency.omega has {} components, dimension is {}",
                        f.omega.len(),
                        m.dimension
                    ));
                }
                Frequency::new(f.omega.clone(), f.tau, f.gamma)
            }
            other => return Err(format!("unknown frequency kind {other:?}")),
        }
        .map_err(|e| format!("model.frequency: {e}"))?;

        if self.grids.theta < 16 {
            return Err("grids.theta must be at least 16".into());
        }
        if self.grids.eta_count < 3 || self.grids.time_count < 2 {
            return Err("grids.eta_count >= 3 and grids.time_count >= 2 required".into());
        }
        OperatorParams::new(m.epsilon, m.epsilon0, freq, pot).map_err(|e| e.to_string())
    }

    pub fn scale_table(&self, ops: &OperatorParams) -> Result<ScaleTable, Error> {
        let gamma0 = ops.gamma0().min(1e6);
        match self.scales.policy.as_str() {
            "paper" => ScaleTable::paper(self.model.epsilon0, gamma0, self.scales.depth.max(1)),
            "desk" => ScaleTable::desk(self.model.epsilon0, gamma0, &self.scales.lengths),
            other => Err(Error::InvalidArgument(format!("unknown scale policy {other:?}"))),
        }
    }


    pub fn eta_grid(&self) -> Vec<f64> {
        let g = &self.grids;
        let n = g.eta_count.max(3);
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                g.eta_lo * (g.eta_hi / g.eta_lo).powf(t)
            })
            .collect()
    }

    pub fn time_grid(&self) -> Vec<f64> {
        let g = &self.grids;
        let n = g.time_count.max(2);
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                g.time_lo * (g.time_hi / g.time_lo).powf(t)
            })
            .collect()
    }

    /// FNV-1a hash of the canonical JSON serialization; stamped into every
    /// output file so runs are traceable to their configuration.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}
