//! Run configuration: a JSON object with lowercase snake_case keys.
//!
//! ```json
//! { "tau_im": 1.0, "eta": 0.15, "l": 0.5, "n": 2, "seed": 1,
//!   "grid": [128, 128], "tolerances": { "rll": 1e-9 },
//!   "u0_candidates": 8, "report_path": "p1.json" }
//! ```
//!
//! Only `tau_im`, `eta`, `l` and `n` are required.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qop_core::ModelParams;

use crate::CliError;

/// Named residual bounds. Every default is the acceptance bound of the
/// corresponding check; `*_scaled` bounds are multiplied by the condition
/// estimate of `Q_R(u_0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub theta: f64,
    pub commutation: f64,
    pub pauli: f64,
    pub u_relations: f64,
    /// Cap on `λ_max/λ_min` of the Gram matrix.
    pub gram_condition: f64,
    pub self_adjoint: f64,
    pub biorthogonality: f64,
    pub closed_form: f64,
    pub rll: f64,
    pub transfer_commute: f64,
    pub transfer_adjoint: f64,
    pub l_adjoint: f64,
    pub vacuum: f64,
    pub twisted_trace: f64,
    pub u_on_omega: f64,
    pub tqr: f64,
    pub qlt: f64,
    pub phi_symmetry: f64,
    pub qlqr: f64,
    pub u_laws: f64,
    pub condition_cap: f64,
    pub q_relations_scaled: f64,
    pub sector: f64,
    pub eigen_scaled: f64,
    pub tq_scaled: f64,
    pub nuq: f64,
    pub sum_rule: f64,
    pub bethe_equation: f64,
    pub reconstruction: f64,
    pub explicit_form: f64,
    pub direct_eig: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            theta: 1e-12,
            commutation: 1e-9,
            pauli: 1e-10,
            u_relations: 1e-10,
            gram_condition: 1e12,
            self_adjoint: 1e-6,
            biorthogonality: 1e-6,
            closed_form: 1e-9,
            rll: 1e-9,
            transfer_commute: 1e-9,
            transfer_adjoint: 1e-6,
            l_adjoint: 1e-6,
            vacuum: 1e-9,
            twisted_trace: 1e-9,
            u_on_omega: 1e-9,
            tqr: 1e-8,
            qlt: 1e-6,
            phi_symmetry: 1e-6,
            qlqr: 1e-6,
            u_laws: 1e-6,
            condition_cap: 1e8,
            q_relations_scaled: 1e-6,
            sector: 1e-9,
            eigen_scaled: 1e-6,
            tq_scaled: 1e-6,
            nuq: 1e-6,
            sum_rule: 1e-6,
            bethe_equation: 1e-5,
            reconstruction: 1e-5,
            explicit_form: 1e-5,
            direct_eig: 1e-8,
        }
    }
}

impl Tolerances {
    /// `(name, bound)` pairs, read back through serde so the list cannot
    /// drift from the fields.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let value = serde_json::to_value(self).expect("tolerances serialise");
        value
            .as_object()
            .map(|o| {
                o.iter()
                    .map(|(k, v)| (k.clone(), v.as_f64().unwrap_or(f64::NAN)))
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn default_seed() -> u64 {
    1
}

fn default_grid() -> [usize; 2] {
    [128, 128]
}

fn default_u0_candidates() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tau_im: f64,
    pub eta: f64,
    /// Spin, a positive half-integer.
    pub l: f64,
    /// Number of sites; must be even.
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Quadrature grid for the Sklyanin-form checks.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_u0_candidates")]
    pub u0_candidates: usize,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn for_model(tau_im: f64, eta: f64, l: f64, n: usize, seed: u64) -> Self {
        RunConfig {
            tau_im,
            eta,
            l,
            n,
            seed,
            grid: default_grid(),
            tolerances: Tolerances::default(),
            u0_candidates: default_u0_candidates(),
            report_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = parse_named(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_json(&read(path)?)
    }

    pub fn two_l(&self) -> Result<u32, CliError> {
        let t = 2.0 * self.l;
        if !t.is_finite() || t < 0.5 || (t - t.round()).abs() > 1e-12 {
            return Err(invalid(
                "l",
                format!("spin must be a positive half-integer, got {}", self.l),
            ));
        }
        Ok(t.round() as u32)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.tau_im > 0.0) || !self.tau_im.is_finite() {
            return Err(invalid(
                "tau_im",
                format!("must be a positive real, got {}", self.tau_im),
            ));
        }
        if !self.eta.is_finite() {
            return Err(invalid("eta", "must be finite"));
        }
        let two_l = self.two_l()?;
        if self.n == 0 || self.n % 2 != 0 {
            return Err(invalid(
                "n",
                format!("the number of sites N must be even (the Q-operator construction requires even N), got {}", self.n),
            ));
        }
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return Err(invalid("grid", "grid sizes must be positive"));
        }
        if self.grid[0] != self.grid[1] {
            return Err(invalid(
                "grid",
                format!("only square grids are supported, got {:?}", self.grid),
            ));
        }
        if self.u0_candidates == 0 {
            return Err(invalid("u0_candidates", "must be at least 1"));
        }
        for (name, value) in self.tolerances.entries() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(
                    &format!("tolerances.{name}"),
                    format!("must be a positive finite bound, got {value}"),
                ));
            }
        }
        ModelParams::new(self.tau_im, self.eta, two_l, self.n).map_err(|e| match e {
            qop_core::QopError::InvalidParameter { field, reason } => invalid(field, reason),
            other => invalid("params", other.to_string()),
        })?;
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        self.validate()?;
        ModelParams::new(self.tau_im, self.eta, self.two_l()?, self.n).map_err(CliError::Numerical)
    }
}

/// Deserialises `text`, naming the offending field (dotted path) on error.
fn parse_named<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().to_string();
        // missing keys are reported at the parent path
        let key = (msg.starts_with("missing field") || msg.starts_with("unknown field"))
            .then(|| extract_backticked(&msg))
            .flatten();
        let field = match (key, path.as_str()) {
            // unknown keys already appear at the end of the path
            (Some(k), p) if p == k || p.ends_with(&format!(".{k}")) => path.clone(),
            (Some(k), ".") => k,
            (Some(k), parent) => format!("{parent}.{k}"),
            (None, _) => path,
        };
        invalid(&field, msg)
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Configuration of `report`: the reports to merge, in order. Relative
/// paths are taken relative to the configuration file.
///
/// ```json
/// { "inputs": ["algebra.json", "lattice.json"], "report_path": "all.json" }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
}

impl MergeConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: MergeConfig = parse_named(text)?;
        if cfg.inputs.is_empty() {
            return Err(invalid("inputs", "at least one report to merge"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg = Self::from_json(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.inputs.iter_mut().chain(cfg.report_path.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

fn extract_backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}
