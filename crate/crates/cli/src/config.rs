use std::fs;
use std::path::Path;

use copra_core::array::{ArrayGeometry, ScenarioConfig};
use copra_core::beamformer::{Method, QuasiGrid};
use copra_core::harness::{Aggregation, TrialConfig};
use copra_core::secular::{GammaZPolicy, SolverOptions, DEFAULT_RHO};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment description. Every key is optional; missing keys take the
/// simulation-protocol defaults and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_elements: usize,
    pub spacing_wavelengths: f64,
    pub n_interferers: usize,
    pub inr_db: f64,
    pub soi_error_bound_deg: f64,
    pub interferer_guard_deg: f64,
    pub trials: usize,
    pub n_snapshots: usize,
    /// SNR used when the sweep variable is the snapshot count, and by `trial`.
    pub snr_db: f64,
    pub snr_db_grid: Vec<f64>,
    pub snapshot_grid: Vec<usize>,
    pub rho: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// 0 lets the thread pool pick.
    pub workers: usize,
    /// Diagonal-loading baseline level, in units of the noise power.
    pub diagonal_loading: f64,
    pub quasi_grid: QuasiGrid,
    pub gamma_z_policy: GammaZPolicy,
    pub aggregation: Aggregation,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_elements: 10,
            spacing_wavelengths: 0.5,
            n_interferers: 2,
            inr_db: 30.0,
            soi_error_bound_deg: 5.0,
            interferer_guard_deg: 2.0,
            trials: 1000,
            n_snapshots: 30,
            snr_db: 20.0,
            snr_db_grid: (0..9).map(|k| -10.0 + 5.0 * k as f64).collect(),
            snapshot_grid: (1..=10).map(|k| 10 * k).collect(),
            rho: DEFAULT_RHO,
            methods: Method::ALL.to_vec(),
            seed: 7,
            workers: 0,
            diagonal_loading: 10.0,
            quasi_grid: QuasiGrid::default(),
            gamma_z_policy: GammaZPolicy::default(),
            aggregation: Aggregation::default(),
            solver: SolverOptions::default(),
        }
    }
}

fn field(name: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: name,
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("n_elements", self.n_elements),
            ("trials", self.trials),
            ("n_snapshots", self.n_snapshots),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(field(name, "must be positive"));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(field("rho", format!("{} is outside (0, 1)", self.rho)));
        }
        if !(self.soi_error_bound_deg >= 0.0 && self.soi_error_bound_deg.is_finite()) {
            return Err(field("soi_error_bound_deg", "must be finite and >= 0"));
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return Err(field("spacing_wavelengths", "must be finite and positive"));
        }
        if self.snr_db_grid.is_empty() || self.snr_db_grid.iter().any(|v| !v.is_finite()) {
            return Err(field("snr_db_grid", "needs at least one finite value"));
        }
        if self.snapshot_grid.is_empty() || self.snapshot_grid.contains(&0) {
            return Err(field("snapshot_grid", "needs at least one positive count"));
        }
        if self.methods.is_empty() {
            return Err(field("methods", "at least one method is required"));
        }
        self.trial_config(self.snr_db).validate()?;
        Ok(())
    }

    /// Per-trial configuration at the given SNR.
    pub fn trial_config(&self, snr_db: f64) -> TrialConfig {
        TrialConfig {
            scenario: ScenarioConfig {
                geometry: ArrayGeometry {
                    n_elements: self.n_elements,
                    spacing_wavelengths: self.spacing_wavelengths,
                },
                n_interferers: self.n_interferers,
                snr_db,
                inr_db: self.inr_db,
                soi_error_bound_deg: self.soi_error_bound_deg,
                interferer_guard_deg: self.interferer_guard_deg,
            },
            n_snapshots: self.n_snapshots,
            rho: self.rho,
            methods: self.methods.clone(),
            diagonal_loading: self.diagonal_loading,
            quasi_grid: self.quasi_grid,
            gamma_z_policy: self.gamma_z_policy,
            solver: self.solver,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    ExperimentConfig::from_toml_str(&text)
}
