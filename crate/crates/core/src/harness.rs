//! Output SINR and the seeded Monte-Carlo engine.
//!
//! Every trial owns a random stream derived from `(master_seed, trial_index)`
//! alone, so results do not depend on scheduling or on which other trials
//! run. The same substreams are reused across methods and sweep points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    draw_scenario, interference_noise_covariance, sample_covariance, synthesize_snapshots, Scenario,
    ScenarioConfig,
};
use crate::beamformer::{
    copra_weights, mvdr_from_eigensystem, optimal_weights, quasi_rls_weights, BeamformerWeights, Method,
    QuasiGrid,
};
use crate::linalg::{hermitian_evd, inner, CMatrix, CVector};
use crate::secular::{copra_gammas, split_eigenvalues, GammaZPolicy, SolverOptions, DEFAULT_RHO};
use crate::{Error, Result};

/// Relative loading `eps * tr(C) / n` applied to a singular sample covariance.
pub const MVDR_RESCUE_LOADING: f64 = 1e-8;

fn sinr_against(w: &CVector, a: &CVector, soi_power: f64, c_in: &CMatrix) -> Result<f64> {
    if w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("weights"));
    }
    let num = soi_power * inner(w, a).norm_sqr();
    let den = inner(w, &(c_in * w)).re;
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("w^H C_in w"));
    }
    Ok(num / den)
}

/// `P_s |w^H a_true|^2 / (w^H C_in w)` in linear scale.
pub fn output_sinr(w: &BeamformerWeights, scenario: &Scenario) -> Result<f64> {
    let c_in = interference_noise_covariance(scenario);
    sinr_against(&w.w, &scenario.a_true, scenario.soi_power, &c_in)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean of linear SINR, reported in dB.
    #[default]
    Linear,
    /// Mean of per-trial dB values.
    Db,
}

/// Everything a single trial needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub scenario: ScenarioConfig,
    pub n_snapshots: usize,
    pub rho: f64,
    pub methods: Vec<Method>,
    /// Baseline loading in units of the noise power.
    pub diagonal_loading: f64,
    pub quasi_grid: QuasiGrid,
    pub gamma_z_policy: GammaZPolicy,
    pub solver: SolverOptions,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            n_snapshots: 30,
            rho: DEFAULT_RHO,
            methods: Method::ALL.to_vec(),
            diagonal_loading: 10.0,
            quasi_grid: QuasiGrid::default(),
            gamma_z_policy: GammaZPolicy::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n_snapshots == 0 {
            return Err(Error::invalid("n_snapshots", "must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid("rho", "must lie in (0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "at least one method is required"));
        }
        if !(self.diagonal_loading >= 0.0 && self.diagonal_loading.is_finite()) {
            return Err(Error::invalid("diagonal_loading", "must be finite and >= 0"));
        }
        self.quasi_grid.validate()?;
        self.solver.validate()
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream seed: `splitmix64(splitmix64(master) ^ index)`.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Linear SINR, absent when the method failed.
    pub sinr: Option<f64>,
    pub failure: Option<String>,
    pub gamma_b: Option<f64>,
    pub gamma_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub soi_doa_deg: f64,
    pub soi_error_deg: f64,
    pub interferer_doas_deg: Vec<f64>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
    pub gamma_b: Option<f64>,
    pub gamma_z: Option<f64>,
    pub gamma_b_fallback: bool,
    pub gamma_z_fallback: bool,
    pub gamma_b_converged: bool,
    pub gamma_z_converged: bool,
    /// Sample MVDR needed the rescue loading.
    pub mvdr_loaded: bool,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub scenario: ScenarioSummary,
}

impl TrialRecord {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    pub fn sinr(&self, method: Method) -> Option<f64> {
        self.outcome(method).and_then(|o| o.sinr)
    }

    /// Whether `method` ran in a degraded mode this trial.
    pub fn fell_back(&self, method: Method) -> bool {
        match method {
            Method::Copra => self.gamma_b_fallback || self.gamma_z_fallback,
            Method::SampleMvdr => self.mvdr_loaded,
            _ => false,
        }
    }
}

fn record(method: Method, res: Result<(BeamformerWeights, f64)>) -> MethodOutcome {
    match res {
        Ok((w, sinr)) => MethodOutcome {
            method,
            sinr: Some(sinr),
            failure: None,
            gamma_b: w.gamma_b,
            gamma_z: w.gamma_z,
        },
        Err(e) => MethodOutcome {
            method,
            sinr: None,
            failure: Some(e.to_string()),
            gamma_b: None,
            gamma_z: None,
        },
    }
}

/// Runs one trial. Failures of individual methods are recorded, not raised;
/// only an invalid configuration is an error.
pub fn run_trial(cfg: &TrialConfig, trial_index: u64, master_seed: u64) -> Result<TrialRecord> {
    cfg.validate()?;
    let seed = trial_seed(master_seed, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = draw_scenario(&mut rng, &cfg.scenario)?;
    let snaps = synthesize_snapshots(&scenario, cfg.n_snapshots, &mut rng)?;
    let c_hat = sample_covariance(&snaps);
    let c_in = interference_noise_covariance(&scenario);
    let es = hermitian_evd(&c_hat);
    let split = es.as_ref().map_err(Clone::clone).and_then(|es| split_eigenvalues(es, cfg.rho));
    let diag = match (&es, &split) {
        (Ok(es), Ok(split)) => Some(copra_gammas(
            es,
            split,
            &scenario.a_presumed,
            &snaps,
            cfg.gamma_z_policy,
            &cfg.solver,
        )),
        _ => None,
    };

    let eval = |w: BeamformerWeights| -> Result<(BeamformerWeights, f64)> {
        let s = sinr_against(&w.w, &scenario.a_true, scenario.soi_power, &c_in)?;
        Ok((w, s))
    };

    let mut mvdr_loaded = false;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let res = match method {
            Method::Optimal => optimal_weights(&scenario).and_then(eval),
            Method::SampleMvdr => es.clone().and_then(|es| {
                match mvdr_from_eigensystem(&es, &scenario.a_presumed, 0.0, Method::SampleMvdr) {
                    Err(Error::Singular(_)) => {
                        mvdr_loaded = true;
                        let trace: f64 = es.lambda().iter().sum();
                        let load = MVDR_RESCUE_LOADING * trace / es.dim() as f64;
                        mvdr_from_eigensystem(&es, &scenario.a_presumed, load, Method::SampleMvdr)
                    }
                    other => other,
                }
                .and_then(eval)
            }),
            Method::DiagonalLoading => es.clone().and_then(|es| {
                let load = cfg.diagonal_loading * scenario.noise_power;
                mvdr_from_eigensystem(&es, &scenario.a_presumed, load, Method::DiagonalLoading).and_then(eval)
            }),
            Method::QuasiRls => es
                .clone()
                .and_then(|es| quasi_rls_weights(&es, &scenario.a_presumed, &cfg.quasi_grid))
                .and_then(eval),
            Method::Copra => match (&es, &diag) {
                (Ok(es), Some(Ok(d))) => {
                    copra_weights(es, d.gamma_b.gamma, d.gamma_z.gamma, &scenario.a_presumed).and_then(eval)
                }
                (Err(e), _) | (_, Some(Err(e))) => Err(e.clone()),
                (Ok(_), None) => Err(split.clone().err().unwrap_or(Error::NonFinite("eigen split"))),
            },
        };
        outcomes.push(record(method, res));
    }

    let d = diag.and_then(|d| d.ok());
    Ok(TrialRecord {
        trial_index,
        seed,
        outcomes,
        gamma_b: d.as_ref().map(|d| d.gamma_b.gamma),
        gamma_z: d.as_ref().map(|d| d.gamma_z.gamma),
        gamma_b_fallback: d.as_ref().is_some_and(|d| d.gamma_b.fallback_used),
        gamma_z_fallback: d.as_ref().is_some_and(|d| d.gamma_z.fallback_used),
        gamma_b_converged: d.as_ref().is_some_and(|d| d.gamma_b.converged),
        gamma_z_converged: d.as_ref().is_some_and(|d| d.gamma_z.converged),
        mvdr_loaded,
        n1: d.as_ref().map(|d| d.n1),
        n2: d.as_ref().map(|d| d.n2),
        scenario: ScenarioSummary {
            soi_doa_deg: scenario.soi_doa_deg,
            soi_error_deg: scenario.soi_error_deg,
            interferer_doas_deg: scenario.interferer_doas_deg.clone(),
            snr_db: cfg.scenario.snr_db,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SnrDb,
    NSnapshots,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SnrDb => "snr_db",
            SweepKind::NSnapshots => "n_snapshots",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub trials: usize,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub aggregation: Aggregation,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("values", "sweep needs at least one point"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be positive"));
        }
        for &v in &self.values {
            let ok = match self.kind {
                SweepKind::SnrDb => v.is_finite(),
                SweepKind::NSnapshots => v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
            };
            if !ok {
                return Err(Error::invalid("values", format!("bad {} value {v}", self.kind.as_str())));
            }
        }
        Ok(())
    }

    fn apply(&self, base: &TrialConfig, value: f64) -> TrialConfig {
        let mut cfg = base.clone();
        match self.kind {
            SweepKind::SnrDb => cfg.scenario.snr_db = value,
            SweepKind::NSnapshots => cfg.n_snapshots = value as usize,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub mean_sinr_db: f64,
    pub stderr_db: f64,
    /// Trials that produced a value.
    pub valid: usize,
    pub fallback_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub methods: Vec<MethodStats>,
    pub gamma_b_fallback_rate: f64,
    pub gamma_z_fallback_rate: f64,
    pub mvdr_loaded_rate: f64,
}

impl SweepPoint {
    pub fn stats(&self, method: Method) -> Option<&MethodStats> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sweep_variable: SweepKind,
    pub points: Vec<SweepPoint>,
    pub trials: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub config: TrialConfig,
}

fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Mean (dB) and standard error (dB) of a sample of linear SINR values.
/// Linear aggregation propagates the standard error through `10 log10`.
pub fn aggregate(values: &[f64], how: Aggregation) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let xs: Vec<f64> = match how {
        Aggregation::Linear => values.to_vec(),
        Aggregation::Db => values.iter().map(|&v| to_db(v)).collect(),
    };
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    match how {
        Aggregation::Linear => (to_db(mean), 10.0 / std::f64::consts::LN_10 * se / mean),
        Aggregation::Db => (mean, se),
    }
}

/// Runs `trials` trials for `cfg` on the given pool, collected by index.
pub fn run_trials(cfg: &TrialConfig, trials: usize, master_seed: u64, workers: usize) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, i, master_seed))
            .collect()
    })
}

fn summarize(value: f64, records: &[TrialRecord], methods: &[Method], how: Aggregation) -> SweepPoint {
    let n = records.len() as f64;
    let rate = |f: &dyn Fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
    let methods = methods
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.sinr(m)).collect();
            let (mean_sinr_db, stderr_db) = aggregate(&vals, how);
            MethodStats {
                method: m,
                mean_sinr_db,
                stderr_db,
                valid: vals.len(),
                fallback_rate: rate(&|r| r.fell_back(m)),
            }
        })
        .collect();
    SweepPoint {
        value,
        methods,
        gamma_b_fallback_rate: rate(&|r| r.gamma_b_fallback),
        gamma_z_fallback_rate: rate(&|r| r.gamma_z_fallback),
        mvdr_loaded_rate: rate(&|r| r.mvdr_loaded),
    }
}

pub fn run_sweep(base: &TrialConfig, spec: &SweepSpec, master_seed: u64) -> Result<SweepResult> {
    spec.validate()?;
    base.validate()?;
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let cfg = spec.apply(base, value);
        let records = run_trials(&cfg, spec.trials, master_seed, spec.workers)?;
        points.push(summarize(value, &records, &cfg.methods, spec.aggregation));
    }
    Ok(SweepResult {
        sweep_variable: spec.kind,
        points,
        trials: spec.trials,
        seed: master_seed,
        aggregation: spec.aggregation,
        config: base.clone(),
    })
}
