//! Narrowband uniform linear array model.
//!
//! Angles are in degrees at the API boundary. Noise power is normalized to 1,
//! so the SNR alone sets the signal-of-interest power.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, CVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_elements: usize,
    pub spacing_wavelengths: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            n_elements: 10,
            spacing_wavelengths: 0.5,
        }
    }
}

impl ArrayGeometry {
    pub fn new(n_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        let geometry = Self {
            n_elements,
            spacing_wavelengths,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(Error::invalid("n_elements", "must be at least 2"));
        }
        if !(self.spacing_wavelengths.is_finite() && self.spacing_wavelengths > 0.0) {
            return Err(Error::invalid("spacing_wavelengths", "must be positive"));
        }
        Ok(())
    }
}

/// Parameters for drawing random scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub n_interferers: usize,
    pub snr_db: f64,
    pub inr_db: f64,
    pub soi_error_bound_deg: f64,
    /// Interferers closer than this to the SOI direction are redrawn.
    pub interferer_guard_deg: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default(),
            n_interferers: 2,
            snr_db: 20.0,
            inr_db: 30.0,
            soi_error_bound_deg: 5.0,
            interferer_guard_deg: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db", "must be finite"));
        }
        if !self.inr_db.is_finite() {
            return Err(Error::invalid("inr_db", "must be finite"));
        }
        if !(self.soi_error_bound_deg.is_finite() && self.soi_error_bound_deg >= 0.0) {
            return Err(Error::invalid("soi_error_bound_deg", "must be finite and >= 0"));
        }
        if !(0.0..90.0).contains(&self.interferer_guard_deg) {
            return Err(Error::invalid("interferer_guard_deg", "must lie in [0, 90)"));
        }
        Ok(())
    }
}

/// One realized propagation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub soi_doa_deg: f64,
    /// Realized error of the presumed look direction.
    pub soi_error_deg: f64,
    pub interferer_doas_deg: Vec<f64>,
    pub soi_power: f64,
    pub interferer_powers: Vec<f64>,
    pub noise_power: f64,
    pub a_true: CVector,
    pub a_presumed: CVector,
    pub interferer_steering: Vec<CVector>,
}

/// `n_e x n_s` snapshot matrix, column `t` holds `y[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    snapshots: CMatrix,
}

impl SnapshotSet {
    pub fn new(snapshots: CMatrix) -> Result<Self> {
        if snapshots.ncols() == 0 {
            return Err(Error::invalid("snapshots", "empty snapshot set"));
        }
        if snapshots.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("snapshots"));
        }
        Ok(Self { snapshots })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.snapshots
    }

    pub fn n_snapshots(&self) -> usize {
        self.snapshots.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.snapshots.nrows()
    }

    pub fn snapshot(&self, t: usize) -> CVector {
        self.snapshots.column(t).into_owned()
    }
}

fn manifold(geometry: &ArrayGeometry, doa_rad: f64) -> CVector {
    let step = 2.0 * PI * geometry.spacing_wavelengths * doa_rad.sin();
    CVector::from_fn(geometry.n_elements, |p, _| {
        if p == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, step * p as f64)
        }
    })
}

/// ULA response `exp(i 2 pi d p sin(theta))`, element 0 at the phase reference.
pub fn steering_vector(geometry: &ArrayGeometry, doa_deg: f64) -> Result<CVector> {
    if !(-90.0..=90.0).contains(&doa_deg) {
        return Err(Error::invalid("doa_deg", format!("{doa_deg} outside [-90, 90]")));
    }
    Ok(manifold(geometry, doa_deg.to_radians()))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Draws SOI and interferer directions uniformly on `[-90, 90]` degrees and
/// a presumed-direction error uniformly on `[-bound, bound]`.
pub fn draw_scenario<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let soi_doa_deg = rng.random_range(-90.0..=90.0);
    let mut interferer_doas_deg = Vec::with_capacity(cfg.n_interferers);
    while interferer_doas_deg.len() < cfg.n_interferers {
        let doa: f64 = rng.random_range(-90.0..=90.0);
        if (doa - soi_doa_deg).abs() >= cfg.interferer_guard_deg {
            interferer_doas_deg.push(doa);
        }
    }
    let bound = cfg.soi_error_bound_deg;
    let soi_error_deg = if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    };
    Scenario::new(
        cfg.geometry,
        soi_doa_deg,
        soi_error_deg,
        interferer_doas_deg,
        db_to_linear(cfg.snr_db),
        vec![db_to_linear(cfg.inr_db); cfg.n_interferers],
        1.0,
    )
}

impl Scenario {
    /// The presumed direction may fall slightly outside `[-90, 90]` after
    /// adding the error; the manifold is evaluated there without clamping.
    pub fn new(
        geometry: ArrayGeometry,
        soi_doa_deg: f64,
        soi_error_deg: f64,
        interferer_doas_deg: Vec<f64>,
        soi_power: f64,
        interferer_powers: Vec<f64>,
        noise_power: f64,
    ) -> Result<Self> {
        geometry.validate()?;
        if interferer_powers.len() != interferer_doas_deg.len() {
            return Err(Error::DimensionMismatch {
                expected: interferer_doas_deg.len(),
                found: interferer_powers.len(),
            });
        }
        if !(soi_power.is_finite() && soi_power >= 0.0) {
            return Err(Error::invalid("soi_power", "must be finite and >= 0"));
        }
        if interferer_powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("interferer_powers", "must be finite and >= 0"));
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::invalid("noise_power", "must be positive"));
        }
        if !soi_error_deg.is_finite() {
            return Err(Error::invalid("soi_error_deg", "must be finite"));
        }
        let a_true = steering_vector(&geometry, soi_doa_deg)?;
        let a_presumed = manifold(&geometry, (soi_doa_deg + soi_error_deg).to_radians());
        let interferer_steering = interferer_doas_deg
            .iter()
            .map(|&doa| steering_vector(&geometry, doa))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry,
            soi_doa_deg,
            soi_error_deg,
            interferer_doas_deg,
            soi_power,
            interferer_powers,
            noise_power,
            a_true,
            a_presumed,
            interferer_steering,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.geometry.n_elements
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `y[t] = sqrt(P_s) s_t a + sum_k sqrt(P_k) i_kt a_k + v_t` with unit
/// circular Gaussian waveforms and white noise of the scenario's power.
pub fn synthesize_snapshots<R: Rng + ?Sized>(
    scenario: &Scenario,
    n_snapshots: usize,
    rng: &mut R,
) -> Result<SnapshotSet> {
    if n_snapshots == 0 {
        return Err(Error::invalid("n_snapshots", "must be at least 1"));
    }
    let n = scenario.n_elements();
    let soi_amp = scenario.soi_power.sqrt();
    let noise_amp = scenario.noise_power.sqrt();
    let mut y = CMatrix::zeros(n, n_snapshots);
    for t in 0..n_snapshots {
        let s = complex_normal(rng) * soi_amp;
        let mut col = &scenario.a_true * s;
        for (a_k, p_k) in scenario.interferer_steering.iter().zip(&scenario.interferer_powers) {
            let i_k = complex_normal(rng) * p_k.sqrt();
            col += a_k * i_k;
        }
        for p in 0..n {
            col[p] += complex_normal(rng) * noise_amp;
        }
        y.set_column(t, &col);
    }
    SnapshotSet::new(y)
}

/// `(1/n_s) sum_t y[t] y[t]^H`.
pub fn sample_covariance(s: &SnapshotSet) -> CMatrix {
    let y = s.matrix();
    let mut c = y * y.adjoint();
    c.unscale_mut(s.n_snapshots() as f64);
    // exact Hermitian symmetry regardless of product round-off
    let n = c.nrows();
    for i in 0..n {
        c[(i, i)].im = 0.0;
        for j in i + 1..n {
            c[(j, i)] = c[(i, j)].conj();
        }
    }
    c
}

/// Interference-plus-noise covariance from the true interferer directions.
pub fn interference_noise_covariance(scenario: &Scenario) -> CMatrix {
    let n = scenario.n_elements();
    let mut c = CMatrix::identity(n, n).scale(scenario.noise_power);
    for (a_k, p_k) in scenario.interferer_steering.iter().zip(&scenario.interferer_powers) {
        c += (a_k * a_k.adjoint()).scale(*p_k);
    }
    c
}

pub fn true_covariance(scenario: &Scenario) -> CMatrix {
    let a = &scenario.a_true;
    interference_noise_covariance(scenario) + (a * a.adjoint()).scale(scenario.soi_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, hermitian_evd, vector_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn geometry(n: usize) -> ArrayGeometry {
        ArrayGeometry::new(n, 0.5).unwrap()
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(&geometry(5), 0.0).unwrap();
        assert!(a.iter().all(|z| *z == c(1.0, 0.0)));
    }

    #[test]
    fn thirty_degrees_quarter_turns() {
        let a = steering_vector(&geometry(4), 30.0).unwrap();
        let expected = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (z, e) in a.iter().zip(expected) {
            assert!((z - e).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_rejects_out_of_range() {
        assert!(steering_vector(&geometry(4), 90.5).is_err());
        assert!(steering_vector(&geometry(4), -91.0).is_err());
        assert!(steering_vector(&geometry(4), 90.0).is_ok());
    }

    #[test]
    fn geometry_validation() {
        assert!(ArrayGeometry::new(1, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(ArrayGeometry::new(4, f64::NAN).is_err());
    }

    #[test]
    fn zero_error_bound_gives_exact_presumed_vector() {
        let cfg = ScenarioConfig {
            soi_error_bound_deg: 0.0,
            ..Default::default()
        };
        let s = draw_scenario(&mut ChaCha8Rng::seed_from_u64(1), &cfg).unwrap();
        assert_eq!(s.a_true, s.a_presumed);
        assert_eq!(s.soi_error_deg, 0.0);
    }

    #[test]
    fn scenario_draw_is_seeded() {
        let cfg = ScenarioConfig::default();
        let a = draw_scenario(&mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        let b = draw_scenario(&mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.interferer_doas_deg.len(), 2);
        assert_eq!(a.noise_power, 1.0);
        assert!((a.soi_power - 100.0).abs() < 1e-9);
        assert!((a.interferer_powers[0] - 1000.0).abs() < 1e-9);
        for doa in &a.interferer_doas_deg {
            assert!((doa - a.soi_doa_deg).abs() >= 2.0);
        }
    }

    #[test]
    fn scenario_config_validation() {
        let bad = ScenarioConfig {
            snr_db: f64::INFINITY,
            ..Default::default()
        };
        assert!(draw_scenario(&mut ChaCha8Rng::seed_from_u64(0), &bad).is_err());
        let bad = ScenarioConfig {
            soi_error_bound_deg: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn doa_draws_are_uniform() {
        // Kolmogorov-Smirnov distance against U[-90, 90]
        let cfg = ScenarioConfig {
            n_interferers: 0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut doas: Vec<f64> = (0..n)
            .map(|_| draw_scenario(&mut rng, &cfg).unwrap().soi_doa_deg)
            .collect();
        doas.sort_by(f64::total_cmp);
        let ks = doas
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x + 90.0) / 180.0;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    fn quiet_scenario(n: usize, soi_power: f64, noise_power: f64) -> Scenario {
        Scenario::new(geometry(n), 20.0, 0.0, vec![], soi_power, vec![], noise_power).unwrap()
    }

    #[test]
    fn pure_noise_variance() {
        let s = quiet_scenario(4, 0.0, 2.5);
        let snaps = synthesize_snapshots(&s, 10_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for p in 0..4 {
            let var = snaps.matrix().row(p).iter().map(|z| z.norm_sqr()).sum::<f64>() / 10_000.0;
            assert!((var / 2.5 - 1.0).abs() < 0.05, "element {p}: {var}");
        }
    }

    #[test]
    fn single_source_limit_is_rank_one() {
        let s = quiet_scenario(5, 1.0, 1e-300);
        let snaps = synthesize_snapshots(&s, 8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for t in 0..8 {
            let y = snaps.snapshot(t);
            let scale = y[0];
            let resid = y - &s.a_true * scale;
            assert!(vector_norm(&resid) < 1e-10);
        }
    }

    #[test]
    fn snapshots_are_seeded() {
        let s = quiet_scenario(4, 1.0, 1.0);
        let a = synthesize_snapshots(&s, 16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = synthesize_snapshots(&s, 16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(synthesize_snapshots(&s, 0, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
    }

    #[test]
    fn sample_covariance_small_cases() {
        let y = CMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let cov = sample_covariance(&SnapshotSet::new(y).unwrap());
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(1.0, 0.0)]);
        assert_eq!(cov, expected);

        let e1 = CMatrix::from_fn(3, 4, |r, _| if r == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let cov = sample_covariance(&SnapshotSet::new(e1).unwrap());
        let mut expected = CMatrix::zeros(3, 3);
        expected[(0, 0)] = c(1.0, 0.0);
        assert_eq!(cov, expected);

        assert!(SnapshotSet::new(CMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn sample_covariance_is_hermitian_psd() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let s = draw_scenario(&mut rng, &cfg).unwrap();
            let snaps = synthesize_snapshots(&s, 7, &mut rng).unwrap();
            let cov = sample_covariance(&snaps);
            assert!(frobenius(&(&cov - cov.adjoint())) <= 1e-14 * frobenius(&cov));
            let trace: f64 = (0..10).map(|i| cov[(i, i)].re).sum();
            let direct: f64 = snaps.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>() / 7.0;
            assert!((trace - direct).abs() < 1e-10 * direct);
            // EVD clamps, so check raw Rayleigh quotients instead
            let g = snaps.matrix().adjoint() * &cov * snaps.matrix();
            for i in 0..7 {
                assert!(g[(i, i)].re >= -1e-12 * frobenius(&cov));
            }
        }
    }

    #[test]
    fn interference_covariance_structure() {
        let g = geometry(6);
        let quiet = Scenario::new(g, 0.0, 0.0, vec![], 1.0, vec![], 1.0).unwrap();
        assert_eq!(interference_noise_covariance(&quiet), CMatrix::identity(6, 6));
        assert_eq!(true_covariance(&quiet), CMatrix::identity(6, 6) + CMatrix::from_element(6, 6, c(1.0, 0.0)));

        let one = Scenario::new(g, 0.0, 0.0, vec![40.0], 0.0, vec![7.0], 1.0).unwrap();
        let es = hermitian_evd(&interference_noise_covariance(&one)).unwrap();
        assert!((es.lambda()[0] - (1.0 + 7.0 * 6.0)).abs() < 1e-10);
        assert!(es.lambda()[1..].iter().all(|l| (l - 1.0).abs() < 1e-10));
        assert_eq!(true_covariance(&one), interference_noise_covariance(&one));

        let two = Scenario::new(g, 0.0, 0.0, vec![40.0, -25.0], 3.0, vec![7.0, 11.0], 2.0).unwrap();
        let cin = interference_noise_covariance(&two);
        let trace: f64 = (0..6).map(|i| cin[(i, i)].re).sum();
        assert!((trace - 6.0 * (2.0 + 18.0)).abs() < 1e-10);
    }

    #[test]
    fn sample_covariance_converges_to_true() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = draw_scenario(&mut rng, &cfg).unwrap();
        let snaps = synthesize_snapshots(&s, 100_000, &mut rng).unwrap();
        let truth = true_covariance(&s);
        let err = frobenius(&(sample_covariance(&snaps) - &truth)) / frobenius(&truth);
        assert!(err < 0.02, "relative error {err}");
    }

    #[test]
    fn estimation_error_shrinks_with_snapshots() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut avg = [0.0; 3];
        for _ in 0..20 {
            let s = draw_scenario(&mut rng, &cfg).unwrap();
            let truth = true_covariance(&s);
            for (k, n_s) in [100, 1_000, 10_000].into_iter().enumerate() {
                let snaps = synthesize_snapshots(&s, n_s, &mut rng).unwrap();
                avg[k] += frobenius(&(sample_covariance(&snaps) - &truth)) / frobenius(&truth);
            }
        }
        assert!(avg[0] > avg[1] && avg[1] > avg[2], "{avg:?}");
    }

    #[test]
    fn steering_entries_unit_modulus() {
        let g = ArrayGeometry::new(12, 0.37).unwrap();
        for k in 0..=180 {
            let a = steering_vector(&g, k as f64 - 90.0).unwrap();
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
            assert!((vector_norm(&a).powi(2) - 12.0).abs() < 1e-12);
        }
    }
}
