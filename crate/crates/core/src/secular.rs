//! COPRA regularization selection.
//!
//! The eigenvalues of the sample covariance are split into a significant
//! group and a near-zero group. For a right-hand side `r` with eigen
//! coordinates `d = U^H r`, the regularization parameter is the positive
//! root of
//!
//! ```text
//! G(g) = T_A T_B + (n2 / g) T_A - T_D T_E
//! T_A = sum_i  l_i |d_i|^2 / (l_i + g)^2          (full spectrum)
//! T_D = sum_i      |d_i|^2 / (l_i + g)^2          (full spectrum)
//! T_B = sum_{i<n1}     (beta l_i + g) / (l_i + g)^2
//! T_E = sum_{i<n1} l_i (beta l_i + g) / (l_i + g)^2,   beta = n_e / n1
//! ```
//!
//! Every term is a rational function of `g`, so both `G` and `G'` are
//! evaluated in closed form in `O(n_e)`.
//!
//! `G` need not change sign on the positive axis (an isotropic spectrum makes
//! it vanish identically, and some spectra keep it strictly one-signed). The
//! solver therefore brackets the first sign change with a logarithmic scan
//! and falls back to `rho * mean(lambda)` when none exists.

use serde::{Deserialize, Serialize};

use crate::array::SnapshotSet;
use crate::linalg::{CMatrix, CVector, HermitianEigensystem};
use crate::{Error, Result};

/// Default truncation constant for the eigenvalue split.
pub const DEFAULT_RHO: f64 = 0.1;

/// Partition of a covariance spectrum into significant and trivial parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSplit {
    lambda: Vec<f64>,
    n1: usize,
    rho: f64,
    threshold: f64,
}

impl EigenSplit {
    pub fn n_elements(&self) -> usize {
        self.lambda.len()
    }

    /// Number of significant eigenvalues.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of truncated eigenvalues.
    pub fn n2(&self) -> usize {
        self.lambda.len() - self.n1
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `n_e / n1`.
    pub fn beta(&self) -> f64 {
        self.lambda.len() as f64 / self.n1 as f64
    }

    /// Singular-value threshold `rho * mean(sqrt(lambda))`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn significant(&self) -> &[f64] {
        &self.lambda[..self.n1]
    }

    pub fn mean_eigenvalue(&self) -> f64 {
        self.lambda.iter().sum::<f64>() / self.lambda.len() as f64
    }

    /// Regularization used when the secular equation has no positive root.
    pub fn fallback_gamma(&self) -> f64 {
        self.rho * self.mean_eigenvalue()
    }
}

/// Keeps every eigenvalue whose square root exceeds `rho` times the mean
/// square root.
pub fn split_eigenvalues(es: &HermitianEigensystem, rho: f64) -> Result<EigenSplit> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("{rho} not in (0, 1)")));
    }
    let sv = es.sqrt_eigs();
    let threshold = rho * sv.iter().sum::<f64>() / sv.len() as f64;
    let n1 = sv.iter().filter(|&&s| s > threshold).count();
    if n1 == 0 {
        return Err(Error::Singular("all eigenvalues are zero".into()));
    }
    Ok(EigenSplit {
        lambda: es.lambda().to_vec(),
        n1,
        rho,
        threshold,
    })
}

/// The secular function for a fixed split and right-hand-side energy profile
/// `weights[i] = |d_i|^2`.
#[derive(Debug, Clone, Copy)]
pub struct SecularEquation<'a> {
    split: &'a EigenSplit,
    weights: &'a [f64],
}

/// `G`, `G'` and the magnitude of the largest cancelling product at one `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularEval {
    pub value: f64,
    pub derivative: f64,
    pub scale: f64,
}

impl SecularEval {
    /// True when `value` is above the cancellation noise of its own terms.
    pub fn is_significant(&self) -> bool {
        self.value.abs() > 64.0 * f64::EPSILON * self.scale
    }
}

impl<'a> SecularEquation<'a> {
    pub fn new(split: &'a EigenSplit, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != split.n_elements() {
            return Err(Error::DimensionMismatch {
                expected: split.n_elements(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "must be finite and >= 0"));
        }
        Ok(Self { split, weights })
    }

    pub fn eval(&self, gamma: f64) -> SecularEval {
        let beta = self.split.beta();
        let n2 = self.split.n2() as f64;

        let (mut ta, mut ta_d, mut td, mut td_d) = (0.0, 0.0, 0.0, 0.0);
        for (&l, &w) in self.split.lambda.iter().zip(self.weights) {
            let inv = 1.0 / (l + gamma);
            let inv2 = inv * inv;
            ta += l * w * inv2;
            td += w * inv2;
            ta_d -= 2.0 * l * w * inv2 * inv;
            td_d -= 2.0 * w * inv2 * inv;
        }
        let (mut tb, mut tb_d, mut te, mut te_d) = (0.0, 0.0, 0.0, 0.0);
        for &l in self.split.significant() {
            let inv = 1.0 / (l + gamma);
            let inv2 = inv * inv;
            let num = beta * l + gamma;
            let term = num * inv2;
            let term_d = inv2 - 2.0 * num * inv2 * inv;
            tb += term;
            tb_d += term_d;
            te += l * term;
            te_d += l * term_d;
        }
        let p1 = ta * tb;
        let p2 = n2 / gamma * ta;
        let p3 = td * te;
        SecularEval {
            value: p1 + p2 - p3,
            derivative: ta_d * tb + ta * tb_d - n2 / (gamma * gamma) * ta + n2 / gamma * ta_d
                - td_d * te
                - td * te_d,
            scale: p1.abs() + p2.abs() + p3.abs(),
        }
    }

    pub fn value(&self, gamma: f64) -> f64 {
        self.eval(gamma).value
    }
}

fn energy(d: &CVector) -> Vec<f64> {
    d.iter().map(|z| z.norm_sqr()).collect()
}

/// `G(gamma)` for eigen coordinates `d = U^H r`.
pub fn secular_function(gamma: f64, split: &EigenSplit, d: &CVector) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let w = energy(d);
    Ok(SecularEquation::new(split, &w)?.value(gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Points in the logarithmic sign scan.
    pub scan_points: usize,
    /// Scan interval, relative to `mean(lambda)`.
    pub scan_lo: f64,
    pub scan_hi: f64,
    /// Newton starting point, relative to `mean(lambda)`.
    pub init: f64,
    /// Residual tolerance relative to `|G(gamma_init)|`.
    pub residual_rel: f64,
    /// Relative step (or bracket width) that ends the iteration.
    pub step_rel: f64,
    pub max_newton: usize,
    pub max_bisection: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scan_points: 200,
            scan_lo: 1e-9,
            scan_hi: 1e3,
            init: 1e-6,
            residual_rel: 1e-12,
            step_rel: 1e-9,
            max_newton: 100,
            max_bisection: 200,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.scan_points < 2 {
            return Err(Error::invalid("scan_points", "need at least 2"));
        }
        if !(self.scan_lo > 0.0 && self.scan_hi > self.scan_lo && self.scan_hi.is_finite()) {
            return Err(Error::invalid("scan_lo", "need 0 < scan_lo < scan_hi"));
        }
        if !(self.init > 0.0 && self.init.is_finite()) {
            return Err(Error::invalid("init", "must be positive"));
        }
        if !(self.residual_rel >= 0.0 && self.step_rel > 0.0) {
            return Err(Error::invalid("step_rel", "tolerances must be positive"));
        }
        Ok(())
    }

    /// The scan grid for a spectrum with the given mean eigenvalue.
    pub fn scan_grid(&self, mean_lambda: f64) -> Vec<f64> {
        let lo = (self.scan_lo * mean_lambda).ln();
        let hi = (self.scan_hi * mean_lambda).ln();
        let last = (self.scan_points - 1) as f64;
        (0..self.scan_points)
            .map(|k| (lo + (hi - lo) * k as f64 / last).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecularSolveReport {
    pub gamma: f64,
    pub iterations: usize,
    /// `|G(gamma)|` at return.
    pub residual: f64,
    /// Residual bound used for the convergence verdict.
    pub tolerance: f64,
    pub converged: bool,
    pub fallback_used: bool,
    pub bracket: Option<(f64, f64)>,
}

impl SecularSolveReport {
    fn fallback(split: &EigenSplit) -> Self {
        Self {
            gamma: split.fallback_gamma(),
            iterations: 0,
            residual: f64::NAN,
            tolerance: f64::NAN,
            converged: false,
            fallback_used: true,
            bracket: None,
        }
    }
}

/// Solves `G(gamma) = 0` for `d = U^H r`.
pub fn solve_secular(split: &EigenSplit, d: &CVector, opts: &SolverOptions) -> Result<SecularSolveReport> {
    let w = energy(d);
    solve_secular_weighted(split, &w, opts)
}

/// Safeguarded Newton solve on an energy profile `weights[i] = |d_i|^2`.
///
/// Finds the first significant sign change of `G` on the scan grid, then
/// runs Newton from `init * mean(lambda)` with every step clipped to the
/// bracket (bisection otherwise). Never fails on a missing root: the report
/// carries the fallback instead.
pub fn solve_secular_weighted(
    split: &EigenSplit,
    weights: &[f64],
    opts: &SolverOptions,
) -> Result<SecularSolveReport> {
    opts.validate()?;
    let eq = SecularEquation::new(split, weights)?;
    let mean = split.mean_eigenvalue();

    let Some((mut lo, mut hi)) = first_bracket(&eq, &opts.scan_grid(mean)) else {
        return Ok(SecularSolveReport::fallback(split));
    };
    let bracket = Some((lo, hi));

    let init = opts.init * mean;
    let tolerance = opts.residual_rel * eq.value(init).abs();
    let lo_positive = eq.value(lo) > 0.0;

    let mut x = if init > lo && init < hi { init } else { (lo * hi).sqrt() };
    let mut iterations = 0;
    let mut settled = false;
    while iterations < opts.max_newton + opts.max_bisection {
        iterations += 1;
        let e = eq.eval(x);
        if e.value == 0.0 {
            settled = true;
            break;
        }
        if (e.value > 0.0) == lo_positive {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - e.value / e.derivative;
        let next = if iterations <= opts.max_newton && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= opts.step_rel * x || hi - lo <= opts.step_rel * lo {
            settled = true;
            break;
        }
    }
    let residual = eq.value(x).abs();
    Ok(SecularSolveReport {
        gamma: x,
        iterations,
        residual,
        tolerance,
        converged: settled && residual <= tolerance,
        fallback_used: false,
        bracket,
    })
}

/// First adjacent pair of grid points where `G` changes sign with both
/// values above round-off.
fn first_bracket(eq: &SecularEquation<'_>, grid: &[f64]) -> Option<(f64, f64)> {
    let mut prev: Option<(f64, f64)> = None;
    for &g in grid {
        let e = eq.eval(g);
        if !e.is_significant() {
            prev = None;
            continue;
        }
        if let Some((pg, pv)) = prev {
            if (pv > 0.0) != (e.value > 0.0) {
                return Some((pg, g));
            }
        }
        prev = Some((g, e.value));
    }
    None
}

/// How `gamma_z` treats the snapshot right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaZPolicy {
    /// Replace `d d^H` by its snapshot average `U^H C U`, i.e. weights = lambda.
    #[default]
    Averaged,
    /// Solve per snapshot and take the median of the located roots.
    PerSnapshotMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopraDiagnostics {
    pub gamma_b: SecularSolveReport,
    pub gamma_z: SecularSolveReport,
    /// Perturbation bound at `gamma_b` for `r = a`.
    pub lambda_o_sq_b: f64,
    /// Perturbation bound at `gamma_z` for the snapshot profile.
    pub lambda_o_sq_z: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Regularization parameters for the steering-vector system (`gamma_b`) and
/// the snapshot system (`gamma_z`).
pub fn copra_gammas(
    es: &HermitianEigensystem,
    split: &EigenSplit,
    a_presumed: &CVector,
    snapshots: &SnapshotSet,
    policy: GammaZPolicy,
    opts: &SolverOptions,
) -> Result<CopraDiagnostics> {
    if split.n_elements() != es.dim() || snapshots.n_elements() != es.dim() {
        return Err(Error::DimensionMismatch {
            expected: es.dim(),
            found: snapshots.n_elements(),
        });
    }
    let wb = energy(&es.project(a_presumed)?);
    let gamma_b = solve_secular_weighted(split, &wb, opts)?;

    let (gamma_z, wz) = match policy {
        GammaZPolicy::Averaged => {
            let wz = es.lambda().to_vec();
            (solve_secular_weighted(split, &wz, opts)?, wz)
        }
        GammaZPolicy::PerSnapshotMedian => {
            let d_all: CMatrix = es.u().ad_mul(snapshots.matrix());
            let mut roots = Vec::new();
            let mut iterations = 0;
            let mut residual: f64 = 0.0;
            let mut tolerance: f64 = 0.0;
            let mut converged = true;
            for t in 0..snapshots.n_snapshots() {
                let w: Vec<f64> = d_all.column(t).iter().map(|z| z.norm_sqr()).collect();
                let rep = solve_secular_weighted(split, &w, opts)?;
                iterations += rep.iterations;
                if !rep.fallback_used {
                    converged &= rep.converged;
                    residual = residual.max(rep.residual);
                    tolerance = tolerance.max(rep.tolerance);
                    roots.push(rep.gamma);
                }
            }
            let wz = es.lambda().to_vec();
            let rep = match median(&mut roots) {
                Some(gamma) => SecularSolveReport {
                    gamma,
                    iterations,
                    residual,
                    tolerance,
                    converged,
                    fallback_used: false,
                    bracket: None,
                },
                None => SecularSolveReport::fallback(split),
            };
            (rep, wz)
        }
    };
    Ok(CopraDiagnostics {
        lambda_o_sq_b: lambda_o_sq_weighted(gamma_b.gamma, es.lambda(), &wb)?,
        lambda_o_sq_z: lambda_o_sq_weighted(gamma_z.gamma, es.lambda(), &wz)?,
        gamma_b,
        gamma_z,
        n1: split.n1(),
        n2: split.n2(),
    })
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Optimal perturbation bound squared at `gamma` for right-hand side `r`.
pub fn lambda_o_sq(gamma: f64, es: &HermitianEigensystem, r: &CVector) -> Result<f64> {
    let w = energy(&es.project(r)?);
    lambda_o_sq_weighted(gamma, es.lambda(), &w)
}

fn lambda_o_sq_weighted(gamma: f64, lambda: &[f64], weights: &[f64]) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&l, &w) in lambda.iter().zip(weights) {
        let inv2 = 1.0 / ((l + gamma) * (l + gamma));
        num += l * w * inv2;
        den += w * inv2;
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("right-hand side is zero"));
    }
    Ok(num / den)
}

/// MSE of the RLS estimate `(C + gI)^-1 C^{1/2} r` under `r = C^{1/2} x + v`:
/// `s2 tr(S^2 (S^2+gI)^-2) + g^2 tr((S^2+gI)^-2 U^H Cxx U)`.
pub fn rls_mse(gamma: f64, es: &HermitianEigensystem, c_xx: &CMatrix, noise_power: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be finite and >= 0"));
    }
    let n = es.dim();
    if c_xx.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c_xx.nrows(),
        });
    }
    let rotated = es.u().adjoint() * c_xx * es.u();
    let mut mse = 0.0;
    for (i, &l) in es.lambda().iter().enumerate() {
        let denom = (l + gamma) * (l + gamma);
        if denom == 0.0 {
            // zero mode with no regularization: both factors vanish
            continue;
        }
        mse += (noise_power * l + gamma * gamma * rotated[(i, i)].re) / denom;
    }
    Ok(mse)
}

/// Closed-form MSE-approximating regularization `n_e s2 / tr(Cxx)`.
pub fn gamma_mse_approx(c_xx_trace: f64, noise_power: f64, n_elements: usize) -> Result<f64> {
    if !(c_xx_trace > 0.0) {
        return Err(Error::ZeroDenominator("signal covariance trace"));
    }
    Ok(n_elements as f64 * noise_power / c_xx_trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_evd;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn diag_system(lambda: &[f64]) -> HermitianEigensystem {
        let n = lambda.len();
        HermitianEigensystem::from_parts(CMatrix::identity(n, n), lambda.to_vec()).unwrap()
    }

    #[test]
    fn split_examples() {
        let s = split_eigenvalues(&diag_system(&[4.0; 4]), 0.5).unwrap();
        assert_eq!((s.n1(), s.n2()), (4, 0));
        assert_eq!(s.beta(), 1.0);

        let s = split_eigenvalues(&diag_system(&[100.0, 1e-18, 1e-18, 1e-18]), 0.1).unwrap();
        assert_eq!((s.n1(), s.n2()), (1, 3));
        assert_relative_eq!(s.threshold(), 0.1 * (10.0 + 3e-9) / 4.0, max_relative = 1e-12);
        assert_eq!(s.beta(), 4.0);
    }

    #[test]
    fn split_rejects_bad_rho_and_zero_spectrum() {
        let es = diag_system(&[1.0, 1.0]);
        assert!(split_eigenvalues(&es, 0.0).is_err());
        assert!(split_eigenvalues(&es, 1.0).is_err());
        assert!(split_eigenvalues(&es, 1.5).is_err());
        assert!(split_eigenvalues(&diag_system(&[0.0, 0.0]), 0.1).is_err());
    }

    fn two_mode() -> EigenSplit {
        // sqrt spectrum (sqrt 2, 0), mean 0.707, threshold 0.0707: n1 = 1
        let s = split_eigenvalues(&diag_system(&[2.0, 0.0]), 0.1).unwrap();
        assert_eq!((s.n1(), s.n2()), (1, 1));
        s
    }

    #[test]
    fn closed_form_negative_case() {
        let s = two_mode();
        let d = CVector::from_vec(vec![c(1.0), c(1.0)]);
        for g in [0.5, 1.0, 2.0] {
            let expected = -8.0 / (g * g * (2.0 + g) * (2.0 + g));
            assert_relative_eq!(secular_function(g, &s, &d).unwrap(), expected, max_relative = 1e-12);
        }
        assert_relative_eq!(secular_function(2.0, &s, &d).unwrap(), -0.125, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_positive_case() {
        let s = two_mode();
        let d = CVector::from_vec(vec![c(1.0), c(0.0)]);
        for g in [0.01, 0.5, 3.0, 100.0] {
            let expected = 2.0 / (g * (2.0 + g) * (2.0 + g));
            assert_relative_eq!(secular_function(g, &s, &d).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn isotropic_spectrum_cancels() {
        let s = split_eigenvalues(&diag_system(&[3.0; 5]), 0.1).unwrap();
        let d = CVector::from_vec(vec![c(1.0), c(-2.0), c(0.5), c(3.0), c(0.1)]);
        for g in [1e-6, 0.1, 1.0, 10.0, 1e5] {
            let w = energy(&d);
            let e = SecularEquation::new(&s, &w).unwrap().eval(g);
            assert!(!e.is_significant(), "g={g}: {e:?}");
        }
        let rep = solve_secular(&s, &d, &SolverOptions::default()).unwrap();
        assert!(rep.fallback_used && !rep.converged);
        assert_relative_eq!(rep.gamma, 0.3, max_relative = 1e-15);
    }

    #[test]
    fn one_signed_function_falls_back() {
        let s = two_mode();
        let d = CVector::from_vec(vec![c(1.0), c(1.0)]);
        let rep = solve_secular(&s, &d, &SolverOptions::default()).unwrap();
        assert!(rep.fallback_used);
        assert_eq!(rep.gamma, s.fallback_gamma());
        assert_eq!(rep.bracket, None);
    }

    #[test]
    fn argument_errors() {
        let s = two_mode();
        let d = CVector::from_vec(vec![c(1.0), c(1.0)]);
        assert!(secular_function(0.0, &s, &d).is_err());
        assert!(secular_function(-1.0, &s, &d).is_err());
        assert!(secular_function(1.0, &s, &CVector::zeros(3)).is_err());
        assert!(solve_secular(&s, &CVector::zeros(3), &SolverOptions::default()).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let lambda = [9.0, 4.0, 2.5, 0.3, 1e-4, 1e-6];
        let s = split_eigenvalues(&diag_system(&lambda), 0.1).unwrap();
        let w = [0.2, 1.0, 0.5, 2.0, 3.0, 0.7];
        let eq = SecularEquation::new(&s, &w).unwrap();
        for g in [1e-3, 0.05, 0.7, 3.0, 40.0] {
            let h = 1e-6 * g;
            let fd = (eq.value(g + h) - eq.value(g - h)) / (2.0 * h);
            assert_relative_eq!(eq.eval(g).derivative, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn solver_finds_bracketed_root() {
        let lambda = [50.0, 20.0, 1.0, 0.5, 0.2, 0.1];
        let es = diag_system(&lambda);
        let s = split_eigenvalues(&es, 0.1).unwrap();
        // steering-like profile concentrated on weak modes
        let w = [0.01, 0.02, 1.0, 1.5, 2.0, 1.4];
        let eq = SecularEquation::new(&s, &w).unwrap();
        let rep = solve_secular_weighted(&s, &w, &SolverOptions::default()).unwrap();
        let grid = SolverOptions::default().scan_grid(s.mean_eigenvalue());
        let has_root = grid.windows(2).any(|p| (eq.value(p[0]) > 0.0) != (eq.value(p[1]) > 0.0));
        assert_eq!(has_root, !rep.fallback_used);
        if !rep.fallback_used {
            assert!(rep.converged, "{rep:?}");
            assert!(eq.value(rep.gamma).abs() <= rep.residual);
            let (lo, hi) = rep.bracket.unwrap();
            assert!(lo <= rep.gamma && rep.gamma <= hi);
        }
    }

    #[test]
    fn lambda_o_examples() {
        let es = diag_system(&[2.0; 3]);
        let r = CVector::from_vec(vec![c(1.0), c(-0.3), c(2.0)]);
        assert_relative_eq!(lambda_o_sq(0.7, &es, &r).unwrap(), 2.0, max_relative = 1e-14);

        let es = diag_system(&[4.0, 1.0]);
        let r = CVector::from_vec(vec![c(3.0), c(0.0)]);
        assert_relative_eq!(lambda_o_sq(0.5, &es, &r).unwrap(), 4.0, max_relative = 1e-14);

        assert!(lambda_o_sq(0.5, &es, &CVector::zeros(2)).is_err());
        assert!(lambda_o_sq(0.0, &es, &r).is_err());
    }

    #[test]
    fn rls_mse_limits() {
        let es = diag_system(&[4.0, 2.0, 0.5]);
        let cxx = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), c(2.0), c(3.0)]));
        let ls = rls_mse(0.0, &es, &cxx, 0.3).unwrap();
        assert_relative_eq!(ls, 0.3 * (0.25 + 0.5 + 2.0), max_relative = 1e-14);
        let far = rls_mse(1e12, &es, &cxx, 0.3).unwrap();
        assert_relative_eq!(far, 6.0, max_relative = 1e-9);

        let singular = diag_system(&[1.0, 0.0]);
        let cxx2 = CMatrix::identity(2, 2);
        assert!(rls_mse(0.0, &singular, &cxx2, 1.0).unwrap().is_finite());
        assert!(rls_mse(-1.0, &es, &cxx, 1.0).is_err());
    }

    #[test]
    fn gamma_approx_cases() {
        assert_eq!(gamma_mse_approx(20.0, 0.5, 10).unwrap(), 0.25);
        assert_eq!(gamma_mse_approx(3.0, 0.0, 10).unwrap(), 0.0);
        assert!(gamma_mse_approx(0.0, 1.0, 10).is_err());
    }

    #[test]
    fn rls_mse_convexity_region() {
        // each term (s2 l + g^2 c)/(l + g)^2 has f'' > 0 exactly for
        // g < l/2 + 1.5 s2/c; the sum is convex below the smallest bound and
        // turns concave as g -> inf (it approaches tr(Cxx) from below)
        let mut a = CMatrix::from_fn(6, 6, |r, k| {
            Complex64::new((r * 7 + k * 3) as f64 % 5.0 - 2.0, (r + k) as f64 % 3.0 - 1.0)
        });
        a = &a * a.adjoint();
        let es = hermitian_evd(&a).unwrap();
        let cxx = CMatrix::from_diagonal(&CVector::from_fn(6, |i, _| c(1.0 + i as f64)));
        let s2 = 0.7;
        let f = |g: f64| rls_mse(g, &es, &cxx, s2).unwrap();
        let rotated = es.u().adjoint() * &cxx * es.u();
        let bound = es
            .lambda()
            .iter()
            .enumerate()
            .map(|(i, l)| l / 2.0 + 1.5 * s2 / rotated[(i, i)].re)
            .fold(f64::INFINITY, f64::min);
        for k in 0..200 {
            let g1 = bound * k as f64 / 400.0;
            let g2 = g1 + bound * (200 - k) as f64 / 400.0;
            let mid = 0.5 * (g1 + g2);
            assert!(f(mid) <= 0.5 * (f(g1) + f(g2)) * (1.0 + 1e-12), "k={k}");
        }
        let (g1, g2) = (1e3, 1e5);
        assert!(f(0.5 * (g1 + g2)) > 0.5 * (f(g1) + f(g2)));
    }
}
