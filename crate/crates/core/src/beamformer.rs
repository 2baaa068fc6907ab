//! Beamformer weights for every method under test, plus the generic LS/RLS
//! estimators and the worst-case residual cost they derive from.
//!
//! Weights are column vectors `w` with output `w^H y`. All inversions go
//! through the eigensystem of the covariance, so one decomposition per trial
//! serves every method.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{true_covariance, Scenario};
use crate::linalg::{hermitian_evd, inner, vector_norm, CMatrix, CVector, HermitianEigensystem};
use crate::{Error, Result};

/// Smallest eigenvalue relative to the largest below which a covariance is
/// treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SampleMvdr,
    DiagonalLoading,
    Copra,
    QuasiRls,
    Optimal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Optimal,
        Method::Copra,
        Method::SampleMvdr,
        Method::DiagonalLoading,
        Method::QuasiRls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SampleMvdr => "sample-mvdr",
            Method::DiagonalLoading => "diagonal-loading",
            Method::Copra => "copra",
            Method::QuasiRls => "quasi-rls",
            Method::Optimal => "optimal",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub w: CVector,
    pub method: Method,
    pub gamma_b: Option<f64>,
    pub gamma_z: Option<f64>,
}

impl BeamformerWeights {
    fn plain(w: CVector, method: Method) -> Self {
        Self {
            w,
            method,
            gamma_b: None,
            gamma_z: None,
        }
    }

    /// Beamformer output `w^H y`.
    pub fn output(&self, y: &CVector) -> Complex64 {
        inner(&self.w, y)
    }
}

fn check_nonzero(a: &CVector) -> Result<()> {
    if vector_norm(a) == 0.0 {
        return Err(Error::invalid("a", "steering vector is zero"));
    }
    Ok(())
}

fn check_regular(es: &HermitianEigensystem, what: &str) -> Result<()> {
    let max = es.max_eigenvalue();
    let min = es.lambda().last().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= SINGULAR_RATIO * max {
        return Err(Error::Singular(format!(
            "{what}: eigenvalue ratio {:.3e}",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    Ok(())
}

/// `C^-1 a / (a^H C^-1 a)` through the eigensystem of `C`, after adding
/// `loading` to every eigenvalue.
pub fn mvdr_from_eigensystem(
    es: &HermitianEigensystem,
    a: &CVector,
    loading: f64,
    method: Method,
) -> Result<BeamformerWeights> {
    check_nonzero(a)?;
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(Error::invalid("loading", "must be finite and >= 0"));
    }
    let max = es.max_eigenvalue() + loading;
    let min = es.lambda().last().copied().unwrap_or(0.0) + loading;
    if !(max > 0.0) || min <= SINGULAR_RATIO * max {
        return Err(Error::Singular(format!("covariance: eigenvalue ratio {:.3e}", min / max)));
    }
    let d = es.project(a)?;
    let mut denom = 0.0;
    let mut coords = d.clone();
    for (ci, &l) in coords.iter_mut().zip(es.lambda()) {
        let inv = 1.0 / (l + loading);
        denom += ci.norm_sqr() * inv;
        *ci *= inv;
    }
    let w = es.expand(&coords)?.unscale(denom);
    Ok(BeamformerWeights::plain(w, method))
}

/// Capon/MVDR weights for covariance `c` and steering vector `a`.
pub fn mvdr_weights(c: &CMatrix, a: &CVector) -> Result<BeamformerWeights> {
    let es = hermitian_evd(c)?;
    mvdr_from_eigensystem(&es, a, 0.0, Method::SampleMvdr)
}

/// MVDR on `c + loading I`.
pub fn diagonal_loading_weights(c: &CMatrix, a: &CVector, loading: f64) -> Result<BeamformerWeights> {
    let es = hermitian_evd(c)?;
    mvdr_from_eigensystem(&es, a, loading, Method::DiagonalLoading)
}

/// Regularized MVDR weights
///
/// ```text
/// w = U S^2 (S^2 + gb I)^-1 (S^2 + gz I)^-1 U^H a / (a^H U (S^2 + gb I)^-2 S^2 U^H a)
/// ```
///
/// so that `w^H y = b^H z / (b^H b)` with `b`, `z` the RLS estimates of the
/// whitened steering vector and snapshot.
pub fn copra_weights(
    es: &HermitianEigensystem,
    gamma_b: f64,
    gamma_z: f64,
    a: &CVector,
) -> Result<BeamformerWeights> {
    for (name, g) in [("gamma_b", gamma_b), ("gamma_z", gamma_z)] {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::invalid(name, "must be finite and >= 0"));
        }
    }
    if gamma_b == 0.0 || gamma_z == 0.0 {
        check_regular(es, "unregularized RLS")?;
    }
    check_nonzero(a)?;
    let mut coords = es.project(a)?;
    let mut denom = 0.0;
    for (ci, &l) in coords.iter_mut().zip(es.lambda()) {
        let b = l + gamma_b;
        let z = l + gamma_z;
        denom += l * ci.norm_sqr() / (b * b);
        *ci *= l / (b * z);
    }
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator("steering vector has no energy on retained modes"));
    }
    let w = es.expand(&coords)?.unscale(denom);
    Ok(BeamformerWeights {
        w,
        method: Method::Copra,
        gamma_b: Some(gamma_b),
        gamma_z: Some(gamma_z),
    })
}

/// RLS-MVDR weights with both parameters picked by the quasi-optimal rule:
/// `gamma_b` on `a`, `gamma_z` on the averaged snapshot profile.
pub fn quasi_rls_weights(es: &HermitianEigensystem, a: &CVector, grid: &QuasiGrid) -> Result<BeamformerWeights> {
    let gamma_b = quasi_optimal_gamma(es, a, grid)?;
    let gamma_z = quasi_optimal_gamma_weighted(es.lambda(), es.lambda(), grid)?;
    let mut w = copra_weights(es, gamma_b, gamma_z, a)?;
    w.method = Method::QuasiRls;
    Ok(w)
}

/// Clairvoyant MVDR on the true covariance and true steering vector.
pub fn optimal_weights(scenario: &Scenario) -> Result<BeamformerWeights> {
    let es = hermitian_evd(&true_covariance(scenario))?;
    mvdr_from_eigensystem(&es, &scenario.a_true, 0.0, Method::Optimal)
}

fn check_invertible_root(es: &HermitianEigensystem) -> Result<()> {
    let max = es.max_eigenvalue().sqrt();
    let min = es.lambda().last().copied().unwrap_or(0.0).sqrt();
    if !(max > 0.0) || min <= f64::EPSILON * max {
        return Err(Error::Singular("covariance square root".into()));
    }
    Ok(())
}

/// Least-squares solution of `C^{1/2} x = r`, i.e. `U S^-1 U^H r`.
pub fn ls_estimate(es: &HermitianEigensystem, r: &CVector) -> Result<CVector> {
    check_invertible_root(es)?;
    es.apply_filtered(|l| 1.0 / l.sqrt(), r)
}

/// RLS solution `(C + gI)^-1 C^{1/2} r = U (S^2 + gI)^-1 S U^H r`.
pub fn rls_estimate(es: &HermitianEigensystem, r: &CVector, gamma: f64) -> Result<CVector> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be finite and >= 0"));
    }
    if gamma == 0.0 {
        return ls_estimate(es, r);
    }
    es.apply_filtered(|l| l.sqrt() / (l + gamma), r)
}

/// Geometric grid for the quasi-optimal selector, relative to `max(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasiGrid {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for QuasiGrid {
    fn default() -> Self {
        Self {
            points: 200,
            lo: 1e-8,
            hi: 10.0,
        }
    }
}

impl QuasiGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::invalid("quasi_grid.points", "need at least 2"));
        }
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::invalid("quasi_grid.lo", "need 0 < lo < hi"));
        }
        Ok(())
    }

    pub fn gammas(&self, max_lambda: f64) -> Vec<f64> {
        let lo = (self.lo * max_lambda).ln();
        let hi = (self.hi * max_lambda).ln();
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| (lo + (hi - lo) * k as f64 / last).exp())
            .collect()
    }
}

/// Quasi-optimality: the grid point minimizing `||x(g_{k+1}) - x(g_k)||`.
pub fn quasi_optimal_gamma(es: &HermitianEigensystem, r: &CVector, grid: &QuasiGrid) -> Result<f64> {
    let weights: Vec<f64> = es.project(r)?.iter().map(|z| z.norm_sqr()).collect();
    quasi_optimal_gamma_weighted(es.lambda(), &weights, grid)
}

/// Same selector on an energy profile `weights[i] = |(U^H r)_i|^2`; the
/// eigenbasis is unitary, so only these energies enter the norms.
pub fn quasi_optimal_gamma_weighted(lambda: &[f64], weights: &[f64], grid: &QuasiGrid) -> Result<f64> {
    grid.validate()?;
    if weights.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda.len(),
            found: weights.len(),
        });
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("r", "right-hand side is zero"));
    }
    let max = lambda.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Singular("all eigenvalues are zero".into()));
    }
    let gammas = grid.gammas(max);
    let filter = |g: f64| -> Vec<f64> { lambda.iter().map(|&l| l.sqrt() / (l + g)).collect() };
    let mut prev = filter(gammas[0]);
    let mut best = (f64::INFINITY, gammas[0]);
    for k in 0..gammas.len() - 1 {
        let next = filter(gammas[k + 1]);
        let diff: f64 = prev
            .iter()
            .zip(&next)
            .zip(weights)
            .map(|((p, n), w)| w * (n - p) * (n - p))
            .sum();
        if diff < best.0 {
            best = (diff, gammas[k]);
        }
        prev = next;
    }
    Ok(best.1)
}

/// Worst-case residual cost `||r - C^{1/2} x|| + lambda ||x||`.
pub fn worst_case_cost(x: &CVector, r: &CVector, es: &HermitianEigensystem, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    let ax = es.apply_filtered(f64::sqrt, x)?;
    Ok(vector_norm(&(r - ax)) + lambda * vector_norm(x))
}

/// Gradient of [`worst_case_cost`] as `dF/dRe(x) + i dF/dIm(x)`:
///
/// ```text
/// (1/||r - A x||) [C x + lambda ||r - A x|| x / ||x|| - A r],   A = C^{1/2}
/// ```
pub fn worst_case_gradient(
    x: &CVector,
    r: &CVector,
    es: &HermitianEigensystem,
    lambda: f64,
) -> Result<CVector> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    let ax = es.apply_filtered(f64::sqrt, x)?;
    let resid = vector_norm(&(r - &ax));
    let xnorm = vector_norm(x);
    if !(resid > f64::MIN_POSITIVE) {
        return Err(Error::ZeroDenominator("residual norm ||r - C^{1/2} x|| vanished"));
    }
    if !(xnorm > f64::MIN_POSITIVE) {
        return Err(Error::ZeroDenominator("estimate norm ||x|| vanished"));
    }
    let cx = es.apply_filtered(|l| l, x)?;
    let ar = es.apply_filtered(f64::sqrt, r)?;
    Ok((cx + x.scale(lambda * resid / xnorm) - ar).unscale(resid))
}
