//! Dense complex linear algebra at array scale.
//!
//! Storage and products come from `nalgebra`; the Hermitian eigensolver is a
//! cyclic complex Jacobi iteration, which is robust at the sizes used here
//! (tens of elements) and gives eigenvectors orthonormal to working
//! precision even for clustered spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Relative Hermitian-symmetry defect accepted by [`hermitian_evd`].
pub const HERMITIAN_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = U diag(lambda) U^H` of a Hermitian PSD matrix.
///
/// Eigenvalues are sorted in descending order and clamped at zero; column `i`
/// of `u` is the eigenvector for `lambda[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigensystem {
    u: CMatrix,
    lambda: Vec<f64>,
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vector_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `v^H w`.
pub fn inner(v: &CVector, w: &CVector) -> Complex64 {
    v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a Complex64>) -> bool {
    it.all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Decomposes a Hermitian matrix with cyclic Jacobi rotations.
pub fn hermitian_evd(a: &CMatrix) -> Result<HermitianEigensystem> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if !all_finite(a.iter()) {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let n = rows;
    let norm = frobenius(a);
    let defect = frobenius(&(a - a.adjoint()));
    if defect > HERMITIAN_TOL * norm {
        return Err(Error::NotHermitian {
            defect: if norm > 0.0 { defect / norm } else { defect },
        });
    }

    let mut m = (a + a.adjoint()).scale(0.5);
    for i in 0..n {
        m[(i, i)].im = 0.0;
    }
    let mut v = CMatrix::identity(n, n);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep their Jacobi order
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let lambda = order.iter().map(|&i| m[(i, i)].re.max(0.0)).collect();
    let u = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEigensystem { u, lambda })
}

/// One complex Jacobi rotation annihilating `m[p,q]`.
fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    if g < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = Complex64::new(0.0, 0.0);
        m[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = apq / g;
    let tau = (aqq - app) / (2.0 * g);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // J = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q)
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;

    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * jpp + mkq * jqp;
        m[(k, q)] = mkp * jpq + mkq * jqq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = jpp.conj() * mpk + jqp.conj() * mqk;
        m[(q, k)] = jpq.conj() * mpk + jqq.conj() * mqk;
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)].im = 0.0;
    m[(q, q)].im = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

impl HermitianEigensystem {
    /// Builds an eigensystem from known factors. Eigenvalues are reordered
    /// descending (with the matching columns of `u`) and negatives clamped.
    pub fn from_parts(u: CMatrix, lambda: Vec<f64>) -> Result<Self> {
        let (rows, cols) = u.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if lambda.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: lambda.len(),
            });
        }
        if lambda.iter().any(|l| !l.is_finite()) || !all_finite(u.iter()) {
            return Err(Error::NonFinite("eigensystem factors"));
        }
        let defect = frobenius(&(u.adjoint() * &u - CMatrix::identity(rows, rows)));
        if defect > 1e-10 * rows as f64 {
            return Err(Error::invalid("u", format!("not unitary (defect {defect:.3e})")));
        }
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&i, &j| lambda[j].total_cmp(&lambda[i]));
        Ok(Self {
            u: CMatrix::from_fn(rows, rows, |r, c| u[(r, order[c])]),
            lambda: order.iter().map(|&i| lambda[i].max(0.0)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    /// Eigenvalues, descending, all `>= 0`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mean_eigenvalue(&self) -> f64 {
        self.lambda.iter().sum::<f64>() / self.dim() as f64
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.lambda.first().copied().unwrap_or(0.0)
    }

    /// Square roots of the eigenvalues: the spectrum of the matrix square root.
    pub fn sqrt_eigs(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| l.sqrt()).collect()
    }

    /// Coordinates of `v` in the eigenbasis, `U^H v`.
    pub fn project(&self, v: &CVector) -> Result<CVector> {
        self.check_len(v.len())?;
        Ok(self.u.ad_mul(v))
    }

    /// Maps eigen-coordinates back, `U c`.
    pub fn expand(&self, coords: &CVector) -> Result<CVector> {
        self.check_len(coords.len())?;
        Ok(&self.u * coords)
    }

    /// `U diag(f(lambda)) U^H v`.
    pub fn apply_filtered(&self, f: impl Fn(f64) -> f64, v: &CVector) -> Result<CVector> {
        let mut d = self.project(v)?;
        for (di, &l) in d.iter_mut().zip(&self.lambda) {
            let g = f(l);
            if !g.is_finite() {
                return Err(Error::NonFinite("spectral filter"));
            }
            *di *= g;
        }
        Ok(&self.u * d)
    }

    /// `U diag(lambda) U^H`.
    pub fn reconstruct(&self) -> CMatrix {
        self.filtered_matrix(|l| l)
    }

    /// Dense `U diag(f(lambda)) U^H`.
    pub fn filtered_matrix(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.u.clone();
        for c in 0..n {
            let g = f(self.lambda[c]);
            for r in 0..n {
                scaled[(r, c)] *= g;
            }
        }
        scaled * self.u.adjoint()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&g + g.adjoint()).scale(0.5)
    }

    fn defects(a: &CMatrix, es: &HermitianEigensystem) -> (f64, f64) {
        let n = a.nrows();
        let recon = frobenius(&(es.reconstruct() - a)) / frobenius(a).max(1e-300);
        let ortho = frobenius(&(es.u().adjoint() * es.u() - CMatrix::identity(n, n))) / n as f64;
        (recon, ortho)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let es = hermitian_evd(&CMatrix::identity(3, 3)).unwrap();
        assert_eq!(es.lambda(), &[1.0, 1.0, 1.0]);
        let (_, ortho) = defects(&CMatrix::identity(3, 3), &es);
        assert!(ortho < 1e-14);
    }

    #[test]
    fn diagonal_input_is_sorted_signed_permutation() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]));
        let es = hermitian_evd(&a).unwrap();
        assert_eq!(es.lambda(), &[3.0, 2.0, 1.0]);
        for col in 0..3 {
            let nonzero = (0..3).filter(|&r| es.u()[(r, col)].norm() > 1e-12).count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn two_by_two_complex_case() {
        let a = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let es = hermitian_evd(&a).unwrap();
        assert_abs_diff_eq!(es.lambda()[0], 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(es.lambda()[1], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(hermitian_evd(&rect), Err(Error::NotSquare { .. })));
        let skew = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_evd(&skew), Err(Error::NotHermitian { .. })));
        let mut nan = CMatrix::identity(2, 2);
        nan[(0, 0)] = c(f64::NAN, 0.0);
        assert!(matches!(hermitian_evd(&nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sqrt_eigs_round_trip() {
        let u = CMatrix::identity(3, 3);
        let es = HermitianEigensystem::from_parts(u, vec![4.0, 1.0, 0.0]).unwrap();
        assert_eq!(es.sqrt_eigs(), vec![2.0, 1.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_hermitian(&mut rng, 6);
        let psd = &g * g.adjoint();
        let es = hermitian_evd(&psd).unwrap();
        for (s, l) in es.sqrt_eigs().iter().zip(es.lambda()) {
            assert!((s * s - l).abs() <= 1e-12 * l.max(1.0));
        }
    }

    #[test]
    fn clamps_negative_round_off() {
        // rank-one PSD matrix: trailing eigenvalues are pure round-off
        let v = CVector::from_fn(5, |i, _| c(1.0, i as f64));
        let a = &v * v.adjoint();
        let es = hermitian_evd(&a).unwrap();
        assert!(es.lambda().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn filtered_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_hermitian(&mut rng, 4);
        let a = &g * g.adjoint();
        let es = hermitian_evd(&a).unwrap();
        let v = CVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));

        let same = es.apply_filtered(|_| 1.0, &v).unwrap();
        assert!(vector_norm(&(same - &v)) < 1e-12);

        let av = es.apply_filtered(|l| l, &v).unwrap();
        assert!(vector_norm(&(av - &a * &v)) < 1e-12);

        let gamma = 0.3;
        let solved = es.apply_filtered(|l| 1.0 / (l + gamma), &v).unwrap();
        let shifted = &a + CMatrix::identity(4, 4).scale(gamma);
        let dense = shifted.lu().solve(&v).unwrap();
        assert!(vector_norm(&(solved - dense)) < 1e-10);

        assert!(matches!(
            es.apply_filtered(|_| f64::INFINITY, &v),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            es.apply_filtered(|l| l, &CVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 10, 16, 32] {
            let a = random_hermitian(&mut rng, n);
            // indefinite input: eigenvalues get clamped, so test the PSD square
            let psd = &a * &a;
            let es = hermitian_evd(&psd).unwrap();
            let (recon, ortho) = defects(&psd, &es);
            assert!(recon < 1e-12, "n={n} recon={recon}");
            assert!(ortho < 1e-12, "n={n} ortho={ortho}");
            assert!(es.lambda().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn degenerate_spectrum() {
        let v = CVector::from_fn(6, |i, _| c((i as f64).cos(), (i as f64).sin()));
        let a = CMatrix::identity(6, 6) + (&v * v.adjoint()).scale(2.0);
        let es = hermitian_evd(&a).unwrap();
        let (recon, ortho) = defects(&a, &es);
        assert!(recon < 1e-13 && ortho < 1e-13);
        assert_abs_diff_eq!(es.lambda()[0], 13.0, epsilon = 1e-12);
        for &l in &es.lambda()[1..] {
            assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn from_parts_validates() {
        assert!(HermitianEigensystem::from_parts(CMatrix::identity(2, 2), vec![1.0]).is_err());
        let not_unitary = CMatrix::identity(2, 2).scale(2.0);
        assert!(HermitianEigensystem::from_parts(not_unitary, vec![1.0, 1.0]).is_err());
        let es = HermitianEigensystem::from_parts(CMatrix::identity(2, 2), vec![1.0, 5.0]).unwrap();
        assert_eq!(es.lambda(), &[5.0, 1.0]);
        assert_eq!(es.u()[(1, 0)], c(1.0, 0.0));
    }
}
