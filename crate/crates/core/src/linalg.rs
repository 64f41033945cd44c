//! Small dense complex linear algebra on top of nalgebra.
//!
//! Matrices here are at most a few dozen rows; functions favour clarity over
//! allocation economy.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

/// Max absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_sqr(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Real inner product `Re tr(a* b)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn skew_part(m: &CMat) -> CMat {
    (m - m.adjoint()).scale(0.5)
}

pub fn traceless(m: &CMat) -> CMat {
    let n = m.nrows();
    let t = m.trace() / n as f64;
    m - CMat::identity(n, n) * t
}

pub fn det(m: &CMat) -> C64 {
    m.clone().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let d = det(m);
    if d.norm() < 1e-300 {
        return Err(Error::SingularMatrix(d.norm()));
    }
    m.clone().try_inverse().ok_or_else(|| Error::SingularMatrix(d.norm()))
}

pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn real2(a: f64, b: f64, c_: f64, d: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[c(a, 0.0), c(b, 0.0), c(c_, 0.0), c(d, 0.0)])
}

pub fn diag(entries: &[C64]) -> CMat {
    let n = entries.len();
    CMat::from_fn(n, n, |i, j| if i == j { entries[i] } else { C64::new(0.0, 0.0) })
}

/// Eigen-decomposition of a hermitian matrix: ascending real eigenvalues and
/// unitary eigenvectors (columns).
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    if m.nrows() == 2 {
        return herm_eig2(m);
    }
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let vecs = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, idx[col])]);
    (vals, vecs)
}

/// Closed form for `2×2`: the eigenbasis is a rotation by `θ` with
/// `tan 2θ = |b| / ((a−d)/2)` twisted by the phase of `b`.
fn herm_eig2(m: &CMat) -> (Vec<f64>, CMat) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());
    if r == 0.0 {
        return (vec![a, d], identity(2));
    }
    // the small-modulus eigenvalue from the determinant avoids cancellation
    let det = a * d - b.norm_sqr();
    let (lo, hi) = if mean >= 0.0 {
        let hi = mean + r;
        (if hi != 0.0 { det / hi } else { mean - r }, hi)
    } else {
        let lo = mean - r;
        (lo, det / lo)
    };
    let theta = 0.5 * b.norm().atan2(half);
    let (sn, cs) = theta.sin_cos();
    let ph = if b.norm() > 0.0 { b / b.norm() } else { c(1.0, 0.0) };
    // columns: eigenvector of lo, eigenvector of hi
    let vecs = CMat::from_row_slice(2, 2, &[-ph * sn, c(cs, 0.0), c(cs, 0.0), ph.conj() * sn]);
    (vec![lo, hi], vecs)
}

/// Applies a real function to the spectrum of a hermitian matrix.
pub fn herm_apply(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, v) = herm_eig(m);
    let d: Vec<C64> = vals.iter().map(|&x| c(f(x), 0.0)).collect();
    &v * diag(&d) * v.adjoint()
}

fn check_positive(vals: &[f64]) -> Result<()> {
    match vals.first() {
        Some(&lo) if lo < 1e-14 => Err(Error::EigenvalueUnderflow(lo)),
        _ => Ok(()),
    }
}

/// Principal logarithm of a positive hermitian matrix.
pub fn pos_log(m: &CMat) -> Result<CMat> {
    let (vals, v) = herm_eig(m);
    check_positive(&vals)?;
    let d: Vec<C64> = vals.iter().map(|&x| c(x.ln(), 0.0)).collect();
    Ok(&v * diag(&d) * v.adjoint())
}

pub fn pos_sqrt(m: &CMat) -> Result<CMat> {
    let (vals, v) = herm_eig(m);
    check_positive(&vals)?;
    let d: Vec<C64> = vals.iter().map(|&x| c(x.sqrt(), 0.0)).collect();
    Ok(&v * diag(&d) * v.adjoint())
}

/// Returns `(m^{1/2}, m^{-1/2})`.
pub fn pos_sqrt_pair(m: &CMat) -> Result<(CMat, CMat)> {
    let (vals, v) = herm_eig(m);
    check_positive(&vals)?;
    let s: Vec<C64> = vals.iter().map(|&x| c(x.sqrt(), 0.0)).collect();
    let si: Vec<C64> = vals.iter().map(|&x| c(1.0 / x.sqrt(), 0.0)).collect();
    let vd = v.adjoint();
    Ok((&v * diag(&s) * &vd, &v * diag(&si) * &vd))
}

pub fn pos_pow(m: &CMat, t: f64) -> Result<CMat> {
    let (vals, v) = herm_eig(m);
    check_positive(&vals)?;
    let d: Vec<C64> = vals.iter().map(|&x| c(x.powf(t), 0.0)).collect();
    Ok(&v * diag(&d) * v.adjoint())
}

/// Exponential of a hermitian matrix.
pub fn herm_exp(m: &CMat) -> CMat {
    herm_apply(m, f64::exp)
}

/// Exponential of a skew-hermitian matrix (a unitary matrix).
pub fn skew_exp(x: &CMat) -> CMat {
    // x = i h with h hermitian
    let h = x.map(|z| z * (-I));
    let (vals, v) = herm_eig(&h);
    let d: Vec<C64> = vals.iter().map(|&t| C64::from_polar(1.0, t)).collect();
    &v * diag(&d) * v.adjoint()
}

/// Spectral decomposition of a normal matrix via the complex Schur form.
/// Returns eigenvalues and a unitary basis of eigenvectors.
pub fn normal_eig(m: &CMat) -> (Vec<C64>, CMat) {
    let schur = m.clone().schur();
    let (q, t) = schur.unpack();
    let vals = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    (vals, q)
}

/// Principal logarithm of a unitary matrix; fails when an eigenvalue sits on
/// the branch cut at -1.
pub fn unitary_log(u: &CMat) -> Result<CMat> {
    let (vals, q) = normal_eig(u);
    let mut logs = Vec::with_capacity(vals.len());
    for v in vals {
        let arg = v.arg();
        if (std::f64::consts::PI - arg.abs()) < 1e-9 {
            return Err(Error::LogBranch);
        }
        logs.push(c(v.norm().ln(), arg));
    }
    Ok(&q * diag(&logs) * q.adjoint())
}

/// Adjoint (for the real inner product `Re tr(a* b)`) of the Fréchet
/// derivative of the principal logarithm at a normal matrix `u`.
///
/// For `u = Q diag(λ) Q*` the derivative is `E ↦ Q (L ∘ Q*EQ) Q*` with
/// divided differences `L_ij = (log λ_i − log λ_j)/(λ_i − λ_j)`; its adjoint
/// uses the conjugated table.
pub fn log_frechet_adjoint(u: &CMat, g: &CMat) -> Result<CMat> {
    let (vals, q) = normal_eig(u);
    let logs: Vec<C64> = vals
        .iter()
        .map(|v| {
            let arg = v.arg();
            c(v.norm().ln(), arg)
        })
        .collect();
    if vals.iter().any(|v| (std::f64::consts::PI - v.arg().abs()) < 1e-9) {
        return Err(Error::LogBranch);
    }
    let n = vals.len();
    let gt = q.adjoint() * g * &q;
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let dv = vals[i] - vals[j];
            let l = if dv.norm() < 1e-8 {
                let mid = (vals[i] + vals[j]) * 0.5;
                C64::new(1.0, 0.0) / mid
            } else {
                (logs[i] - logs[j]) / dv
            };
            out[(i, j)] = l.conj() * gt[(i, j)];
        }
    }
    Ok(&q * out * q.adjoint())
}

/// Unitary polar factor `U` of `m = U P`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_2x2_matches_general_solver() {
        let cases = [
            from_rows(&[&[c(1.0, 0.0), c(0.3, 0.2)], &[c(0.3, -0.2), c(-0.5, 0.0)]]),
            from_rows(&[&[c(2.0, 0.0), c(0.0, 1e-9)], &[c(0.0, -1e-9), c(2.0, 0.0)]]),
            from_rows(&[&[c(3.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(-1.0, 0.0)]]),
            from_rows(&[&[c(1e5, 0.0), c(-4.0, 7.0)], &[c(-4.0, -7.0), c(1e-5, 0.0)]]),
        ];
        for m in &cases {
            let (vals, v) = herm_eig(m);
            let general = m.clone().symmetric_eigen();
            let mut gv: Vec<f64> = general.eigenvalues.iter().copied().collect();
            gv.sort_by(f64::total_cmp);
            for (x, y) in vals.iter().zip(&gv) {
                assert!((x - y).abs() < 1e-12 * (1.0 + max_abs(m)));
            }
            let d = diag(&[c(vals[0], 0.0), c(vals[1], 0.0)]);
            let err = max_abs(&(&v * d * v.adjoint() - m));
            assert!(err < 1e-12 * (1.0 + max_abs(m)), "{m} {err:e}");
            assert!(max_abs(&(v.adjoint() * &v - identity(2))) < 1e-14);
        }
    }

    #[test]
    fn log_exp_roundtrip_hermitian() {
        let h = from_rows(&[&[c(1.0, 0.0), c(0.3, 0.2)], &[c(0.3, -0.2), c(-0.5, 0.0)]]);
        let e = herm_exp(&h);
        let back = pos_log(&e).unwrap();
        assert!(max_abs(&(back - h)) < 1e-13);
    }

    #[test]
    fn unitary_log_of_skew_exp() {
        let x = from_rows(&[&[c(0.0, 0.4), c(0.1, 0.2)], &[c(-0.1, 0.2), c(0.0, -0.4)]]);
        let u = skew_exp(&x);
        assert!(max_abs(&(u.adjoint() * &u - identity(2))) < 1e-14);
        let l = unitary_log(&u).unwrap();
        assert!(max_abs(&(l - x)) < 1e-13);
    }

    #[test]
    fn log_branch_rejected() {
        let u = diag(&[c(-1.0, 0.0), c(-1.0, 0.0)]);
        assert!(matches!(unitary_log(&u), Err(Error::LogBranch)));
    }

    #[test]
    fn frechet_adjoint_matches_finite_difference() {
        let x = from_rows(&[&[c(0.0, 0.7), c(0.2, 0.1)], &[c(-0.2, 0.1), c(0.0, -0.3)]]);
        let u = skew_exp(&x);
        // tangent direction E = X u with X skew-hermitian, so u ± hE stays unitary
        let xd = from_rows(&[&[c(0.0, 0.2), c(0.3, -0.1)], &[c(-0.3, -0.1), c(0.0, 0.5)]]);
        let e = &xd * &u;
        let g = from_rows(&[&[c(0.3, -0.1), c(0.1, 0.2)], &[c(-0.5, 0.0), c(0.2, 0.1)]]);
        let h = 1e-5;
        let lp = unitary_log(&(skew_exp(&xd.scale(h)) * &u)).unwrap();
        let lm = unitary_log(&(skew_exp(&xd.scale(-h)) * &u)).unwrap();
        let fd = inner(&g, &((lp - lm).scale(0.5 / h)));
        let adj = log_frechet_adjoint(&u, &g).unwrap();
        let an = inner(&adj, &e);
        assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
    }

    #[test]
    fn polar_factor_is_unitary() {
        let m = from_rows(&[&[c(1.0, 0.2), c(0.3, 0.0)], &[c(0.1, -0.4), c(2.0, 0.1)]]);
        let u = polar_unitary(&m);
        assert!(max_abs(&(u.adjoint() * &u - identity(2))) < 1e-13);
    }
}
