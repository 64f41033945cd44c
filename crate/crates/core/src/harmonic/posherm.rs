//! The symmetric space of positive hermitian matrices with determinant one.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// A validated positive hermitian matrix with `det = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosHermitian(CMat);

impl PosHermitian {
    pub fn new(m: CMat) -> Result<Self> {
        validate(&m)?;
        Ok(PosHermitian(m))
    }

    pub fn identity(n: usize) -> Self {
        PosHermitian(linalg::identity(n))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }
}

pub fn validate(m: &CMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotPositiveHermitian(format!("shape {:?}", m.shape())));
    }
    let skew = linalg::max_abs(&(m - m.adjoint()));
    if skew > 1e-10 * (1.0 + linalg::max_abs(m)) {
        return Err(Error::NotPositiveHermitian(format!("not hermitian (defect {skew:e})")));
    }
    let (vals, _) = linalg::herm_eig(m);
    if vals[0] <= 0.0 {
        return Err(Error::NotPositiveHermitian(format!("eigenvalue {}", vals[0])));
    }
    let det: f64 = vals.iter().product();
    if (det - 1.0).abs() > 1e-8 {
        return Err(Error::NotPositiveHermitian(format!("determinant {det}")));
    }
    Ok(())
}

/// `g M g*`.
pub fn act(g: &CMat, m: &CMat) -> CMat {
    g * m * g.adjoint()
}

/// `‖log(M^{−1/2} N M^{−1/2})‖_F`, the distance of the invariant metric.
pub fn dist_d(m: &CMat, n: &CMat) -> Result<f64> {
    let (_, mi) = linalg::pos_sqrt_pair(m)?;
    let x = &mi * n * &mi;
    let (vals, _) = linalg::herm_eig(&x);
    if vals[0] < 1e-14 {
        return Err(Error::EigenvalueUnderflow(vals[0]));
    }
    Ok(vals.iter().map(|v| v.ln().powi(2)).sum::<f64>().sqrt())
}

/// `M^{1/2} (M^{−1/2} N M^{−1/2})^t M^{1/2}`.
pub fn geodesic(m: &CMat, n: &CMat, t: f64) -> Result<CMat> {
    if t == 0.0 {
        return Ok(m.clone());
    }
    let (s, si) = linalg::pos_sqrt_pair(m)?;
    let x = &si * n * &si;
    let p = linalg::pos_pow(&x, t)?;
    Ok(linalg::hermitian_part(&(&s * p * &s)))
}

/// `log(M^{−1/2} N M^{−1/2})`, the logarithm map at `M` in normalized
/// coordinates.
pub fn log_at(m_inv_sqrt: &CMat, n: &CMat) -> Result<CMat> {
    linalg::pos_log(&linalg::hermitian_part(&(m_inv_sqrt * n * m_inv_sqrt)))
}

/// `M^{1/2} exp(X) M^{1/2}` for hermitian `X`.
pub fn exp_at(m_sqrt: &CMat, x: &CMat) -> CMat {
    linalg::hermitian_part(&(m_sqrt * linalg::herm_exp(x) * m_sqrt))
}

/// Rescales a positive hermitian matrix to determinant one.
pub fn normalize_det(m: &CMat) -> CMat {
    let n = m.nrows();
    let d = linalg::det(m).re;
    m.map(|z| z / d.powf(1.0 / n as f64))
}

/// `log(λ_max / λ_min)`.
pub fn log_condition(m: &CMat) -> f64 {
    let (vals, _) = linalg::herm_eig(m);
    (vals[vals.len() - 1] / vals[0]).ln()
}

/// Random element `exp(H)` with `H` hermitian traceless of entries up to `scale`.
pub fn random_pos_hermitian(n: usize, scale: f64, rng: &mut impl rand::Rng) -> CMat {
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = C64::new(rng.random_range(-scale..scale), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    linalg::herm_exp(&linalg::traceless(&h))
}
