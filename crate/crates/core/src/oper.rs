//! Schwarzian calculus, oper ODE families, the covariants `w_k`, monodromy by
//! analytic continuation and Eichler cocycles.
//!
//! Solutions of `y^(n) + Q_2 y^(n-2) + ... + Q_n y = 0` are continued as the
//! companion system `Y' = C(z) Y`. A fundamental matrix has rows
//! `y, y', ..., y^(n-1)` and one column per solution, normalized to the
//! identity at the basepoint.

use std::sync::Arc;

use num_complex::Complex64;
use serde_json::json;

use crate::error::{Error, Result};
use crate::hyp::{translate_path, FuchsianGroup, GroupWord, HPath, Moebius};
use crate::jets::{Derived, JetProvider, Jets, Taylor, Zero};
use crate::linalg::{self, CMat};
use crate::par;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `f'''/f' − (3/2)(f''/f')²` from the first four Taylor coefficients.
pub fn schwarzian_of_series(t: &Taylor, z: C64) -> Result<C64> {
    if t.order() < 3 {
        return Err(Error::JetOrder { requested: 3, available: t.order() });
    }
    let d = t.to_derivatives();
    if d[1].norm() <= 1e-12 {
        return Err(Error::CriticalPoint { z, modulus: d[1].norm() });
    }
    let r = d[2] / d[1];
    Ok(d[3] / d[1] - 1.5 * r * r)
}

/// Schwarzian derivative `S(f)(z)`.
pub fn schwarzian(f: &dyn JetProvider, z: C64) -> Result<C64> {
    schwarzian_of_series(&f.taylor(z, 3)?, z)
}

/// An ODE `y^(n) + Q_2 y^(n-2) + ... + Q_n y = 0`.
#[derive(Clone)]
pub struct OperODE {
    pub n: usize,
    /// `Q_2, ..., Q_n`.
    pub coeffs: Vec<Jets>,
}

impl OperODE {
    pub fn new(n: usize, coeffs: Vec<Jets>) -> Result<Self> {
        if n < 2 || coeffs.len() != n - 1 {
            return Err(Error::InvalidArgument(format!(
                "order {n} needs {} coefficients, got {}",
                n.saturating_sub(1),
                coeffs.len()
            )));
        }
        Ok(OperODE { n, coeffs })
    }

    /// `y^(n) = 0`.
    pub fn trivial(n: usize) -> Self {
        OperODE { n, coeffs: (2..=n).map(|_| Arc::new(Zero) as Jets).collect() }
    }

    /// `Q_j` for `j = 0..=n` with `Q_0 = 1`, `Q_1 = 0`.
    pub fn coefficient(&self, j: usize) -> Option<&Jets> {
        if j >= 2 {
            self.coeffs.get(j - 2)
        } else {
            None
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(|q| q.is_zero())
    }

    fn values(&self, z: C64) -> Result<Vec<C64>> {
        self.coeffs.iter().map(|q| if q.is_zero() { Ok(ZERO) } else { q.value(z) }).collect()
    }

    /// Taylor series of `Q_2, ..., Q_n` at `z`.
    pub fn series(&self, z: C64, order: usize) -> Result<Vec<Taylor>> {
        self.coeffs.iter().map(|q| if q.is_zero() { Ok(Taylor::zero(order)) } else { q.taylor(z, order) }).collect()
    }
}

fn derived(q: &Jets, extra: usize, expr: fn(&[Taylor]) -> Result<Taylor>) -> Jets {
    Arc::new(Derived { sources: vec![q.clone()], extra_order: extra, expr, zero_if_sources_zero: true })
}

/// The ODE attached to a projective connection `Q` through the principal
/// embedding, for `2 ≤ n ≤ 6`.
pub fn ode_from_projective(n: usize, q: Jets) -> Result<OperODE> {
    let coeffs: Vec<Jets> = match n {
        2 => vec![q],
        3 => vec![derived(&q, 0, |t| Ok(t[0].scale(re(4.0)))), derived(&q, 1, |t| Ok(t[0].deriv().scale(re(2.0))))],
        4 => vec![
            derived(&q, 0, |t| Ok(t[0].scale(re(10.0)))),
            derived(&q, 1, |t| Ok(t[0].deriv().scale(re(10.0)))),
            derived(&q, 2, |t| {
                let q = &t[0];
                Ok(q.mul(q).scale(re(9.0)).add(&q.deriv_n(2).scale(re(3.0))))
            }),
        ],
        5 => vec![
            derived(&q, 0, |t| Ok(t[0].scale(re(20.0)))),
            derived(&q, 1, |t| Ok(t[0].deriv().scale(re(30.0)))),
            derived(&q, 2, |t| {
                let q = &t[0];
                Ok(q.mul(q).scale(re(64.0)).add(&q.deriv_n(2).scale(re(18.0))))
            }),
            derived(&q, 3, |t| {
                let q = &t[0];
                Ok(q.mul(&q.deriv()).scale(re(64.0)).add(&q.deriv_n(3).scale(re(4.0))))
            }),
        ],
        6 => vec![
            derived(&q, 0, |t| Ok(t[0].scale(re(35.0)))),
            derived(&q, 1, |t| Ok(t[0].deriv().scale(re(70.0)))),
            derived(&q, 2, |t| {
                let q = &t[0];
                Ok(q.deriv_n(2).scale(re(63.0)).add(&q.mul(q).scale(re(259.0))))
            }),
            derived(&q, 3, |t| {
                let q = &t[0];
                Ok(q.deriv_n(3).scale(re(28.0)).add(&q.mul(&q.deriv()).scale(re(518.0))))
            }),
            derived(&q, 4, |t| {
                let q = &t[0];
                let d1 = q.deriv();
                let d2 = q.deriv_n(2);
                Ok(d1
                    .mul(&d1)
                    .scale(re(130.0))
                    .add(&q.mul(&d2).scale(re(155.0)))
                    .add(&q.deriv_n(4).scale(re(5.0)))
                    .add(&q.mul(q).mul(q).scale(re(225.0))))
            }),
        ],
        _ => return Err(Error::InvalidArgument(format!("principal families are available for n in 2..=6, got {n}"))),
    };
    OperODE::new(n, coeffs)
}

/// The covariants `w_2, w_3, w_4` at a point; entries beyond the order of the
/// equation are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariants {
    pub w2: C64,
    pub w3: Option<C64>,
    pub w4: Option<C64>,
}

impl Covariants {
    pub fn as_vec(&self) -> Vec<Option<C64>> {
        vec![Some(self.w2), self.w3, self.w4]
    }
}

/// Constants of `w_3` and `w_4`:
/// `w_3 = Q_3 − a Q_2'`,
/// `w_4 = Q_4 − b Q_3' + c Q_2'' − d Q_2²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WkConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl WkConstants {
    pub fn for_order(n: usize) -> Self {
        let nf = n as f64;
        WkConstants {
            a: (nf - 2.0) / 2.0,
            b: (nf - 3.0) / 2.0,
            c: (nf - 2.0) * (nf - 3.0) / 10.0,
            d: (nf - 2.0) * (nf - 3.0) * (5.0 * nf + 7.0) / (10.0 * nf * (nf * nf - 1.0)),
        }
    }
}

/// `w_2, w_3, w_4` from Taylor series of `Q_2, Q_3, Q_4` (derivatives up to
/// order 2, 1 and 0 are used).
pub fn wk_from_series(n: usize, q: &[Taylor]) -> Result<Covariants> {
    wk_from_series_with(n, q, &WkConstants::for_order(n))
}

pub fn wk_from_series_with(n: usize, q: &[Taylor], k: &WkConstants) -> Result<Covariants> {
    if n < 2 || q.is_empty() {
        return Err(Error::InvalidArgument(format!("w_k needs n ≥ 2 and Q_2, got n = {n}")));
    }
    let d2 = q[0].to_derivatives();
    let at = |v: &[C64], i: usize| -> Result<C64> {
        v.get(i).copied().ok_or(Error::JetOrder { requested: i, available: v.len().saturating_sub(1) })
    };
    let w2 = d2[0];
    let w3 = if n >= 3 {
        let d3 = q[1].to_derivatives();
        Some(d3[0] - k.a * at(&d2, 1)?)
    } else {
        None
    };
    let w4 = if n >= 4 {
        let d3 = q[1].to_derivatives();
        let d4 = q[2].to_derivatives();
        Some(d4[0] - k.b * at(&d3, 1)? + k.c * at(&d2, 2)? - k.d * d2[0] * d2[0])
    } else {
        None
    };
    Ok(Covariants { w2, w3, w4 })
}

/// `w_k` at `z` for the equation with coefficients `Q_2, ..., Q_n`.
pub fn wk_covariants(ode: &OperODE, z: C64) -> Result<Covariants> {
    let mut series = vec![ode.coeffs[0].taylor(z, 2)?];
    if ode.n >= 3 {
        series.push(ode.coeffs[1].taylor(z, 1)?);
    }
    if ode.n >= 4 {
        series.push(ode.coeffs[2].taylor(z, 0)?);
    }
    wk_from_series(ode.n, &series)
}

/// Series of `(alpha + beta s)^p`.
fn affine_power(alpha: C64, beta: C64, p: i32, order: usize) -> Result<Taylor> {
    let base = Taylor::binomial_power(alpha, p, order)?;
    let mut scale = ONE;
    Ok(Taylor {
        coeffs: base
            .coeffs
            .iter()
            .map(|a| {
                let v = a * scale;
                scale *= beta;
                v
            })
            .collect(),
    })
}

/// Coefficients `Q̃_2, ..., Q̃_n` of the same operator written in the
/// coordinate `w = γz`, as Taylor series of order `order` around `w0 = γ z0`.
///
/// Solutions carry weight `(1 − n)/2`: `y(z) = ỹ(w) (a − c w)^{1−n}`.
pub fn transform_coefficients(ode: &OperODE, change: &Moebius, z0: C64, order: usize) -> Result<Vec<Taylor>> {
    let n = ode.n;
    let big = order + n + 1;
    let w0 = change.apply_unchecked(z0);
    let inv = change.inverse();
    let zs = inv.taylor(w0, big)?;
    let (a, c) = (re(change.a), re(change.c));
    let alpha = a - c * w0;
    let phi = affine_power(alpha, -c, 2, big)?;
    let h = affine_power(alpha, -c, 1 - n as i32, big)?;
    let q = ode.series(z0, big)?;
    let q_of_w: Vec<Taylor> = q.iter().map(|t| t.compose(&zs)).collect();

    // operator as Taylor coefficients of ∂_w^m, starting from multiplication by h
    let mut cur: Vec<Taylor> = vec![h];
    let mut total: Vec<Taylor> = vec![Taylor::zero(big); n + 1];
    for k in 0..=n {
        let j = n - k;
        let weight = match j {
            0 => Some(Taylor::constant(ONE, big)),
            1 => None,
            _ => Some(q_of_w[j - 2].clone()),
        };
        if let Some(wt) = weight {
            for (m, cm) in cur.iter().enumerate() {
                total[m] = total[m].add(&wt.mul(cm));
            }
        }
        if k == n {
            break;
        }
        // cur ← ∂_z ∘ cur with ∂_z = φ ∂_w
        let mut next = Vec::with_capacity(cur.len() + 1);
        for m in 0..=cur.len() {
            let mut t = if m < cur.len() { cur[m].deriv() } else { Taylor::zero(big) };
            if m >= 1 {
                t = t.add(&cur[m - 1]);
            }
            next.push(phi.mul(&t));
        }
        cur = next;
    }
    let norm = affine_power(alpha, -c, -(n as i32 + 1), big)?;
    let total: Vec<Taylor> = total.iter().map(|t| norm.mul(t).truncate(order)).collect();
    let lead = total[n].value();
    let sub = total[n - 1].value();
    if (lead - ONE).norm() > 1e-8 || sub.norm() > 1e-8 * (1.0 + total[n - 2].value().norm()) {
        return Err(Error::InvalidArgument(format!(
            "transformed operator lost its normal form (leading {lead}, subleading {sub})"
        )));
    }
    Ok((2..=n).map(|j| total[n - j].clone()).collect())
}

/// Max over samples and `k = 2, 3, 4` of `|w̃_k(γz) γ'(z)^k − w_k(z)|`.
pub fn wk_transformation_check(ode: &OperODE, change: &Moebius, samples: &[C64]) -> Result<f64> {
    wk_transformation_check_with(ode, change, samples, &WkConstants::for_order(ode.n))
}

/// As [`wk_transformation_check`] with explicit constants, so that a wrong
/// constant can be shown to break covariance.
pub fn wk_transformation_check_with(ode: &OperODE, change: &Moebius, samples: &[C64], k: &WkConstants) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &z in samples {
        let t = transform_coefficients(ode, change, z, 2)?;
        let w_new = wk_from_series_with(ode.n, &t, k)?;
        let w_old = wk_from_series_with(ode.n, &ode.series(z, 2)?, k)?;
        let dw = change.derivative(z);
        for (j, (a, b)) in w_new.as_vec().into_iter().zip(w_old.as_vec()).enumerate() {
            if let (Some(a), Some(b)) = (a, b) {
                worst = worst.max((a * dw.powu(j as u32 + 2) - b).norm());
            }
        }
    }
    Ok(worst)
}

/// Componentwise `w_k(D1) − w_k(D2)` at each sample.
pub fn oper_difference(d1: &OperODE, d2: &OperODE, samples: &[C64]) -> Result<Vec<Covariants>> {
    if d1.n != d2.n {
        return Err(Error::InvalidArgument(format!("orders differ: {} vs {}", d1.n, d2.n)));
    }
    samples
        .iter()
        .map(|&z| {
            let a = wk_covariants(d1, z)?;
            let b = wk_covariants(d2, z)?;
            let diff = |x: Option<C64>, y: Option<C64>| x.zip(y).map(|(x, y)| x - y);
            Ok(Covariants { w2: a.w2 - b.w2, w3: diff(a.w3, b.w3), w4: diff(a.w4, b.w4) })
        })
        .collect()
}

/// Max over generators and coefficients of `|Q̃_j(γz0) − Q_j(γz0)|`: zero
/// when the operator is invariant under the group.
pub fn invariance_defect(ode: &OperODE, g: &FuchsianGroup, z0: C64) -> Result<f64> {
    if ode.is_trivial() {
        return Ok(0.0);
    }
    let mut worst = 0.0_f64;
    for m in &g.generators {
        let w0 = m.apply_unchecked(z0);
        let t = transform_coefficients(ode, m, z0, 0)?;
        for (tj, qj) in t.iter().zip(ode.values(w0)?) {
            worst = worst.max((tj.value() - qj).norm());
        }
    }
    Ok(worst)
}

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Hyperbolic length bound for path subdivision.
    pub path_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, max_steps: 200_000, path_step: 1.0 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol * 1e-2, ..Default::default() }
    }
}

/// Counters from one continuation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegrationStats {
    pub legs: usize,
    pub steps: usize,
    pub rejected: usize,
    /// Max over legs of the relative change of the Wronskian.
    pub wronskian_drift: f64,
}

impl IntegrationStats {
    fn merge(&mut self, o: &IntegrationStats) {
        self.legs += o.legs;
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.wronskian_drift = self.wronskian_drift.max(o.wronskian_drift);
    }
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_BS: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Inhomogeneous term `ω` added to the last row of one state column.
struct Forcing<'a> {
    omega: &'a dyn JetProvider,
    column: usize,
}

/// `dY/dt = (zb − za) · (C(z) Y + forcing)` at `z = za + t (zb − za)`.
fn rhs(ode: &OperODE, forcing: Option<&Forcing>, z: C64, dz: C64, y: &CMat) -> Result<CMat> {
    let n = ode.n;
    let q = ode.values(z)?;
    let mut out = CMat::zeros(n, y.ncols());
    for col in 0..y.ncols() {
        for j in 0..n - 1 {
            out[(j, col)] = y[(j + 1, col)];
        }
        // y^(n) = −Σ_{k ≤ n−2} Q_{n−k} y^(k)
        let mut s = ZERO;
        for k in 0..n - 1 {
            s -= q[n - k - 2] * y[(k, col)];
        }
        out[(n - 1, col)] = s;
    }
    if let Some(f) = forcing {
        out[(n - 1, f.column)] += f.omega.value(z)?;
    }
    Ok(out * dz)
}

fn square_block(y: &CMat) -> CMat {
    let n = y.nrows();
    y.columns(0, n.min(y.ncols())).into_owned()
}

fn integrate_leg(
    ode: &OperODE,
    forcing: Option<&Forcing>,
    za: C64,
    zb: C64,
    y0: &CMat,
    opts: &OdeOptions,
) -> Result<(CMat, IntegrationStats)> {
    let dz = zb - za;
    let mut stats = IntegrationStats { legs: 1, ..Default::default() };
    if dz.norm() == 0.0 {
        return Ok((y0.clone(), stats));
    }
    let n = ode.n;
    let track_wronskian = y0.ncols() >= n;
    let w0 = if track_wronskian { linalg::det(&square_block(y0)) } else { ONE };
    let mut y = y0.clone();
    let mut t = 0.0_f64;
    let mut h = 0.05_f64;
    let mut k1 = rhs(ode, forcing, za, dz, &y)?;
    while t < 1.0 {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepBudget(opts.max_steps));
        }
        if h < 1e-14 {
            return Err(Error::StepUnderflow { from: za, to: zb, t });
        }
        let h_eff = h.min(1.0 - t);
        let mut ks: Vec<CMat> = Vec::with_capacity(7);
        ks.push(k1.clone());
        let mut y5 = y.clone();
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    ys += kj * re(h_eff * a);
                }
            }
            if s == 6 {
                y5 = ys.clone();
            }
            ks.push(rhs(ode, forcing, za + dz * (t + DP_C[s] * h_eff), dz, &ys)?);
        }
        let mut err = 0.0_f64;
        for idx in 0..y.len() {
            let mut e = ZERO;
            for s in 0..7 {
                e += ks[s][idx] * (DP_B[s] - DP_BS[s]);
            }
            let e = (e * h_eff).norm();
            let sc = opts.atol + opts.rtol * y[idx].norm().max(y5[idx].norm());
            err = err.max(e / sc);
        }
        if err <= 1.0 {
            t += h_eff;
            y = y5;
            k1 = ks.pop().expect("seven stages");
            stats.steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = h_eff * fac;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h = h_eff * fac;
        }
    }
    if track_wronskian {
        let w1 = linalg::det(&square_block(&y));
        stats.wronskian_drift = (w1 - w0).norm() / w0.norm().max(1e-300);
    }
    Ok((y, stats))
}

fn integrate_path(
    ode: &OperODE,
    forcing: Option<&Forcing>,
    path: &HPath,
    y0: &CMat,
    opts: &OdeOptions,
) -> Result<(CMat, IntegrationStats)> {
    if y0.nrows() != ode.n {
        return Err(Error::InvalidArgument(format!("state has {} rows, order is {}", y0.nrows(), ode.n)));
    }
    let mut y = y0.clone();
    let mut stats = IntegrationStats::default();
    for (za, zb) in path.legs() {
        let (next, s) = integrate_leg(ode, forcing, za, zb, &y, opts)?;
        stats.merge(&s);
        y = next;
    }
    Ok((y, stats))
}

/// Continues a fundamental matrix along `path`.
pub fn integrate_ode(
    ode: &OperODE,
    path: &HPath,
    initial: &CMat,
    opts: &OdeOptions,
) -> Result<(CMat, IntegrationStats)> {
    if initial.nrows() == initial.ncols() && linalg::det(initial).norm() <= 1e-10 {
        return Err(Error::SingularMatrix(linalg::det(initial).norm()));
    }
    integrate_path(ode, None, path, initial, opts)
}

/// Jets at `z0` of `z ↦ y(γz)(cz + d)^{n−1}` given the jets of `y` at `γz0`.
pub fn pull_back_jets(gamma: &Moebius, z0: C64, jets_at_image: &[C64]) -> Result<Vec<C64>> {
    let n = jets_at_image.len();
    let order = n - 1;
    let y = Taylor::from_derivatives(jets_at_image);
    let inner = gamma.taylor(z0, order)?;
    let w = gamma.denom_power_taylor(z0, order as i32, order)?;
    Ok(y.compose(&inner).mul(&w).to_derivatives())
}

fn pull_back_columns(gamma: &Moebius, z0: C64, y: &CMat) -> Result<CMat> {
    let mut out = CMat::zeros(y.nrows(), y.ncols());
    for col in 0..y.ncols() {
        let jets: Vec<C64> = y.column(col).iter().copied().collect();
        for (j, v) in pull_back_jets(gamma, z0, &jets)?.into_iter().enumerate() {
            out[(j, col)] = v;
        }
    }
    Ok(out)
}

/// Monodromy image of one word, in the solution basis normalized at `z0`:
/// `ρ(γ)` with `ρ(γδ) = ρ(γ)ρ(δ)`, acting on coordinate row vectors from the
/// right.
pub fn monodromy_of_word(
    ode: &OperODE,
    g: &FuchsianGroup,
    word: &GroupWord,
    z0: C64,
    opts: &OdeOptions,
) -> Result<(CMat, IntegrationStats)> {
    let path = translate_path(g, word, z0, opts.path_step)?;
    let (y, stats) = integrate_ode(ode, &path, &linalg::identity(ode.n), opts)?;
    let m = pull_back_columns(&word.matrix, z0, &y)?;
    Ok((m.transpose(), stats))
}

/// The monodromy representation of an oper on the surface group.
#[derive(Clone, Debug)]
pub struct MonodromyRep {
    pub n: usize,
    pub z0: C64,
    pub genus: usize,
    /// One image per generator, in the solution basis at `z0`.
    pub images: Vec<CMat>,
    pub stats: Vec<IntegrationStats>,
    /// Notes such as a coefficient automorphy defect above `1e−4`.
    pub warnings: Vec<String>,
    pub opts: OdeOptions,
}

/// Threshold above which a coefficient invariance defect is reported.
pub const INVARIANCE_WARNING: f64 = 1e-4;

/// Continues the solutions around each generator.
pub fn monodromy(ode: &OperODE, g: &FuchsianGroup, z0: C64, opts: &OdeOptions) -> Result<MonodromyRep> {
    if z0.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane(z0));
    }
    let mut warnings = Vec::new();
    let defect = invariance_defect(ode, g, z0)?;
    if defect > INVARIANCE_WARNING {
        warnings.push(format!("coefficient automorphy defect {defect:.3e} at z0 exceeds {INVARIANCE_WARNING:e}"));
    }
    let words = g.generator_words();
    let results = par::map(&words, |w| monodromy_of_word(ode, g, w, z0, opts));
    let mut images = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (m, s) = r?;
        images.push(m);
        stats.push(s);
    }
    Ok(MonodromyRep { n: ode.n, z0, genus: g.genus, images, stats, warnings, opts: *opts })
}

/// Columns: jets at `z0` of the monomials `z^{n−1}, ..., z, 1`.
pub fn monomial_jets(n: usize, z0: C64) -> CMat {
    let mut c = CMat::zeros(n, n);
    for i in 0..n {
        let p = (n - 1 - i) as i32;
        let t = Taylor::binomial_power(z0, p, n - 1).expect("nonnegative power");
        for (j, v) in t.to_derivatives().into_iter().enumerate() {
            c[(j, i)] = v;
        }
    }
    c
}

impl MonodromyRep {
    pub fn word_image(&self, letters: &[i8]) -> CMat {
        letters.iter().fold(linalg::identity(self.n), |acc, &l| {
            let m = &self.images[l.unsigned_abs() as usize - 1];
            let m = if l > 0 { m.clone() } else { linalg::inverse(m).expect("monodromy images are invertible") };
            acc * m
        })
    }

    /// Images in the monomial basis `z^{n−1}, ..., 1`, where the trivial
    /// oper has exactly the principal embedding of the group.
    pub fn monomial_basis(&self) -> Result<Vec<CMat>> {
        let c = monomial_jets(self.n, self.z0);
        let ct = c.transpose();
        let cti = linalg::inverse(&ct)?;
        Ok(self.images.iter().map(|m| &ct * m * &cti).collect())
    }

    /// `min_s ‖Π[A_i, B_i] − sI‖` over `s = ±1`, max-entry norm.
    pub fn relation_residual(&self) -> f64 {
        let p = self.word_image(&crate::hyp::relation_letters(self.genus));
        let id = linalg::identity(self.n);
        linalg::max_abs(&(&p - &id)).min(linalg::max_abs(&(&p + &id)))
    }

    pub fn max_det_defect(&self) -> f64 {
        self.images.iter().map(|m| (linalg::det(m) - ONE).norm()).fold(0.0, f64::max)
    }

    pub fn wronskian_drift(&self) -> f64 {
        self.stats.iter().map(|s| s.wronskian_drift).fold(0.0, f64::max)
    }

    pub fn to_representation(&self) -> crate::rep::Representation {
        crate::rep::Representation { n: self.n, genus: self.genus, images: self.images.clone() }
    }

    pub fn report(&self) -> serde_json::Value {
        let gens: Vec<serde_json::Value> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, m)| {
                json!({
                    "word": crate::hyp::letter_name(i as i8 + 1),
                    "matrix": matrix_json(m),
                })
            })
            .collect();
        json!({
            "n": self.n,
            "z0": [self.z0.re, self.z0.im],
            "tol": self.opts.rtol,
            "generators": gens,
            "relation_residual": self.relation_residual(),
            "wronskian_drift": self.wronskian_drift(),
            "det_defect": self.max_det_defect(),
            "steps": self.stats.iter().map(|s| s.steps).sum::<usize>(),
            "warnings": self.warnings,
        })
    }
}

/// Row-major `[[re, im], ...]` rows.
pub fn matrix_json(m: &CMat) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    json!(rows)
}

/// Eichler cocycle of `D y = ω` with values in the solution space.
#[derive(Clone, Debug)]
pub struct EichlerCocycle {
    /// `q = (n + 1)/2`, the weight of `ω`.
    pub q: f64,
    pub n: usize,
    pub z0: C64,
    /// `v_γ` for each generator, as row vectors in the solution basis.
    pub vectors: Vec<Vec<C64>>,
    /// Monodromy of the homogeneous equation, same basis.
    pub rho: Vec<CMat>,
    pub stats: Vec<IntegrationStats>,
}

/// `(ρ(γ), v_γ)` of one word computed by direct continuation.
pub fn eichler_of_word(
    ode: &OperODE,
    omega: &dyn JetProvider,
    g: &FuchsianGroup,
    word: &GroupWord,
    z0: C64,
    opts: &OdeOptions,
) -> Result<(CMat, Vec<C64>, IntegrationStats)> {
    let n = ode.n;
    let path = translate_path(g, word, z0, opts.path_step)?;
    let mut y0 = CMat::zeros(n, n + 1);
    for i in 0..n {
        y0[(i, i)] = ONE;
    }
    let forcing = Forcing { omega, column: n };
    let use_forcing = !omega.is_zero();
    let (y, stats) = integrate_path(ode, use_forcing.then_some(&forcing), &path, &y0, opts)?;
    let pulled = pull_back_columns(&word.matrix, z0, &y)?;
    let rho = pulled.columns(0, n).transpose();
    let v: Vec<C64> = pulled.column(n).iter().copied().collect();
    Ok((rho, v, stats))
}

/// Eichler cocycle on the generators. The cocycle rule is
/// `v_{γδ} = v_γ ρ(δ) + v_δ`.
pub fn eichler_cocycle(
    ode: &OperODE,
    omega: &dyn JetProvider,
    g: &FuchsianGroup,
    z0: C64,
    opts: &OdeOptions,
) -> Result<EichlerCocycle> {
    if z0.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane(z0));
    }
    let words = g.generator_words();
    let results = par::map(&words, |w| eichler_of_word(ode, omega, g, w, z0, opts));
    let mut vectors = Vec::new();
    let mut rho = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (m, v, s) = r?;
        rho.push(m);
        vectors.push(v);
        stats.push(s);
    }
    Ok(EichlerCocycle { q: (ode.n as f64 + 1.0) / 2.0, n: ode.n, z0, vectors, rho, stats })
}

fn row_times(v: &[C64], m: &CMat) -> Vec<C64> {
    (0..m.ncols()).map(|j| v.iter().enumerate().map(|(i, x)| x * m[(i, j)]).sum()).collect()
}

impl EichlerCocycle {
    /// `(ρ(w), v_w)` for a word, by the cocycle rule from the generators.
    pub fn extend(&self, letters: &[i8]) -> Result<(CMat, Vec<C64>)> {
        let mut rho = linalg::identity(self.n);
        let mut v = vec![ZERO; self.n];
        for &l in letters {
            let idx = l.unsigned_abs() as usize - 1;
            let (r, w) = if l > 0 {
                (self.rho[idx].clone(), self.vectors[idx].clone())
            } else {
                // v_{γ⁻¹} = −v_γ ρ(γ)⁻¹
                let ri = linalg::inverse(&self.rho[idx])?;
                let w = row_times(&self.vectors[idx], &ri).into_iter().map(|x| -x).collect();
                (ri, w)
            };
            // v_{uγ} = v_u ρ(γ) + v_γ
            v = row_times(&v, &r).into_iter().zip(w).map(|(a, b)| a + b).collect();
            rho *= r;
        }
        Ok((rho, v))
    }

    pub fn relation_vector(&self, genus: usize) -> Result<Vec<C64>> {
        Ok(self.extend(&crate::hyp::relation_letters(genus))?.1)
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|v| v.iter().all(|x| *x == ZERO))
    }
}

/// `y1/y2` for two solutions of `y'' + Q y = 0` continued from `z0` to `z`,
/// returned as a cubic Taylor series at `z`.
pub fn ratio_of_solutions(q: &Jets, z0: C64, z: C64, initial: &CMat, opts: &OdeOptions) -> Result<Taylor> {
    let ode = OperODE::new(2, vec![q.clone()])?;
    let path = HPath { vertices: vec![z0, z] };
    let (y, _) = integrate_ode(&ode, &path, initial, opts)?;
    let qs = q.jets(z, 1)?;
    let series = |col: usize| {
        let (y0, y1) = (y[(0, col)], y[(1, col)]);
        // y'' = −Q y, y''' = −Q' y − Q y'
        Taylor::from_derivatives(&[y0, y1, -qs[0] * y0, -qs[1] * y0 - qs[0] * y1])
    };
    series(0).div(&series(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyp::octagon_group;
    use crate::jets::{jet_of_rational, Composed, Constant, Exponential, Rational};
    use crate::rep::principal_embedding;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_q() -> Jets {
        Arc::new(jet_of_rational(&[c(0.3, 0.1), c(-0.2, 0.05), c(0.1, 0.0)], &[(c(0.2, -1.5), 4)]))
    }

    fn grid() -> Vec<C64> {
        (0..20).map(|k| c(-0.5 + 0.05 * k as f64, 0.6 + 0.04 * k as f64)).collect()
    }

    #[test]
    fn schwarzian_examples() {
        let m: Jets = Arc::new(jet_of_rational(&[c(1.0, 0.0), c(2.0, 0.0)], &[(c(0.0, -3.0), 1)]));
        assert!(schwarzian(&*m, c(0.3, 1.0)).unwrap().norm() < 1e-12);
        let sq = jet_of_rational(&[ZERO, ZERO, ONE], &[]);
        assert!((schwarzian(&sq, ONE).unwrap() - c(-1.5, 0.0)).norm() < 1e-14);
        assert!(matches!(schwarzian(&sq, ZERO), Err(Error::CriticalPoint { .. })));
    }

    #[test]
    fn schwarzian_cocycle() {
        let f: Jets = Arc::new(Exponential { scale: c(1.0, 0.2), rate: c(0.7, -0.3) });
        let g: Jets = Arc::new(jet_of_rational(&[c(0.1, 0.0), ONE, c(0.2, 0.1)], &[(c(0.0, -2.0), 1)]));
        let fg = Composed { outer: f.clone(), inner: g.clone() };
        let z = c(0.2, 0.8);
        let gz = g.taylor(z, 1).unwrap();
        let lhs = schwarzian(&fg, z).unwrap();
        let rhs = schwarzian(&*f, gz.value()).unwrap() * gz.coeffs[1] * gz.coeffs[1] + schwarzian(&*g, z).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn principal_coefficients() {
        let q = sample_q();
        let z = c(0.1, 1.0);
        let qv = q.jets(z, 4).unwrap();
        let d2 = ode_from_projective(2, q.clone()).unwrap();
        assert_eq!(d2.coeffs[0].value(z).unwrap(), qv[0]);
        let d4 = ode_from_projective(4, q.clone()).unwrap();
        assert!((d4.coeffs[0].value(z).unwrap() - qv[0] * 10.0).norm() < 1e-14);
        let d6 = ode_from_projective(6, Arc::new(Zero)).unwrap();
        assert!(d6.coeffs.iter().all(|q| q.value(z).unwrap() == ZERO));
        assert!(ode_from_projective(7, q).is_err());
    }

    #[test]
    fn w_vanish_on_principal_families() {
        let q = sample_q();
        for n in 3..=6 {
            let d = ode_from_projective(n, q.clone()).unwrap();
            for z in grid() {
                let w = wk_covariants(&d, z).unwrap();
                assert_eq!(w.w2, d.coeffs[0].value(z).unwrap());
                assert!(w.w3.unwrap().norm() < 1e-10, "n={n} w3={}", w.w3.unwrap());
                if n >= 4 {
                    assert!(w.w4.unwrap().norm() < 1e-10, "n={n} w4={}", w.w4.unwrap());
                }
            }
        }
    }

    #[test]
    fn w_transform_as_differentials() {
        let q = sample_q();
        let g = octagon_group();
        let d = ode_from_projective(4, q.clone()).unwrap();
        assert_eq!(wk_transformation_check(&d, &Moebius::IDENTITY, &grid()).unwrap(), 0.0);
        let konst = OperODE::new(
            4,
            vec![Arc::new(Constant(c(0.4, 0.0))), Arc::new(Constant(c(0.1, 0.2))), Arc::new(Constant(c(-0.3, 0.0)))],
        )
        .unwrap();
        let shift = Moebius::new(1.0, 1.0, 0.0, 1.0);
        assert!(wk_transformation_check(&konst, &shift, &grid()).unwrap() < 1e-10);
        // a non-principal operator with all w_k nonzero
        let generic = OperODE::new(
            5,
            vec![
                q.clone(),
                Arc::new(Rational::power(c(0.0, -2.0), -3)),
                Arc::new(Exponential { scale: c(0.2, 0.0), rate: c(0.3, 0.1) }),
                q,
            ],
        )
        .unwrap();
        for m in &g.generators {
            let defect = wk_transformation_check(&generic, m, &grid()[..5]).unwrap();
            assert!(defect < 1e-7, "defect {defect}");
            assert!(wk_transformation_check(&d, m, &grid()[..5]).unwrap() < 1e-7);
        }
    }

    #[test]
    fn wrong_w4_constant_is_detected() {
        let q = sample_q();
        let generic = OperODE::new(4, vec![q.clone(), Arc::new(Rational::power(c(0.0, -2.0), -3)), q]).unwrap();
        let change = octagon_group().generators[0];
        let pts = &grid()[..4];
        let good = WkConstants::for_order(4);
        assert!(wk_transformation_check_with(&generic, &change, pts, &good).unwrap() < 1e-7);
        let bad = WkConstants { c: good.c * 1.01, ..good };
        assert!(wk_transformation_check_with(&generic, &change, pts, &bad).unwrap() > 1e-6);
    }

    #[test]
    fn oper_difference_tracks_q3() {
        let q = sample_q();
        let theta: Jets = Arc::new(Rational::power(c(0.3, -1.2), -6));
        let d2 = ode_from_projective(4, q.clone()).unwrap();
        let mut d1 = d2.clone();
        d1.coeffs[1] = Arc::new(crate::jets::Sum(vec![d2.coeffs[1].clone(), theta.clone()]));
        let diff = oper_difference(&d1, &d2, &grid()).unwrap();
        for (dz, z) in diff.iter().zip(grid()) {
            assert_eq!(dz.w2, ZERO);
            assert!((dz.w3.unwrap() - theta.value(z).unwrap()).norm() < 1e-8);
        }
        let same = oper_difference(&d2, &d2, &grid()).unwrap();
        assert!(same.iter().all(|d| d.w2 == ZERO && d.w3 == Some(ZERO) && d.w4 == Some(ZERO)));
    }

    #[test]
    fn free_particle_transfer_matrix() {
        let ode = OperODE::trivial(2);
        let (z0, z1) = (c(0.0, 1.0), c(0.7, 1.4));
        let path = HPath { vertices: vec![z0, z1] };
        let (y, st) = integrate_ode(&ode, &path, &linalg::identity(2), &OdeOptions::default()).unwrap();
        assert!((y[(0, 0)] - ONE).norm() < 1e-13);
        assert!((y[(0, 1)] - (z1 - z0)).norm() < 1e-13);
        assert!((y[(1, 1)] - ONE).norm() < 1e-13);
        assert!(y[(1, 0)].norm() < 1e-13);
        assert!(st.wronskian_drift < 1e-12);
        let still = HPath { vertices: vec![z0] };
        assert_eq!(
            integrate_ode(&ode, &still, &linalg::identity(2), &OdeOptions::default()).unwrap().0,
            linalg::identity(2)
        );
    }

    #[test]
    fn wronskian_is_conserved() {
        let ode = ode_from_projective(3, sample_q()).unwrap();
        let path = HPath { vertices: vec![c(0.0, 1.0), c(1.0, 1.5), c(-0.5, 0.8)] };
        let init = linalg::from_rows(&[
            &[c(1.0, 0.0), c(0.5, 0.0), ZERO],
            &[ZERO, c(2.0, 0.0), ZERO],
            &[ZERO, c(0.1, 0.3), c(0.7, 0.0)],
        ]);
        let (y, st) = integrate_ode(&ode, &path, &init, &OdeOptions::default()).unwrap();
        assert!((linalg::det(&y).norm() - linalg::det(&init).norm()).abs() < 1e-8);
        assert!(st.wronskian_drift < 1e-8);
    }

    #[test]
    fn pole_on_path_is_reported() {
        let q: Jets = Arc::new(Rational::power(c(0.5, 1.0), -2));
        let ode = OperODE::new(2, vec![q]).unwrap();
        let path = HPath { vertices: vec![c(0.0, 1.0), c(1.0, 1.0)] };
        let err = integrate_ode(&ode, &path, &linalg::identity(2), &OdeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NearPole { .. } | Error::StepUnderflow { .. } | Error::StepBudget(_)), "{err}");
    }

    #[test]
    fn trivial_oper_monodromy_is_principal_embedding() {
        let g = octagon_group();
        for n in 2..=4 {
            let rep = monodromy(&OperODE::trivial(n), &g, c(0.0, 1.0), &OdeOptions::default()).unwrap();
            let mono = rep.monomial_basis().unwrap();
            for (m, gen) in mono.iter().zip(&g.generators) {
                let e = principal_embedding(n, &gen.to_cmat()).unwrap();
                let err = linalg::max_abs(&(m - &e)).min(linalg::max_abs(&(m + &e)));
                assert!(err < 1e-6, "n={n} err={err}");
            }
            assert!(rep.max_det_defect() < 1e-8);
            assert!(rep.relation_residual() < 1e-5);
            assert!(rep.warnings.is_empty());
        }
    }

    #[test]
    fn monodromy_is_a_homomorphism() {
        let g = octagon_group();
        let ode = OperODE::trivial(3);
        let z0 = c(0.0, 1.0);
        let opts = OdeOptions::default();
        let (a, _) = monodromy_of_word(&ode, &g, &g.word(&[1]), z0, &opts).unwrap();
        let (b, _) = monodromy_of_word(&ode, &g, &g.word(&[2]), z0, &opts).unwrap();
        let (ab, _) = monodromy_of_word(&ode, &g, &g.word(&[1, 2]), z0, &opts).unwrap();
        assert!(linalg::max_abs(&(ab - a * b)) < 1e-7);
    }

    #[test]
    fn zero_form_gives_zero_cocycle() {
        let g = octagon_group();
        let co = eichler_cocycle(&OperODE::trivial(3), &Zero, &g, c(0.0, 1.0), &OdeOptions::default()).unwrap();
        assert!(co.is_zero());
    }

    #[test]
    fn eichler_cocycle_rule_on_pairs() {
        let g = octagon_group();
        let ode = OperODE::trivial(5);
        let omega = crate::forms::poincare_series(&g, 3, crate::forms::default_seed(3), 5).unwrap();
        let z0 = c(0.0, 1.0);
        let opts = OdeOptions::default();
        let co = eichler_cocycle(&ode, &omega, &g, z0, &opts).unwrap();
        let (_, vab, _) = eichler_of_word(&ode, &omega, &g, &g.word(&[1, 2]), z0, &opts).unwrap();
        let (_, pred) = co.extend(&[1, 2]).unwrap();
        let scale = pred.iter().map(|x| x.norm()).fold(1.0, f64::max);
        for (p, d) in pred.iter().zip(&vab) {
            assert!((p - d).norm() < 1e-6 * scale, "{p} vs {d}");
        }
    }

    #[test]
    fn ratio_of_solutions_has_schwarzian_2q() {
        let q = sample_q();
        let z0 = c(0.0, 1.0);
        let init = linalg::identity(2);
        for z in [c(0.3, 1.2), c(-0.4, 0.9)] {
            let f = ratio_of_solutions(&q, z0, z, &init, &OdeOptions::default()).unwrap();
            let s = schwarzian_of_series(&f, z).unwrap();
            assert!((s - q.value(z).unwrap() * 2.0).norm() < 1e-7);
        }
    }

    #[test]
    fn report_shape() {
        let g = octagon_group();
        let rep = monodromy(&OperODE::trivial(2), &g, c(0.0, 1.0), &OdeOptions::default()).unwrap();
        let v = rep.report();
        assert_eq!(v["n"], 2);
        assert_eq!(v["generators"].as_array().unwrap().len(), 4);
        assert_eq!(v["generators"][1]["word"], "b1");
    }
}
