//! Truncated Taylor series and point-evaluable derivative stacks.
//!
//! A [`Taylor`] stores normalized coefficients `f^(k)(z0)/k!`; a
//! [`JetProvider`] returns plain derivatives `f(z), f'(z), ..., f^(m)(z)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Truncated power series `Σ_{k≤order} a_k h^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Taylor {
    pub coeffs: Vec<C64>,
}

impl Taylor {
    pub fn zero(order: usize) -> Self {
        Taylor { coeffs: vec![ZERO; order + 1] }
    }

    pub fn constant(value: C64, order: usize) -> Self {
        let mut t = Self::zero(order);
        t.coeffs[0] = value;
        t
    }

    /// The local variable `z0 + h` around `z0`.
    pub fn variable(z0: C64, order: usize) -> Self {
        let mut t = Self::constant(z0, order);
        if order >= 1 {
            t.coeffs[1] = ONE;
        }
        t
    }

    pub fn from_derivatives(derivs: &[C64]) -> Self {
        let mut fact = 1.0;
        let coeffs = derivs
            .iter()
            .enumerate()
            .map(|(k, d)| {
                if k > 0 {
                    fact *= k as f64;
                }
                d / fact
            })
            .collect();
        Taylor { coeffs }
    }

    pub fn to_derivatives(&self) -> Vec<C64> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k > 0 {
                    fact *= k as f64;
                }
                a * fact
            })
            .collect()
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(order + 1, ZERO);
        Taylor { coeffs: c }
    }

    pub fn scale(&self, s: C64) -> Self {
        Taylor { coeffs: self.coeffs.iter().map(|a| a * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        Taylor { coeffs: (0..=n).map(|k| self.coeffs[k] + other.coeffs[k]).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        Taylor { coeffs: (0..=n).map(|k| self.coeffs[k] - other.coeffs[k]).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        let mut out = vec![ZERO; n + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(n + 1) {
            if *a == ZERO {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate().take(n + 1 - i) {
                out[i + j] += a * b;
            }
        }
        Taylor { coeffs: out }
    }

    /// Series derivative; the order drops by one.
    pub fn deriv(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Taylor { coeffs: vec![ZERO] };
        }
        Taylor { coeffs: (1..self.coeffs.len()).map(|k| self.coeffs[k] * k as f64).collect() }
    }

    /// `k`-fold derivative.
    pub fn deriv_n(&self, k: usize) -> Self {
        let mut t = self.clone();
        for _ in 0..k {
            t = t.deriv();
        }
        t
    }

    pub fn recip(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0.norm() < 1e-300 {
            return Err(Error::InvalidArgument("reciprocal of a series with zero constant term".into()));
        }
        let n = self.order();
        let mut out = vec![ZERO; n + 1];
        out[0] = ONE / a0;
        for k in 1..=n {
            let mut s = ZERO;
            for j in 1..=k {
                s += self.coeffs[j] * out[k - j];
            }
            out[k] = -s / a0;
        }
        Ok(Taylor { coeffs: out })
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn powi(&self, p: i32) -> Result<Self> {
        let base = if p < 0 { self.recip()? } else { self.clone() };
        let mut e = p.unsigned_abs();
        let mut acc = Taylor::constant(ONE, base.order());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul(&sq);
            }
        }
        Ok(acc)
    }

    /// Series of `(a + h)^p` for a complex base `a` and integer `p`, exact
    /// binomial coefficients.
    pub fn binomial_power(a: C64, p: i32, order: usize) -> Result<Self> {
        if a.norm() < 1e-300 && p < 0 {
            return Err(Error::InvalidArgument("negative power of zero".into()));
        }
        let mut out = vec![ZERO; order + 1];
        let mut coef = ONE; // binom(p, k) a^(p-k)
        let a_pow = if p >= 0 { a.powi(p) } else { ONE / a.powi(-p) };
        coef *= a_pow;
        out[0] = coef;
        for k in 1..=order {
            coef = coef * (p as f64 - (k as f64 - 1.0)) / (k as f64);
            if a.norm() == 0.0 {
                // only the polynomial case reaches here
                out[k] = if k as i32 == p { ONE } else { ZERO };
            } else {
                coef /= a;
                out[k] = coef;
            }
        }
        Ok(Taylor { coeffs: out })
    }

    /// Composition `self(inner(h) - inner.value())`, i.e. `self` is expanded
    /// around the point `inner.value()`.
    pub fn compose(&self, inner: &Taylor) -> Self {
        let n = self.order().min(inner.order());
        let mut shifted = inner.truncate(n);
        shifted.coeffs[0] = ZERO;
        // Horner in the shifted inner series.
        let mut acc = Taylor::constant(self.coeffs[n], n);
        for k in (0..n).rev() {
            acc = acc.mul(&shifted);
            acc.coeffs[0] += self.coeffs[k];
        }
        acc
    }
}

impl fmt::Display for Taylor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Taylor{:?}", self.coeffs)
    }
}

/// A holomorphic function presented through its derivatives at points.
pub trait JetProvider: Send + Sync {
    /// `f(z), f'(z), ..., f^(order)(z)`.
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>>;

    /// Largest supported derivative order.
    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn value(&self, z: C64) -> Result<C64> {
        Ok(self.jets(z, 0)?[0])
    }

    fn taylor(&self, z: C64, order: usize) -> Result<Taylor> {
        if order > self.max_order() {
            return Err(Error::JetOrder { requested: order, available: self.max_order() });
        }
        Ok(Taylor::from_derivatives(&self.jets(z, order)?))
    }

    /// True when the provider is known to vanish identically.
    fn is_zero(&self) -> bool {
        false
    }
}

pub type Jets = Arc<dyn JetProvider>;

/// The zero function.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl JetProvider for Zero {
    fn jets(&self, _z: C64, order: usize) -> Result<Vec<C64>> {
        Ok(vec![ZERO; order + 1])
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Constant(pub C64);

impl JetProvider for Constant {
    fn jets(&self, _z: C64, order: usize) -> Result<Vec<C64>> {
        let mut v = vec![ZERO; order + 1];
        v[0] = self.0;
        Ok(v)
    }

    fn is_zero(&self) -> bool {
        self.0 == ZERO
    }
}

/// `P(z) · Π (z − p_j)^{e_j}` with a polynomial `P` (ascending coefficients)
/// and integer exponents, differentiated exactly.
#[derive(Clone, Debug)]
pub struct Rational {
    pub numerator: Vec<C64>,
    pub factors: Vec<(C64, i32)>,
}

/// Distance to a pole below which evaluation is refused.
pub const POLE_GUARD: f64 = 1e-8;

/// Builds a rational jet provider from polynomial coefficients (ascending)
/// and poles given as `(location, multiplicity)`.
pub fn jet_of_rational(coeffs: &[C64], poles: &[(C64, u32)]) -> Rational {
    Rational { numerator: coeffs.to_vec(), factors: poles.iter().map(|&(p, m)| (p, -(m as i32))).collect() }
}

impl Rational {
    /// `(z − center)^power`.
    pub fn power(center: C64, power: i32) -> Self {
        Rational { numerator: vec![ONE], factors: vec![(center, power)] }
    }

    pub fn taylor_at(&self, z: C64, order: usize) -> Result<Taylor> {
        // numerator expanded around z by Horner on the variable series
        let var = Taylor::variable(z, order);
        let mut num = Taylor::zero(order);
        for a in self.numerator.iter().rev() {
            num = num.mul(&var);
            num.coeffs[0] += a;
        }
        let mut acc = num;
        for &(p, e) in &self.factors {
            let d = z - p;
            if e < 0 && d.norm() < POLE_GUARD {
                return Err(Error::NearPole { z, dist: d.norm() });
            }
            acc = acc.mul(&Taylor::binomial_power(d, e, order)?);
        }
        Ok(acc)
    }
}

impl JetProvider for Rational {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        if order == 0 {
            return Ok(vec![self.value(z)?]);
        }
        Ok(self.taylor_at(z, order)?.to_derivatives())
    }

    fn value(&self, z: C64) -> Result<C64> {
        let mut acc = self.numerator.iter().rev().fold(ZERO, |acc, a| acc * z + a);
        for &(p, e) in &self.factors {
            let d = z - p;
            if e < 0 && d.norm() < POLE_GUARD {
                return Err(Error::NearPole { z, dist: d.norm() });
            }
            acc *= if e >= 0 { d.powi(e) } else { ONE / d.powi(-e) };
        }
        Ok(acc)
    }

    fn is_zero(&self) -> bool {
        self.numerator.iter().all(|a| *a == ZERO)
    }
}

/// `scale · exp(rate · z)`.
#[derive(Clone, Copy, Debug)]
pub struct Exponential {
    pub scale: C64,
    pub rate: C64,
}

impl JetProvider for Exponential {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let base = self.scale * (self.rate * z).exp();
        let mut out = Vec::with_capacity(order + 1);
        let mut r = ONE;
        for _ in 0..=order {
            out.push(base * r);
            r *= self.rate;
        }
        Ok(out)
    }
}

/// `outer ∘ inner`.
#[derive(Clone)]
pub struct Composed {
    pub outer: Jets,
    pub inner: Jets,
}

impl JetProvider for Composed {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let inner = self.inner.taylor(z, order)?;
        let outer = self.outer.taylor(inner.value(), order)?;
        Ok(outer.compose(&inner).to_derivatives())
    }

    fn max_order(&self) -> usize {
        self.outer.max_order().min(self.inner.max_order())
    }
}

/// A provider computed from the Taylor series of other providers by a series
/// expression that may consume up to `extra_order` derivatives.
#[derive(Clone)]
pub struct Derived {
    pub sources: Vec<Jets>,
    pub extra_order: usize,
    pub expr: fn(&[Taylor]) -> Result<Taylor>,
    pub zero_if_sources_zero: bool,
}

impl JetProvider for Derived {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let need = order + self.extra_order;
        let series = self.sources.iter().map(|s| s.taylor(z, need)).collect::<Result<Vec<_>>>()?;
        let t = (self.expr)(&series)?;
        if t.order() < order {
            return Err(Error::JetOrder { requested: order, available: t.order() });
        }
        Ok(t.truncate(order).to_derivatives())
    }

    fn max_order(&self) -> usize {
        self.sources.iter().map(|s| s.max_order()).min().unwrap_or(usize::MAX).saturating_sub(self.extra_order)
    }

    fn is_zero(&self) -> bool {
        self.zero_if_sources_zero && self.sources.iter().all(|s| s.is_zero())
    }
}

/// Sum of providers.
#[derive(Clone)]
pub struct Sum(pub Vec<Jets>);

impl JetProvider for Sum {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let mut acc = vec![ZERO; order + 1];
        for p in &self.0 {
            for (a, b) in acc.iter_mut().zip(p.jets(z, order)?) {
                *a += b;
            }
        }
        Ok(acc)
    }

    fn max_order(&self) -> usize {
        self.0.iter().map(|p| p.max_order()).min().unwrap_or(usize::MAX)
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|p| p.is_zero())
    }
}

/// `s · f`.
#[derive(Clone)]
pub struct Scaled(pub C64, pub Jets);

impl JetProvider for Scaled {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        Ok(self.1.jets(z, order)?.into_iter().map(|v| v * self.0).collect())
    }

    fn max_order(&self) -> usize {
        self.1.max_order()
    }

    fn is_zero(&self) -> bool {
        self.0 == ZERO || self.1.is_zero()
    }
}

/// Memoizes evaluations by exact `(z, order)` bit pattern.
pub struct Cached<P> {
    inner: P,
    cache: Mutex<HashMap<(u64, u64, usize), Vec<C64>>>,
}

impl<P: JetProvider> Cached<P> {
    pub fn new(inner: P) -> Self {
        Cached { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }
}

impl<P: JetProvider> JetProvider for Cached<P> {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let key = (z.re.to_bits(), z.im.to_bits(), order);
        if let Ok(cache) = self.cache.lock() {
            if let Some(v) = cache.get(&key) {
                return Ok(v.clone());
            }
        }
        let v = self.inner.jets(z, order)?;
        if let Ok(mut cache) = self.cache.lock() {
            cache.insert(key, v.clone());
        }
        Ok(v)
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// Central finite-difference derivative of the value, for consistency checks.
pub fn finite_difference(p: &dyn JetProvider, z: C64, h: f64) -> Result<C64> {
    let fp = p.value(z + h)?;
    let fm = p.value(z - h)?;
    Ok((fp - fm) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constant_has_vanishing_derivatives() {
        let r = jet_of_rational(&[ONE], &[]);
        let j = r.jets(c(0.3, 1.0), 5).unwrap();
        assert_eq!(j[0], ONE);
        assert!(j[1..].iter().all(|v| *v == ZERO));
    }

    #[test]
    fn inverse_fourth_power_at_origin() {
        let r = jet_of_rational(&[ONE], &[(c(0.0, -2.0), 4)]);
        let j = r.jets(ZERO, 1).unwrap();
        // f = (2i)^-4 = 1/16, f' = -4 (2i)^-5
        assert!((j[0] - c(1.0 / 16.0, 0.0)).norm() < 1e-15);
        let expected = -4.0 * c(0.0, 2.0).powi(-5);
        assert!((j[1] - expected).norm() < 1e-15);
    }

    #[test]
    fn near_pole_rejected() {
        let r = jet_of_rational(&[ONE], &[(c(0.0, 0.5), 1)]);
        assert!(matches!(r.jets(c(0.0, 0.5 + 1e-10), 0), Err(Error::NearPole { .. })));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let r = jet_of_rational(&[c(1.0, 0.5), c(-0.2, 0.0), c(0.3, 0.1)], &[(c(0.1, -1.0), 3), (c(-0.7, -0.4), 1)]);
        for z in [c(0.0, 1.0), c(0.4, 0.7), c(-1.3, 2.0)] {
            let j = r.jets(z, 1).unwrap();
            let fd = finite_difference(&r, z, 1e-5).unwrap();
            assert!((j[1] - fd).norm() < 1e-6 * (1.0 + j[1].norm()));
        }
    }

    #[test]
    fn composition_chain_rule() {
        let f = Rational::power(c(0.0, -1.0), -2);
        let g = Exponential { scale: c(0.5, 0.0), rate: c(0.0, 0.3) };
        let comp = Composed { outer: Arc::new(f.clone()), inner: Arc::new(g) };
        let z = c(0.2, 0.8);
        let j = comp.jets(z, 1).unwrap();
        let gj = g.jets(z, 1).unwrap();
        let fj = f.jets(gj[0], 1).unwrap();
        assert!((j[1] - fj[1] * gj[1]).norm() < 1e-13);
    }

    #[test]
    fn cached_replay_is_bit_identical() {
        let cached = Cached::new(Rational::power(c(0.0, -1.0), -4));
        let a = cached.jets(c(0.1, 1.1), 3).unwrap();
        let b = cached.jets(c(0.1, 1.1), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.cached_points(), 1);
    }

    proptest! {
        #[test]
        fn series_recip_inverts(a0 in 0.5f64..2.0, a1 in -1.0f64..1.0, a2 in -1.0f64..1.0) {
            let t = Taylor { coeffs: vec![c(a0, 0.1), c(a1, 0.0), c(0.0, a2), c(0.3, 0.0)] };
            let p = t.mul(&t.recip().unwrap());
            prop_assert!((p.coeffs[0] - ONE).norm() < 1e-12);
            for k in 1..4 {
                prop_assert!(p.coeffs[k].norm() < 1e-12);
            }
        }
    }
}
