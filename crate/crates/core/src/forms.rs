//! Holomorphic k-differentials on the surface as truncated Poincaré series.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyp::{ElementBall, FuchsianGroup, GroupWord, Moebius};
use crate::jets::{jet_of_rational, JetProvider, Jets, Rational, Taylor};
use crate::par;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Description of a rational seed `Π (z − p)^power` with a unit numerator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub poles: Vec<[f64; 2]>,
    pub power: i32,
}

impl SeedSpec {
    /// `(z − w̄0)^{−2k}` with `w0 = i`.
    pub fn default_for(k: u32) -> Self {
        SeedSpec { kind: "rational".into(), poles: vec![[0.0, -1.0]], power: -2 * k as i32 }
    }

    pub fn build(&self) -> Result<Rational> {
        if self.kind != "rational" {
            return Err(Error::InvalidArgument(format!("unknown seed type {:?}", self.kind)));
        }
        for p in &self.poles {
            if p[1] >= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "seed pole {}{:+}i must lie in the lower half-plane",
                    p[0], p[1]
                )));
            }
        }
        Ok(Rational {
            numerator: vec![C64::new(1.0, 0.0)],
            factors: self.poles.iter().map(|p| (C64::new(p[0], p[1]), self.power)).collect(),
        })
    }
}

/// Form descriptor, as read from and written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub k: u32,
    pub radius: usize,
    pub seed: SeedSpec,
}

/// The default seed `(z − w̄0)^{−2k}` with `w0 = i`.
pub fn default_seed(k: u32) -> Jets {
    Arc::new(jet_of_rational(&[C64::new(1.0, 0.0)], &[(C64::new(0.0, -1.0), 2 * k)]))
}

/// `Θ(z) = Σ_γ seed(γz) γ'(z)^k`, the sum running over the distinct group
/// elements of word length at most `radius`.
pub struct AutomorphicForm {
    pub k: u32,
    pub group: FuchsianGroup,
    pub radius: usize,
    pub seed: Jets,
    elements: Arc<Vec<Moebius>>,
    cache: Mutex<HashMap<(u64, u64, usize), Vec<C64>>>,
}

/// Builds the truncated Poincaré series of `seed` with weight `(γ')^k`.
pub fn poincare_series(g: &FuchsianGroup, k: u32, seed: Jets, radius: usize) -> Result<AutomorphicForm> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "weight exponent k = {k} is below 2; the series does not converge absolutely"
        )));
    }
    let elements = if seed.is_zero() { vec![Moebius::IDENTITY] } else { ElementBall::new(g, radius)?.elements };
    Ok(AutomorphicForm::from_elements(g, k, seed, radius, Arc::new(elements)))
}

impl AutomorphicForm {
    /// Reuses an already enumerated element list.
    pub fn from_elements(g: &FuchsianGroup, k: u32, seed: Jets, radius: usize, elements: Arc<Vec<Moebius>>) -> Self {
        AutomorphicForm { k, group: g.clone(), radius, seed, elements, cache: Mutex::new(HashMap::new()) }
    }

    pub fn terms(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &Arc<Vec<Moebius>> {
        &self.elements
    }

    /// The same series with another seed over the same elements.
    pub fn with_seed(&self, k: u32, seed: Jets) -> Result<AutomorphicForm> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("weight exponent k = {k} is below 2")));
        }
        Ok(AutomorphicForm::from_elements(&self.group, k, seed, self.radius, self.elements.clone()))
    }

    fn term(&self, m: &Moebius, z: C64, order: usize) -> Result<Taylor> {
        let inner = m.taylor(z, order)?;
        let outer = self.seed.taylor(inner.value(), order)?;
        let weight = m.denom_power_taylor(z, -2 * self.k as i32, order)?;
        Ok(outer.compose(&inner).mul(&weight))
    }

    fn evaluate(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        if z.im <= 0.0 {
            return Err(Error::NotInUpperHalfPlane(z));
        }
        if self.seed.is_zero() {
            return Ok(vec![ZERO; order + 1]);
        }
        if order == 0 {
            return Ok(vec![self.evaluate_value(z)?]);
        }
        let zero = TaylorAcc { sum: Taylor::zero(order), failed: false };
        let acc = par::sum_chunked(&self.elements, zero, |m| match self.term(m, z, order) {
            Ok(t) => TaylorAcc { sum: t, failed: false },
            Err(_) => TaylorAcc { sum: Taylor::zero(order), failed: true },
        });
        if acc.failed {
            // rerun sequentially to surface the first error
            for m in self.elements.iter() {
                self.term(m, z, order)?;
            }
        }
        Ok(acc.sum.to_derivatives())
    }

    fn evaluate_value(&self, z: C64) -> Result<C64> {
        if z.im <= 0.0 {
            return Err(Error::NotInUpperHalfPlane(z));
        }
        if self.seed.is_zero() {
            return Ok(ZERO);
        }
        let p = -2 * self.k as i32;
        let acc = par::sum_chunked(&self.elements, ValueAcc { sum: ZERO, failed: false }, |m| {
            let q = m.denom(z);
            match self.seed.value(m.apply_unchecked(z)) {
                Ok(v) => ValueAcc { sum: v * q.powi(p), failed: false },
                Err(_) => ValueAcc { sum: ZERO, failed: true },
            }
        });
        if acc.failed {
            for m in self.elements.iter() {
                self.seed.value(m.apply_unchecked(z))?;
            }
        }
        Ok(acc.sum)
    }

    pub fn to_spec(&self, seed: &SeedSpec) -> FormSpec {
        FormSpec { k: self.k, radius: self.radius, seed: seed.clone() }
    }
}

/// Accumulator used for the chunked series sum.
#[derive(Clone)]
struct TaylorAcc {
    sum: Taylor,
    failed: bool,
}

impl std::ops::AddAssign for TaylorAcc {
    fn add_assign(&mut self, rhs: TaylorAcc) {
        for (a, b) in self.sum.coeffs.iter_mut().zip(rhs.sum.coeffs) {
            *a += b;
        }
        self.failed |= rhs.failed;
    }
}

#[derive(Clone, Copy)]
struct ValueAcc {
    sum: C64,
    failed: bool,
}

impl std::ops::AddAssign for ValueAcc {
    fn add_assign(&mut self, rhs: ValueAcc) {
        self.sum += rhs.sum;
        self.failed |= rhs.failed;
    }
}

impl JetProvider for AutomorphicForm {
    fn jets(&self, z: C64, order: usize) -> Result<Vec<C64>> {
        let key = (z.re.to_bits(), z.im.to_bits(), order);
        if let Some(v) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(v);
        }
        let v = self.evaluate(z, order)?;
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, v.clone());
        }
        Ok(v)
    }

    fn value(&self, z: C64) -> Result<C64> {
        self.evaluate_value(z)
    }

    fn max_order(&self) -> usize {
        self.seed.max_order()
    }

    fn is_zero(&self) -> bool {
        self.seed.is_zero()
    }
}

/// `max |F(γz) γ'(z)^k − F(z)|` over samples.
pub fn automorphy_residual(f: &dyn JetProvider, k: u32, samples: &[(GroupWord, C64)]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (w, z) in samples {
        if z.im <= 0.0 {
            return Err(Error::NotInUpperHalfPlane(*z));
        }
        if w.is_empty() {
            continue;
        }
        let m = w.matrix;
        let lhs = f.value(m.apply_unchecked(*z))? * m.derivative(*z).powu(k);
        worst = worst.max((lhs - f.value(*z)?).norm());
    }
    Ok(worst)
}

/// Generators and their inverses applied at a few points near `i`.
pub fn default_samples(g: &FuchsianGroup) -> Vec<(GroupWord, C64)> {
    let points = [C64::new(0.0, 1.0), C64::new(0.15, 0.9), C64::new(-0.2, 1.2)];
    let mut out = Vec::new();
    for l in crate::hyp::alphabet(g.genus) {
        for z in points {
            out.push((g.word(&[l]), z));
        }
    }
    out
}

/// CSV rows `z_re,z_im,order,value_re,value_im` for the derivatives at each
/// point.
pub fn sample_csv(f: &dyn JetProvider, points: &[C64], order: usize) -> Result<String> {
    let mut s = String::from("z_re,z_im,order,value_re,value_im\n");
    for z in points {
        for (j, v) in f.jets(*z, order)?.iter().enumerate() {
            s.push_str(&format!("{:.16e},{:.16e},{},{:.16e},{:.16e}\n", z.re, z.im, j, v.re, v.im));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyp::octagon_group;
    use crate::jets::{finite_difference, Zero};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zero_seed_gives_zero() {
        let g = octagon_group();
        let f = poincare_series(&g, 2, Arc::new(Zero), 6).unwrap();
        assert_eq!(f.jets(c(0.1, 1.0), 3).unwrap(), vec![ZERO; 4]);
    }

    #[test]
    fn radius_zero_is_the_seed() {
        let g = octagon_group();
        let seed = default_seed(2);
        let f = poincare_series(&g, 2, seed.clone(), 0).unwrap();
        let z = c(0.3, 0.8);
        assert_eq!(f.jets(z, 3).unwrap(), seed.jets(z, 3).unwrap());
    }

    #[test]
    fn weight_below_two_rejected() {
        let g = octagon_group();
        assert!(poincare_series(&g, 1, default_seed(1), 2).is_err());
    }

    #[test]
    fn residual_decreases_with_radius() {
        let g = octagon_group();
        let samples = default_samples(&g);
        let seed: Jets = Arc::new(Rational::power(c(0.0, -2.0), -4));
        let r2 = automorphy_residual(&poincare_series(&g, 2, seed.clone(), 2).unwrap(), 2, &samples).unwrap();
        let r4 = automorphy_residual(&poincare_series(&g, 2, seed, 4).unwrap(), 2, &samples).unwrap();
        assert!(r4 < r2, "{r4} !< {r2}");
    }

    #[test]
    fn identity_samples_have_zero_residual() {
        let g = octagon_group();
        let f = poincare_series(&g, 2, default_seed(2), 2).unwrap();
        let s = vec![(GroupWord::identity(), c(0.0, 1.0))];
        assert_eq!(automorphy_residual(&f, 2, &s).unwrap(), 0.0);
    }

    #[test]
    fn termwise_derivative_matches_finite_difference() {
        let g = octagon_group();
        let f = poincare_series(&g, 2, default_seed(2), 3).unwrap();
        let z = c(0.1, 1.1);
        let d = f.jets(z, 1).unwrap()[1];
        let fd = finite_difference(&f, z, 1e-5).unwrap();
        assert!((d - fd).norm() < 1e-5 * d.norm());
    }

    #[test]
    fn chain_rule_for_words() {
        let g = octagon_group();
        let u = g.word(&[1, -2]);
        let v = g.word(&[3, 4, 1]);
        let uv = u.concat(&g, &v);
        let z = c(0.2, 0.9);
        let lhs = uv.matrix.derivative(z);
        let rhs = u.matrix.derivative(v.matrix.apply_unchecked(z)) * v.matrix.derivative(z);
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn default_series_is_not_identically_zero() {
        let g = octagon_group();
        let f = poincare_series(&g, 2, default_seed(2), 4).unwrap();
        let grid = [c(0.0, 1.0), c(0.3, 0.7), c(-0.4, 1.5)];
        let m = grid.iter().map(|z| f.value(*z).unwrap().norm()).fold(0.0, f64::max);
        assert!(m > 1e-8);
    }

    #[test]
    fn evaluations_replay_exactly() {
        let g = octagon_group();
        let f = poincare_series(&g, 3, default_seed(3), 3).unwrap();
        let z = c(0.05, 1.05);
        let a = f.jets(z, 4).unwrap();
        let b = f.evaluate(z, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_roundtrip() {
        let spec = FormSpec { k: 2, radius: 6, seed: SeedSpec::default_for(2) };
        let s = serde_json::to_string(&spec).unwrap();
        let back: FormSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        assert!(spec.seed.build().is_ok());
        let bad = SeedSpec { kind: "rational".into(), poles: vec![[0.0, 1.0]], power: -4 };
        assert!(bad.build().is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = sample_csv(&*default_seed(2), &[c(0.0, 1.0)], 2).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "z_re,z_im,order,value_re,value_im");
        assert_eq!(lines.len(), 4);
    }
}
