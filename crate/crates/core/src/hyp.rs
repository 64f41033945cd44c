//! Hyperbolic geometry of the upper half-plane and the genus-2 surface group
//! of the regular octagon.

use std::collections::HashMap;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Taylor;
use crate::linalg::{real2, CMat};
use crate::par;

type C64 = Complex64;

/// Largest radius accepted by [`word_ball`].
pub const WORD_BALL_CAP: usize = 12;

/// Default basepoint for continuation.
pub const BASEPOINT: C64 = C64::new(0.0, 1.0);

fn require_interior(z: C64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::NotInUpperHalfPlane(z))
    }
}

/// An element of `SL_2(R)` acting by fractional linear transformations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moebius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Moebius {
    pub const IDENTITY: Moebius = Moebius { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Moebius { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        Moebius { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn neg(&self) -> Self {
        Moebius { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }

    /// The same projective element with nonnegative trace.
    pub fn positive_lift(&self) -> Self {
        if self.trace() < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Max-entry distance.
    pub fn dist(&self, other: &Moebius) -> f64 {
        self.entries().iter().zip(other.entries().iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    /// Max-entry distance up to the global sign.
    pub fn projective_dist(&self, other: &Moebius) -> f64 {
        self.dist(other).min(self.dist(&other.neg()))
    }

    pub fn to_cmat(&self) -> CMat {
        real2(self.a, self.b, self.c, self.d)
    }

    /// `cz + d`.
    pub fn denom(&self, z: C64) -> C64 {
        z * self.c + self.d
    }

    /// `(az + b)/(cz + d)` without the half-plane check.
    pub fn apply_unchecked(&self, z: C64) -> C64 {
        (z * self.a + self.b) / self.denom(z)
    }

    /// `γ'(z) = (cz + d)^{-2}`.
    pub fn derivative(&self, z: C64) -> C64 {
        let q = self.denom(z);
        C64::new(1.0, 0.0) / (q * q)
    }

    /// Taylor series of `γ(z0 + h)` in `h`.
    pub fn taylor(&self, z0: C64, order: usize) -> Result<Taylor> {
        let mut num = Taylor::zero(order);
        num.coeffs[0] = z0 * self.a + self.b;
        if order >= 1 {
            num.coeffs[1] = C64::new(self.a, 0.0);
        }
        Ok(num.mul(&self.denom_power_taylor(z0, -1, order)?))
    }

    /// Series of `(cz + d)^p` around `z0` (a polynomial for `p ≥ 0`).
    pub fn denom_power_taylor(&self, z0: C64, p: i32, order: usize) -> Result<Taylor> {
        let q = self.denom(z0);
        let base = Taylor::binomial_power(q, p, order)?;
        // (q + c h)^p = Σ binom(p,k) q^{p-k} c^k h^k
        let mut scale = C64::new(1.0, 0.0);
        let coeffs = base
            .coeffs
            .iter()
            .map(|a| {
                let v = a * scale;
                scale *= self.c;
                v
            })
            .collect();
        Ok(Taylor { coeffs })
    }
}

impl Mul for Moebius {
    type Output = Moebius;

    fn mul(self, o: Moebius) -> Moebius {
        Moebius {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

/// `(az + b)/(cz + d)`; rejects points off the upper half-plane.
pub fn mobius_apply(m: &Moebius, z: C64) -> Result<C64> {
    require_interior(z)?;
    Ok(m.apply_unchecked(z))
}

/// Hyperbolic distance in the upper half-plane.
pub fn hyp_distance(z: C64, w: C64) -> Result<f64> {
    require_interior(z)?;
    require_interior(w)?;
    Ok(hyp_distance_unchecked(z, w))
}

pub(crate) fn hyp_distance_unchecked(z: C64, w: C64) -> f64 {
    // 2 asinh(|z-w| / (2 sqrt(Im z Im w))) is the stable form of
    // cosh d = 1 + |z-w|^2 / (2 Im z Im w)
    2.0 * ((z - w).norm() / (2.0 * (z.im * w.im).sqrt())).asinh()
}

/// The point a fraction `t` of the way along the geodesic from `z` to `w`.
pub fn geodesic_point(z: C64, w: C64, t: f64) -> C64 {
    let i = C64::new(0.0, 1.0);
    // send z to i, then to the disk origin
    let u = (w - z.re) / z.im;
    let p = (u - i) / (u + i);
    let r = p.norm();
    if r < 1e-300 {
        return z;
    }
    let d = 2.0 * r.atanh();
    let pt = p / r * (t * d / 2.0).tanh();
    let ut = i * (C64::new(1.0, 0.0) + pt) / (C64::new(1.0, 0.0) - pt);
    ut * z.im + z.re
}

/// Cayley map from the unit disk (origin ↦ i).
pub fn disk_to_half_plane(w: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    C64::new(0.0, 1.0) * (one + w) / (one - w)
}

pub fn half_plane_to_disk(z: C64) -> C64 {
    let i = C64::new(0.0, 1.0);
    (z - i) / (z + i)
}

/// Elliptic element rotating by `phi` about `i` (disk angle).
pub fn rotation_about_i(phi: f64) -> Moebius {
    let (s, c) = (phi / 2.0).sin_cos();
    Moebius::new(c, s, -s, c)
}

/// Hyperbolic translation along the imaginary axis by `len`.
pub fn axis_translation(len: f64) -> Moebius {
    Moebius::new((len / 2.0).exp(), 0.0, 0.0, (-len / 2.0).exp())
}

/// Distance from the center of the regular octagon with interior angles π/4
/// to the midpoint of a side: `cosh δ = cot(π/8) = 1 + √2`.
pub fn octagon_inradius() -> f64 {
    (1.0 + 2.0_f64.sqrt()).acosh()
}

/// Distance from the center to a vertex: `cosh r = cot²(π/8) = 3 + 2√2`.
pub fn octagon_circumradius() -> f64 {
    (3.0 + 2.0 * 2.0_f64.sqrt()).acosh()
}

/// The isometry carrying side `from` of the octagon onto side `to`, taking the
/// interior to the exterior. Side `k` has its midpoint in disk direction
/// `kπ/4`.
pub fn octagon_side_pairing(from: usize, to: usize) -> Moebius {
    let q = std::f64::consts::FRAC_PI_4;
    let delta = octagon_inradius();
    rotation_about_i(to as f64 * q - std::f64::consts::PI)
        * axis_translation(-2.0 * delta)
        * rotation_about_i(-(from as f64) * q)
}

/// A cocompact Fuchsian group given by generators `a1, b1, ..., ag, bg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuchsianGroup {
    pub genus: usize,
    pub generators: Vec<Moebius>,
}

/// Side-pairing data of the octagon: generator index ↦ (source side, target
/// side). The boundary word reads `a1 b1 a1⁻¹ b1⁻¹ a2 b2 a2⁻¹ b2⁻¹`.
pub const OCTAGON_PAIRINGS: [(usize, usize); 4] = [(2, 0), (1, 3), (6, 4), (5, 7)];

/// The genus-2 surface group of the regular octagon centered at `i`.
///
/// Side `k` is glued to side `k+2` in the pattern `a1 b1 a1⁻¹ b1⁻¹ a2 b2 a2⁻¹
/// b2⁻¹`, so the side pairings are translations conjugated by rotations in
/// π/4 steps. Each generator is the positive-trace lift; the product of
/// commutators is `+I`.
pub fn octagon_group() -> FuchsianGroup {
    let generators =
        OCTAGON_PAIRINGS.iter().map(|&(from, to)| octagon_side_pairing(from, to).positive_lift()).collect();
    FuchsianGroup { genus: 2, generators }
}

impl FuchsianGroup {
    pub fn letter_matrix(&self, letter: i8) -> Moebius {
        let g = self.generators[letter.unsigned_abs() as usize - 1];
        if letter > 0 {
            g
        } else {
            g.inverse()
        }
    }

    pub fn word_matrix(&self, letters: &[i8]) -> Moebius {
        letters.iter().fold(Moebius::IDENTITY, |acc, &l| acc * self.letter_matrix(l))
    }

    /// `[a1,b1][a2,b2]...`.
    pub fn relation_product(&self) -> Moebius {
        self.word_matrix(&relation_letters(self.genus))
    }

    pub fn word(&self, letters: &[i8]) -> GroupWord {
        GroupWord::new(self, letters)
    }

    pub fn generator_words(&self) -> Vec<GroupWord> {
        (1..=2 * self.genus as i8).map(|l| self.word(&[l])).collect()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "genus": self.genus,
            "generators": self.generators.iter().map(|g| g.entries().to_vec()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            genus: usize,
            generators: Vec<[f64; 4]>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        if raw.generators.len() != 2 * raw.genus {
            return Err(Error::InvalidArgument(format!(
                "genus {} needs {} generators, got {}",
                raw.genus,
                2 * raw.genus,
                raw.generators.len()
            )));
        }
        let generators: Vec<Moebius> = raw.generators.iter().map(|e| Moebius::new(e[0], e[1], e[2], e[3])).collect();
        for g in &generators {
            if (g.det() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!("generator with det {}", g.det())));
            }
        }
        Ok(FuchsianGroup { genus: raw.genus, generators })
    }
}

/// Letters of `[a1,b1]...[ag,bg]` with `a_i = 2i-1`, `b_i = 2i`.
pub fn relation_letters(genus: usize) -> Vec<i8> {
    let mut w = Vec::with_capacity(4 * genus);
    for i in 0..genus as i8 {
        let a = 2 * i + 1;
        let b = 2 * i + 2;
        w.extend_from_slice(&[a, b, -a, -b]);
    }
    w
}

/// `min_s ‖[a1,b1][a2,b2] − sI‖` in the max-entry norm.
pub fn relation_residual(g: &FuchsianGroup) -> f64 {
    g.relation_product().projective_dist(&Moebius::IDENTITY)
}

/// A freely reduced word with its cached matrix. Letter `k > 0` is generator
/// `k-1`, `-k` its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupWord {
    pub letters: Vec<i8>,
    pub matrix: Moebius,
}

impl GroupWord {
    pub fn identity() -> Self {
        GroupWord { letters: Vec::new(), matrix: Moebius::IDENTITY }
    }

    /// Freely reduces `letters` and evaluates the product.
    pub fn new(g: &FuchsianGroup, letters: &[i8]) -> Self {
        let letters = free_reduce(letters);
        let matrix = g.word_matrix(&letters);
        GroupWord { letters, matrix }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Self {
        GroupWord { letters: self.letters.iter().rev().map(|l| -l).collect(), matrix: self.matrix.inverse() }
    }

    pub fn concat(&self, g: &FuchsianGroup, other: &GroupWord) -> Self {
        let mut l = self.letters.clone();
        l.extend_from_slice(&other.letters);
        GroupWord::new(g, &l)
    }

    pub fn name(&self) -> String {
        word_name(&self.letters)
    }
}

impl fmt::Display for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn letter_name(l: i8) -> String {
    let idx = l.unsigned_abs() as usize - 1;
    let base = format!("{}{}", if idx.is_multiple_of(2) { 'a' } else { 'b' }, idx / 2 + 1);
    if l > 0 {
        base
    } else {
        format!("{base}^-1")
    }
}

pub fn word_name(letters: &[i8]) -> String {
    if letters.is_empty() {
        return "e".to_string();
    }
    letters.iter().map(|&l| letter_name(l)).collect::<Vec<_>>().join(" ")
}

pub fn free_reduce(letters: &[i8]) -> Vec<i8> {
    let mut out: Vec<i8> = Vec::with_capacity(letters.len());
    for &l in letters {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

/// Alphabet order used for lexicographic sorting: a1, a1⁻¹, b1, b1⁻¹, ...
pub fn alphabet(genus: usize) -> Vec<i8> {
    (1..=2 * genus as i8).flat_map(|l| [l, -l]).collect()
}

/// All freely reduced letter sequences of length ≤ `radius`, ordered by
/// length then lexicographically in [`alphabet`] order.
pub fn word_ball_letters(genus: usize, radius: usize) -> Result<Vec<Vec<i8>>> {
    if radius > WORD_BALL_CAP {
        return Err(Error::CapExceeded { what: "word ball radius", value: radius, cap: WORD_BALL_CAP });
    }
    let alpha = alphabet(genus);
    let mut all = vec![Vec::new()];
    let mut level: Vec<Vec<i8>> = vec![Vec::new()];
    for _ in 0..radius {
        let next: Vec<Vec<Vec<i8>>> = par::map(&level, |w| {
            alpha
                .iter()
                .filter(|&&l| w.last() != Some(&-l))
                .map(|&l| {
                    let mut v = w.clone();
                    v.push(l);
                    v
                })
                .collect()
        });
        level = next.into_iter().flatten().collect();
        all.extend(level.iter().cloned());
    }
    Ok(all)
}

/// All freely reduced words of length ≤ `radius` (deduplicated as words).
pub fn word_ball(g: &FuchsianGroup, radius: usize) -> Result<Vec<GroupWord>> {
    let letters = word_ball_letters(g.genus, radius)?;
    Ok(par::map(&letters, |l| GroupWord { letters: l.clone(), matrix: g.word_matrix(l) }))
}

/// Distinct group elements (up to sign) of word length ≤ `radius`, found by
/// breadth-first search with matrix hashing. Used for Poincaré series, where
/// summing over words instead of elements would count elements repeatedly.
#[derive(Clone, Debug)]
pub struct ElementBall {
    pub radius: usize,
    pub elements: Vec<Moebius>,
    /// Word length of each element.
    pub lengths: Vec<u8>,
}

const HASH_CELL: f64 = 1e-7;

fn sign_normalized(m: &Moebius) -> Moebius {
    let flip = if m.c.abs() > 1e-6 { m.c < 0.0 } else { m.d < 0.0 };
    if flip {
        m.neg()
    } else {
        *m
    }
}

fn cell_keys(m: &Moebius) -> Vec<[i64; 4]> {
    let e = m.entries();
    let mut keys = vec![[0_i64; 4]];
    for (k, x) in e.iter().enumerate() {
        let s = x / HASH_CELL;
        let base = s.floor();
        let frac = s - base;
        let b = base as i64;
        let mut extra = Vec::new();
        for key in keys.iter_mut() {
            key[k] = b;
            if frac < 0.25 {
                let mut alt = *key;
                alt[k] = b - 1;
                extra.push(alt);
            } else if frac > 0.75 {
                let mut alt = *key;
                alt[k] = b + 1;
                extra.push(alt);
            }
        }
        keys.extend(extra);
    }
    keys
}

impl ElementBall {
    pub fn new(g: &FuchsianGroup, radius: usize) -> Result<Self> {
        if radius > WORD_BALL_CAP {
            return Err(Error::CapExceeded { what: "element ball radius", value: radius, cap: WORD_BALL_CAP });
        }
        let alpha = alphabet(g.genus);
        let letters: Vec<Moebius> = alpha.iter().map(|&l| g.letter_matrix(l)).collect();
        let mut seen: HashMap<[i64; 4], u32> = HashMap::new();
        let mut elements = vec![Moebius::IDENTITY];
        let mut lengths = vec![0_u8];
        let home = |m: &Moebius| {
            let e = sign_normalized(m).entries();
            [
                (e[0] / HASH_CELL).floor() as i64,
                (e[1] / HASH_CELL).floor() as i64,
                (e[2] / HASH_CELL).floor() as i64,
                (e[3] / HASH_CELL).floor() as i64,
            ]
        };
        seen.insert(home(&Moebius::IDENTITY), 0);
        let mut frontier: Vec<usize> = vec![0];
        for len in 1..=radius {
            let candidates: Vec<Vec<Moebius>> =
                par::map(&frontier, |&idx| letters.iter().map(|l| elements[idx] * *l).collect());
            let mut next = Vec::new();
            for m in candidates.into_iter().flatten() {
                let n = sign_normalized(&m);
                let known = cell_keys(&n).iter().any(|k| {
                    seen.get(k).is_some_and(|&j| sign_normalized(&elements[j as usize]).dist(&n) < HASH_CELL / 4.0)
                });
                if known {
                    continue;
                }
                let idx = elements.len();
                seen.insert(home(&n), idx as u32);
                elements.push(m);
                lengths.push(len as u8);
                next.push(idx);
            }
            frontier = next;
        }
        Ok(ElementBall { radius, elements, lengths })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// A polyline in the upper half-plane.
#[derive(Clone, Debug, PartialEq)]
pub struct HPath {
    pub vertices: Vec<C64>,
}

impl HPath {
    pub fn start(&self) -> C64 {
        self.vertices[0]
    }

    pub fn end(&self) -> C64 {
        *self.vertices.last().expect("nonempty path")
    }

    pub fn max_step(&self) -> f64 {
        self.vertices.windows(2).map(|w| hyp_distance_unchecked(w[0], w[1])).fold(0.0, f64::max)
    }

    pub fn legs(&self) -> impl Iterator<Item = (C64, C64)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Geodesic polyline `z0 → g1 z0 → g1 g2 z0 → …` subdivided so consecutive
/// vertices are within `max_step`.
pub fn translate_path(g: &FuchsianGroup, gamma: &GroupWord, z0: C64, max_step: f64) -> Result<HPath> {
    require_interior(z0)?;
    if max_step <= 0.0 || max_step.is_nan() {
        return Err(Error::InvalidArgument(format!("max_step must be positive, got {max_step}")));
    }
    let mut vertices = vec![z0];
    let mut acc = Moebius::IDENTITY;
    let mut cur = z0;
    for &l in &gamma.letters {
        acc = acc * g.letter_matrix(l);
        let next = acc.apply_unchecked(z0);
        let d = hyp_distance_unchecked(cur, next);
        let pieces = ((d / max_step).ceil() as usize).max(1);
        for k in 1..pieces {
            vertices.push(geodesic_point(cur, next, k as f64 / pieces as f64));
        }
        vertices.push(next);
        cur = next;
    }
    Ok(HPath { vertices })
}
