//! Slopes, Harder–Narasimhan types and the dominance order, in exact
//! rational arithmetic.

use std::fmt;

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

/// Largest rank and genus accepted by [`enumerate_admissible_types`].
pub const ENUM_MAX_N: usize = 5;
pub const ENUM_MAX_G: usize = 3;

pub fn slope(deg: i64, rank: i64) -> Result<Rational64> {
    if rank <= 0 {
        return Err(Error::InvalidArgument(format!("rank must be positive, got {rank}")));
    }
    Ok(Rational64::new(deg, rank))
}

/// Blocks `(slope, multiplicity)` with strictly decreasing slopes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HNType {
    pub entries: Vec<(Rational64, usize)>,
}

impl HNType {
    pub fn new(entries: Vec<(Rational64, usize)>) -> Result<Self> {
        if entries.iter().any(|&(_, m)| m == 0) {
            return Err(Error::InvalidArgument("block multiplicity must be positive".into()));
        }
        if entries.windows(2).any(|w| w[0].0 <= w[1].0) {
            return Err(Error::InvalidArgument("block slopes must strictly decrease".into()));
        }
        Ok(HNType { entries })
    }

    /// Groups a weakly decreasing vector into blocks.
    pub fn from_vector(v: &[Rational64]) -> Result<Self> {
        let mut entries: Vec<(Rational64, usize)> = Vec::new();
        for &x in v {
            match entries.last_mut() {
                Some((s, m)) if *s == x => *m += 1,
                _ => entries.push((x, 1)),
            }
        }
        HNType::new(entries)
    }

    /// From block ranks and degrees.
    pub fn from_blocks(ranks: &[usize], degrees: &[i64]) -> Result<Self> {
        if ranks.len() != degrees.len() {
            return Err(Error::InvalidArgument("ranks and degrees differ in length".into()));
        }
        let entries =
            ranks.iter().zip(degrees).map(|(&r, &d)| Ok((slope(d, r as i64)?, r))).collect::<Result<Vec<_>>>()?;
        HNType::new(entries)
    }

    pub fn expanded(&self) -> Vec<Rational64> {
        self.entries.iter().flat_map(|&(s, m)| std::iter::repeat_n(s, m)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> Rational64 {
        self.entries.iter().map(|&(s, m)| s * Rational64::from_integer(m as i64)).sum()
    }

    pub fn blocks(&self) -> usize {
        self.entries.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.1).collect()
    }

    /// Block degrees `slope · rank` (integers for types from bundle data).
    pub fn degrees(&self) -> Vec<Rational64> {
        self.entries.iter().map(|&(s, m)| s * Rational64::from_integer(m as i64)).collect()
    }
}

impl fmt::Display for HNType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.expanded().iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `λ ⊴ μ`: every partial sum of `λ` is at most that of `μ`.
pub fn dominance_leq(lambda: &HNType, mu: &HNType) -> Result<bool> {
    let (l, m) = (lambda.expanded(), mu.expanded());
    if l.len() != m.len() {
        return Err(Error::InvalidArgument(format!("lengths differ: {} vs {}", l.len(), m.len())));
    }
    if lambda.total() != mu.total() {
        return Err(Error::InvalidArgument(format!("totals differ: {} vs {}", lambda.total(), mu.total())));
    }
    let mut sl = Rational64::from_integer(0);
    let mut sm = Rational64::from_integer(0);
    for (a, b) in l.iter().zip(&m) {
        sl += a;
        sm += b;
        if sl > sm {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `μ_i = (n + 1 − 2i)(g − 1)`.
pub fn oper_hn_type(n: usize, g: usize) -> Result<HNType> {
    if n < 1 || g < 2 {
        return Err(Error::InvalidArgument(format!("need n ≥ 1 and g ≥ 2, got n = {n}, g = {g}")));
    }
    let v: Vec<Rational64> =
        (1..=n as i64).map(|i| Rational64::from_integer((n as i64 + 1 - 2 * i) * (g as i64 - 1))).collect();
    HNType::from_vector(&v)
}

/// Degrees of the oper filtration `V_1 ⊂ ... ⊂ V_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FiltrationDegrees {
    pub n: usize,
    pub g: usize,
    pub degs: Vec<i64>,
}

/// `deg V_j = j deg L + (nj − j(j+1)/2)(2g − 2)` with `deg L = −(n − 1)(g − 1)`.
pub fn filtration_degrees(n: usize, g: usize) -> Result<FiltrationDegrees> {
    if n < 1 || g < 2 {
        return Err(Error::InvalidArgument(format!("need n ≥ 1 and g ≥ 2, got n = {n}, g = {g}")));
    }
    let (ni, gi) = (n as i64, g as i64);
    let deg_l = -(ni - 1) * (gi - 1);
    let degs = (1..=ni).map(|j| j * deg_l + (ni * j - j * (j + 1) / 2) * (2 * gi - 2)).collect();
    Ok(FiltrationDegrees { n, g, degs })
}

fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn degree_vectors(ranks: &[usize], bound: i64, gap: Rational64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(ranks.len());
    fn rec(ranks: &[usize], bound: i64, gap: Rational64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        let i = cur.len();
        if i == ranks.len() {
            if cur.iter().sum::<i64>() == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let r = ranks[i] as i64;
        for d in -bound * r..=bound * r {
            let s = Rational64::new(d, r);
            if let Some(&prev) = cur.last() {
                let ps = Rational64::new(prev, ranks[i - 1] as i64);
                if s >= ps || ps - s > gap {
                    continue;
                }
            }
            cur.push(d);
            rec(ranks, bound, gap, cur, out);
            cur.pop();
        }
    }
    rec(ranks, bound, gap, &mut cur, &mut out);
    out
}

/// All unstable HN types of rank `n`, degree 0 with integer block degrees,
/// strictly decreasing slopes and consecutive slope gaps at most `2g − 2`.
pub fn enumerate_admissible_types(n: usize, g: usize) -> Result<Vec<HNType>> {
    if n > ENUM_MAX_N || g > ENUM_MAX_G {
        return Err(Error::Budget(format!(
            "enumeration is capped at n ≤ {ENUM_MAX_N}, g ≤ {ENUM_MAX_G}; got n = {n}, g = {g}"
        )));
    }
    if g < 2 {
        return Err(Error::InvalidArgument(format!("need g ≥ 2, got {g}")));
    }
    let gap = Rational64::from_integer(2 * g as i64 - 2);
    let comps: Vec<Vec<usize>> = compositions(n).into_iter().filter(|c| c.len() >= 2).collect();
    let per = par::map(&comps, |ranks| {
        // slopes lie within (k − 1)(2g − 2) of each other and average to 0
        let bound = (ranks.len() as i64 - 1) * (2 * g as i64 - 2);
        degree_vectors(ranks, bound, gap)
            .into_iter()
            .map(|d| HNType::from_blocks(ranks, &d))
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::new();
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

/// Outcome of checking oper maximality for one `(n, g)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaximalityReport {
    pub n: usize,
    pub g: usize,
    pub types: usize,
    pub maximal: bool,
    pub equal_to_oper: usize,
}

pub fn verify_maximality(n: usize, g: usize) -> Result<MaximalityReport> {
    let types = enumerate_admissible_types(n, g)?;
    let oper = oper_hn_type(n, g)?;
    let mut maximal = true;
    let mut equal = 0;
    for t in &types {
        if !dominance_leq(t, &oper)? {
            maximal = false;
        }
        if *t == oper {
            equal += 1;
        }
    }
    // equality may only occur at the oper type itself, and it is admissible
    // exactly when it has more than one block
    let expect_equal = usize::from(oper.blocks() >= 2);
    Ok(MaximalityReport { n, g, types: types.len(), maximal: maximal && equal == expect_equal, equal_to_oper: equal })
}

/// CSV `index,ranks,degrees,slopes` with `;`-separated lists.
pub fn types_csv(types: &[HNType]) -> String {
    let mut s = String::from("index,ranks,degrees,slopes\n");
    let join = |v: Vec<String>| v.join(";");
    for (i, t) in types.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            i,
            join(t.ranks().iter().map(|r| r.to_string()).collect()),
            join(t.degrees().iter().map(|r| r.to_string()).collect()),
            join(t.entries.iter().map(|e| e.0.to_string()).collect()),
        ));
    }
    s
}
