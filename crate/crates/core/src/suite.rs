//! The acceptance battery.
//!
//! Every criterion is a list of named checks, each a measured value against a
//! bound. [`Level::Smoke`] shrinks problem sizes; tolerances never change.

use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gauge::{self, DiscreteConnection, DiscreteHiggs};
use crate::harmonic::{
    build_equivariant_mesh, harmonic_solve, higgs_from_psi, posherm, psi_divergence, psi_field, DivergenceConfig,
    EquivariantMap, EquivariantMesh, HarmonicOptions,
};
use crate::hn;
use crate::hyp::{octagon_group, FuchsianGroup, Moebius};
use crate::jets::{jet_of_rational, Composed, Exponential, JetProvider, Jets, Scaled, Zero};
use crate::linalg::{self, c, CMat};
use crate::oper::{self, MonodromyRep, OdeOptions, OperODE, WkConstants};
use crate::rep::{self, Representation};
use crate::{forms, json, par};

type C64 = Complex64;

pub const CRITERIA: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Smoke,
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Level::Smoke),
            "full" => Ok(Level::Full),
            _ => Err(Error::InvalidArgument(format!("unknown level {s:?}, expected smoke or full"))),
        }
    }
}

/// A deliberate defect, used to show that the battery notices it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    #[default]
    None,
    /// Scales the `Q_2''` constant of `w_4` by 1.01.
    WrongW4Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Below,
    AtMost,
    Above,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, relation: Relation, bound: f64) -> Self {
        let passed = match relation {
            Relation::Below => value < bound,
            Relation::AtMost => value <= bound,
            Relation::Above => value > bound,
            Relation::Equal => value == bound,
        };
        Check { name: name.into(), value, bound, relation, passed }
    }

    fn below(name: &str, value: f64, bound: f64) -> Self {
        Check::new(name, value, Relation::Below, bound)
    }

    fn above(name: &str, value: f64, bound: f64) -> Self {
        Check::new(name, value, Relation::Above, bound)
    }

    fn equal(name: &str, value: f64, bound: f64) -> Self {
        Check::new(name, value, Relation::Equal, bound)
    }

    fn holds(name: &str, ok: bool) -> Self {
        Check::equal(name, f64::from(u8::from(ok)), 1.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::Below => "<",
            Relation::AtMost => "<=",
            Relation::Above => ">",
            Relation::Equal => "==",
        };
        let mark = if self.passed { "ok" } else { "FAIL" };
        write!(f, "{mark:>4}  {}: {:.3e} {op} {:.3e}", self.name, self.value, self.bound)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: String,
    pub checks: Vec<Check>,
    /// Values that are reported but not judged.
    pub notes: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub budget_seconds: Option<f64>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn within_budget(&self) -> bool {
        self.budget_seconds.is_none_or(|b| self.seconds < b)
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.within_budget() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// One line: id, title, verdict and runtime.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let budget = self.budget_seconds.map(|b| format!(" (budget {b:.0} s)")).unwrap_or_default();
        format!("criterion {:>2} {:<28} {verdict}  {:.2} s{budget}", self.id, self.title, self.seconds)
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        for c in &self.checks {
            writeln!(f, "      {c}")?;
        }
        for (k, v) in &self.notes {
            writeln!(f, "      note  {k}: {v:.6e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "      warn  {w}")?;
        }
        if let Some(e) = &self.error {
            writeln!(f, "      error {e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub level: Level,
    pub perturbation: Perturbation,
    pub criteria: Vec<CriterionReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed())
    }

    pub fn failed(&self) -> Vec<usize> {
        self.criteria.iter().filter(|c| !c.passed()).map(|c| c.id).collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            s.push_str(&c.to_string());
        }
        s
    }
}

/// Sizes that differ between levels.
#[derive(Clone, Copy, Debug)]
struct Scale {
    refinement: usize,
    flow_steps: usize,
    simpson_trials: usize,
    max_hn_n: usize,
    all_pairs: bool,
    orders: usize,
}

impl Scale {
    fn of(level: Level) -> Self {
        match level {
            Level::Smoke => {
                Scale { refinement: 1, flow_steps: 50, simpson_trials: 1000, max_hn_n: 4, all_pairs: false, orders: 3 }
            }
            Level::Full => Scale {
                refinement: 2,
                flow_steps: 500,
                simpson_trials: 10_000,
                max_hn_n: 5,
                all_pairs: true,
                orders: 5,
            },
        }
    }
}

const TITLES: [&str; CRITERIA] = [
    "schwarzian",
    "monodromy oracle",
    "wronskian and determinant",
    "w_k covariants",
    "irreducible, non-unitary",
    "eichler cocycle",
    "hn maximality",
    "dimension bookkeeping",
    "harmonic maps",
    "gauge and flow",
    "determinism",
];

const BUDGETS: [Option<f64>; CRITERIA] =
    [Some(5.0), Some(30.0), None, None, None, None, Some(60.0), None, Some(300.0), Some(180.0), None];

/// Runs criteria and shares the monodromy computations between them.
pub struct Battery {
    pub level: Level,
    pub perturbation: Perturbation,
    pub seed: u64,
    group: FuchsianGroup,
    trivial: OnceLock<std::result::Result<Vec<MonodromyRep>, String>>,
    extra: OnceLock<std::result::Result<Vec<MonodromyRep>, String>>,
}

struct Outcome {
    checks: Vec<Check>,
    notes: Vec<(String, f64)>,
    warnings: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { checks: Vec::new(), notes: Vec::new(), warnings: Vec::new() }
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn note(&mut self, name: &str, v: f64) {
        self.notes.push((name.into(), v));
    }
}

const Z0: C64 = C64::new(0.0, 1.0);

impl Battery {
    pub fn new(level: Level) -> Self {
        Battery {
            level,
            perturbation: Perturbation::None,
            seed: 7,
            group: octagon_group(),
            trivial: OnceLock::new(),
            extra: OnceLock::new(),
        }
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbation = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn scale(&self) -> Scale {
        Scale::of(self.level)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    pub fn run(&self, id: usize) -> Result<CriterionReport> {
        if !(1..=CRITERIA).contains(&id) {
            return Err(Error::InvalidArgument(format!("criterion {id} not in 1..={CRITERIA}")));
        }
        let start = Instant::now();
        let result = match id {
            1 => self.schwarzian(),
            2 => self.monodromy_oracle(),
            3 => self.wronskian(),
            4 => self.covariants(),
            5 => self.irreducible(),
            6 => self.eichler(),
            7 => self.hn_maximality(),
            8 => self.dimensions(),
            9 => self.harmonic(),
            10 => self.gauge(),
            _ => self.determinism(),
        };
        let seconds = start.elapsed().as_secs_f64();
        let (out, error) = match result {
            Ok(o) => (o, None),
            Err(e) => (Outcome::new(), Some(e.to_string())),
        };
        Ok(CriterionReport {
            id,
            title: TITLES[id - 1].into(),
            checks: out.checks,
            notes: out.notes,
            warnings: out.warnings,
            error,
            budget_seconds: BUDGETS[id - 1],
            seconds,
        })
    }

    pub fn run_all(&self) -> SuiteReport {
        self.run_with(|_| {})
    }

    /// Runs every criterion, handing each report to `each` as it completes.
    pub fn run_with(&self, mut each: impl FnMut(&CriterionReport)) -> SuiteReport {
        let criteria = (1..=CRITERIA)
            .map(|id| {
                let r = self.run(id).expect("id in range");
                each(&r);
                r
            })
            .collect();
        SuiteReport { level: self.level, perturbation: self.perturbation, criteria }
    }

    fn trivial_monodromies(&self) -> Result<&[MonodromyRep]> {
        let r = self.trivial.get_or_init(|| {
            (2..=3)
                .map(|n| oper::monodromy(&OperODE::trivial(n), &self.group, Z0, &OdeOptions::default()))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.to_string())
        });
        r.as_deref().map_err(|e| Error::InvalidArgument(e.clone()))
    }

    /// Further opers: trivial ones of higher order and one with `Q` a small
    /// multiple of a truncated weight-4 Poincaré series.
    fn extra_monodromies(&self) -> Result<&[MonodromyRep]> {
        let r = self.extra.get_or_init(|| {
            let run = || -> Result<Vec<MonodromyRep>> {
                let mut out = Vec::new();
                for n in 4..=self.scale().orders {
                    out.push(oper::monodromy(&OperODE::trivial(n), &self.group, Z0, &OdeOptions::default())?);
                }
                let p2: Jets = Arc::new(forms::poincare_series(&self.group, 2, forms::default_seed(2), 3)?);
                let q: Jets = Arc::new(Scaled(c(0.1, 0.0), p2));
                out.push(oper::monodromy(&oper::ode_from_projective(2, q)?, &self.group, Z0, &OdeOptions::default())?);
                Ok(out)
            };
            run().map_err(|e| e.to_string())
        });
        r.as_deref().map_err(|e| Error::InvalidArgument(e.clone()))
    }

    fn all_monodromies(&self) -> Result<Vec<&MonodromyRep>> {
        Ok(self.trivial_monodromies()?.iter().chain(self.extra_monodromies()?).collect())
    }

    fn schwarzian(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let mut rng = self.rng(1);
        let upper = |rng: &mut ChaCha8Rng| c(rng.random_range(-0.8..0.8), rng.random_range(0.5..2.0));
        let lower = |rng: &mut ChaCha8Rng| c(rng.random_range(-1.0..1.0), rng.random_range(-3.0..-1.0));
        let coef = |rng: &mut ChaCha8Rng| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));

        // (a z + b) / (z − p) with the pole in the lower half-plane
        let mut moebius = 0.0_f64;
        for _ in 0..100 {
            let (a, b, p) = (coef(&mut rng), coef(&mut rng), lower(&mut rng));
            if (a * p + b).norm() < 0.1 {
                continue;
            }
            let m = jet_of_rational(&[b, a], &[(p, 1)]);
            moebius = moebius.max(oper::schwarzian(&m, upper(&mut rng))?.norm());
        }
        out.check(Check::below("S(moebius)", moebius, 1e-12));

        let mut cocycle = 0.0_f64;
        let mut pairs = 0;
        while pairs < 100 {
            let f: Jets = if pairs % 2 == 0 {
                Arc::new(Exponential { scale: coef(&mut rng), rate: coef(&mut rng) })
            } else {
                Arc::new(jet_of_rational(&[coef(&mut rng), coef(&mut rng), coef(&mut rng), coef(&mut rng)], &[]))
            };
            let g: Jets =
                Arc::new(jet_of_rational(&[coef(&mut rng), c(1.0, 0.0), coef(&mut rng)], &[(lower(&mut rng), 1)]));
            let z = upper(&mut rng);
            let gz = g.taylor(z, 1)?;
            let fd = f.taylor(gz.value(), 1)?;
            if gz.coeffs[1].norm() < 0.1 || fd.coeffs[1].norm() < 0.1 {
                continue;
            }
            let fg = Composed { outer: f.clone(), inner: g.clone() };
            let lhs = oper::schwarzian(&fg, z)?;
            let rhs = oper::schwarzian(&*f, gz.value())? * gz.coeffs[1] * gz.coeffs[1] + oper::schwarzian(&*g, z)?;
            cocycle = cocycle.max((lhs - rhs).norm());
            pairs += 1;
        }
        out.check(Check::below("cocycle identity, 100 pairs", cocycle, 1e-9));

        let mut ratio = 0.0_f64;
        for _ in 0..5 {
            let q: Jets = Arc::new(jet_of_rational(
                &[coef(&mut rng), coef(&mut rng) * 0.5, coef(&mut rng) * 0.2],
                &[(lower(&mut rng), 4)],
            ));
            let z = upper(&mut rng);
            let f = oper::ratio_of_solutions(&q, Z0, z, &linalg::identity(2), &OdeOptions::default())?;
            let s = oper::schwarzian_of_series(&f, z)?;
            ratio = ratio.max((s - q.value(z)? * 2.0).norm());
        }
        out.check(Check::below("S(y1/y2) - 2Q, 5 random Q", ratio, 1e-7));
        Ok(out)
    }

    fn monodromy_oracle(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        for rep in self.trivial_monodromies()? {
            let mono = rep.monomial_basis()?;
            let expected = self
                .group
                .generators
                .iter()
                .map(|m| if rep.n == 2 { Ok(m.to_cmat()) } else { rep::principal_embedding(rep.n, &m.to_cmat()) })
                .collect::<Result<Vec<_>>>()?;
            // one sign for all generators
            let err = [1.0, -1.0]
                .iter()
                .map(|&s| {
                    mono.iter().zip(&expected).map(|(m, e)| linalg::max_abs(&(m - e * c(s, 0.0)))).fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            let what = if rep.n == 2 { "generators" } else { "Sym^2 of generators" };
            out.check(Check::below(&format!("n={} monodromy vs {what}", rep.n), err, 1e-6));
            out.check(Check::below(&format!("n={} relation residual", rep.n), rep.relation_residual(), 1e-5));
            out.warnings.extend(rep.warnings.iter().cloned());
        }
        Ok(out)
    }

    fn wronskian(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let reps = self.all_monodromies()?;
        let det = reps.iter().map(|r| r.max_det_defect()).fold(0.0, f64::max);
        let drift = reps.iter().map(|r| r.wronskian_drift()).fold(0.0, f64::max);
        out.check(Check::below(&format!("|det - 1| over {} representations", reps.len()), det, 1e-8));
        out.check(Check::below("wronskian drift per leg", drift, 1e-8));
        for r in reps {
            out.warnings.extend(r.warnings.iter().map(|w| format!("n={}: {w}", r.n)));
        }
        Ok(out)
    }

    fn covariants(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let constants = |n: usize| {
            let k = WkConstants::for_order(n);
            match self.perturbation {
                Perturbation::None => k,
                Perturbation::WrongW4Constant => WkConstants { c: k.c * 1.01, ..k },
            }
        };
        let q = sample_q();
        let grid = sample_grid();
        let mut w2_exact = true;
        let (mut w3, mut w4) = (0.0_f64, 0.0_f64);
        for n in 3..=6 {
            let d = oper::ode_from_projective(n, q.clone())?;
            for &z in &grid {
                let series = d.series(z, 2)?;
                let w = oper::wk_from_series_with(n, &series[..3.min(series.len())], &constants(n))?;
                w2_exact &= w.w2 == d.coeffs[0].value(z)?;
                w3 = w3.max(w.w3.map_or(0.0, |x| x.norm()));
                w4 = w4.max(w.w4.map_or(0.0, |x| x.norm()));
            }
        }
        out.check(Check::holds("w2 == Q2 exactly", w2_exact));
        out.check(Check::below("w3 on principal families n=3..6", w3, 1e-10));
        out.check(Check::below("w4 on principal families n=4..6", w4, 1e-10));

        // an operator with every w_k nonzero, and a principal one
        let generic = OperODE::new(
            5,
            vec![
                q.clone(),
                Arc::new(crate::jets::Rational::power(c(0.0, -2.0), -3)),
                Arc::new(Exponential { scale: c(0.2, 0.0), rate: c(0.3, 0.1) }),
                q.clone(),
            ],
        )?;
        let principal = oper::ode_from_projective(4, q)?;
        let mut defect = 0.0_f64;
        for m in &self.group.generators {
            for ode in [&generic, &principal] {
                defect = defect.max(oper::wk_transformation_check_with(ode, m, &grid[..5], &constants(ode.n))?);
            }
        }
        out.check(Check::below("moebius covariance defect", defect, 1e-7));

        // the covariance check itself must notice a wrong constant
        let good = WkConstants::for_order(5);
        let bad = WkConstants { c: good.c * 1.01, ..good };
        let seen = oper::wk_transformation_check_with(&generic, &self.group.generators[0], &grid[..4], &bad)?;
        out.check(Check::above("defect with a perturbed w4 constant", seen, 1e-6));
        Ok(out)
    }

    fn irreducible(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        for r in self.all_monodromies()? {
            let rho = r.to_representation();
            let tag = format!("n={}{}", r.n, if self.is_extra_q(r) { ", Q != 0" } else { "" });
            out.check(Check::equal(&format!("{tag} commutant dimension"), rep::commutant_dimension(&rho) as f64, 1.0));
            out.check(Check::above(&format!("{tag} unitarity margin, radius 3"), rep::unitarity_margin(&rho, 3)?, 0.1));
        }
        Ok(out)
    }

    fn is_extra_q(&self, r: &MonodromyRep) -> bool {
        self.extra.get().and_then(|e| e.as_ref().ok()).and_then(|e| e.last()).is_some_and(|last| std::ptr::eq(last, r))
    }

    fn eichler(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let g = &self.group;
        let ode = OperODE::trivial(5);
        let omega = forms::poincare_series(g, 3, forms::default_seed(3), 5)?;
        let opts = OdeOptions::default();
        let co = oper::eichler_cocycle(&ode, &omega, g, Z0, &opts)?;
        let letters: Vec<i8> = crate::hyp::alphabet(g.genus);
        let pairs: Vec<[i8; 2]> = if self.scale().all_pairs {
            letters.iter().flat_map(|&a| letters.iter().filter(move |&&b| b != -a).map(move |&b| [a, b])).collect()
        } else {
            vec![[1, 2], [2, -1], [3, 4], [-4, 1]]
        };
        let direct = par::map(&pairs, |p| oper::eichler_of_word(&ode, &omega, g, &g.word(p), Z0, &opts));
        let mut worst = 0.0_f64;
        for (p, d) in pairs.iter().zip(direct) {
            let (_, v, _) = d?;
            let (_, pred) = co.extend(p)?;
            let scale = pred.iter().map(|x| x.norm()).fold(1.0, f64::max);
            let err = pred.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(err / scale);
        }
        out.check(Check::below(&format!("cocycle rule on {} generator pairs", pairs.len()), worst, 1e-6));
        let rel = co.relation_vector(g.genus)?.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        out.check(Check::below("relation word cocycle norm", rel, 1e-5));
        let zero = oper::eichler_cocycle(&OperODE::trivial(3), &Zero, g, Z0, &opts)?;
        out.check(Check::holds("zero form gives the zero cocycle", zero.is_zero()));
        out.note("omega terms", omega.terms() as f64);
        Ok(out)
    }

    fn hn_maximality(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let mut all_maximal = true;
        let mut types = 0;
        for n in 2..=self.scale().max_hn_n {
            for g in 2..=3 {
                let r = hn::verify_maximality(n, g)?;
                all_maximal &= r.maximal;
                types += r.types;
            }
        }
        out.check(Check::holds("oper type strictly dominates every admissible type", all_maximal));
        out.note("admissible types enumerated", types as f64);
        let mut match_closed = true;
        let mut match_sums = true;
        for n in 2..=8 {
            for g in 2..=5 {
                let f = hn::filtration_degrees(n, g)?;
                let slopes = hn::oper_hn_type(n, g)?.expanded();
                let mut partial = num_rational::Rational64::from_integer(0);
                for j in 1..=n {
                    let closed = (j * (n - j) * (g - 1)) as i64;
                    partial += slopes[j - 1];
                    match_closed &= f.degs[j - 1] == closed;
                    match_sums &= partial == num_rational::Rational64::from_integer(closed);
                }
            }
        }
        out.check(Check::holds("deg V_j = j(n-j)(g-1), n <= 8, g <= 5", match_closed));
        out.check(Check::holds("partial sums of oper slopes = deg V_j", match_sums));
        Ok(out)
    }

    fn dimensions(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let mut ok = true;
        for n in 2..=8 {
            for g in 2..=5 {
                let d = rep::moduli_dimensions(n, g)?;
                ok &= d.betti == (n * n - 1) * (2 * g - 2);
                ok &= d.hitchin_base == (n * n - 1) * (g - 1);
                ok &= d.betti == 2 * d.hitchin_base;
                ok &= rep::clebsch_gordon_dims(n).iter().sum::<usize>() == n * n - 1;
                ok &= d.eichler_h1.iter().all(|&(q, h)| h == 2 * (2 * q - 1) * (g - 1));
                ok &= d.eichler_h1.len() == n - 1;
            }
        }
        out.check(Check::holds("betti, hitchin base, clebsch-gordon, eichler h1", ok));
        Ok(out)
    }

    fn harmonic(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let g = &self.group;
        let r = self.scale().refinement;
        let mesh = build_equivariant_mesh(g, r)?;
        let nv = mesh.num_vertices();
        out.note("refinement", r as f64);
        out.note("vertices", nv as f64);

        let rho = Representation::fuchsian(g);
        let opts = HarmonicOptions::default();
        let (u, rep) = harmonic_solve(&mesh, &rho, &EquivariantMap::constant_identity(2, nv), &opts)?;
        out.check(Check::holds("fuchsian solve converged", rep.converged));
        out.check(Check::below("fuchsian gradient norm", rep.grad_norm, 1e-8));
        // consecutive energies may differ by roundoff once converged
        out.check(Check::new("relative energy increase per sweep", rep.max_energy_increase(), Relation::AtMost, 1e-12));
        out.note("fuchsian sweeps", rep.iterations as f64);
        out.note("fuchsian energy", rep.energy());
        let (psi, identity) = psi_field(&mesh, &rho, &u)?;
        out.check(Check::below("E = 4 sum w |Psi|^2 relative gap", identity.relative_gap, 1e-12));
        let div = psi_divergence(&mesh, &psi).iter().map(linalg::frobenius).fold(0.0, f64::max);
        out.check(Check::below("mu3 of the harmonic Psi", div, 10.0 * opts.tol));
        let c2 = c2_summary(&mesh, &psi)?;
        out.note("c2 area-weighted mean (re)", c2.0.re);
        out.note("c2 area-weighted mean (im)", c2.0.im);
        out.note("c2 relative spread", c2.1);

        // an irreducible unitary datum: the identity map is harmonic with
        // energy zero, and relaxation from a random map finds it again
        let quaternion = quaternion_datum(g)?;
        let (_, urep) = harmonic_solve(&mesh, &quaternion, &EquivariantMap::constant_identity(2, nv), &opts)?;
        out.check(Check::equal("unitary datum energy at the constant map", urep.energy(), 0.0));
        let unitary = unitary_datum(g)?;
        let mut rng = self.rng(9);
        let start =
            EquivariantMap { values: (0..nv).map(|_| posherm::random_pos_hermitian(2, 0.5, &mut rng)).collect() };
        let (w, wrep) = harmonic_solve(&mesh, &unitary, &start, &opts)?;
        let off = w.values.iter().map(|m| linalg::max_abs(&(m - linalg::identity(2)))).fold(0.0, f64::max);
        out.check(Check::holds("unitary datum from a random start converged", wrep.converged));
        out.check(Check::below("distance of that limit from the constant map", off, 1e-6));

        let max_sweeps = 2000;
        let diag = Representation::abelian(g.genus, linalg::diag(&[c(2.0, 0.0), c(0.5, 0.0)]))?;
        let capped = HarmonicOptions { max_iters: max_sweeps, ..opts };
        let (_, drep) = harmonic_solve(&mesh, &diag, &EquivariantMap::constant_identity(2, nv), &capped)?;
        out.check(Check::holds("diagonal datum trips the divergence flag", drep.diverged));
        out.note("diagonal datum sweeps", drep.iterations as f64);
        out.note("diagonal datum converged", f64::from(u8::from(drep.converged)));
        out.note("diagonal datum final log cond", *drep.cond_trace.last().unwrap_or(&0.0));

        let unip = Representation::abelian(
            g.genus,
            linalg::from_rows(&[&[c(1.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]]),
        )?;
        let slow = HarmonicOptions { divergence: DivergenceConfig { slope: 1e-4, window: 200 }, ..capped };
        let (_, prep) = harmonic_solve(&mesh, &unip, &EquivariantMap::constant_identity(2, nv), &slow)?;
        out.check(Check::holds("unipotent datum trips the divergence flag (slope 1e-4)", prep.diverged));
        out.note("unipotent datum sweeps", prep.iterations as f64);
        Ok(out)
    }

    fn gauge(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let mesh = build_equivariant_mesh(&self.group, 1)?;
        let mut rng = self.rng(10);
        let a = gauge::random_connection(&mesh, 2, 0.3, &mut rng);
        let phi = gauge::random_higgs(&mesh, 2, 0.3, &mut rng);
        let steps = self.scale().flow_steps;
        let trace = gauge::ymh_flow(&mesh, &a, &phi, steps, 0.05, 0.0)?;
        out.check(Check::holds(&format!("ymh nonincreasing over {steps} damped steps"), trace.is_monotone()));
        let (first, last) = (&trace.rows[0], &trace.rows[trace.rows.len() - 1]);
        out.note("ymh initial", first.ymh);
        out.note("ymh final", last.ymh);
        out.note("J final", last.j);

        let grad = gauge::ymh_gradient(&mesh, &a, &phi)?;
        let mut fd_err = 0.0_f64;
        for _ in 0..20 {
            let de: Vec<CMat> = (0..mesh.edges.len()).map(|_| gauge::random_skew(2, 1.0, &mut rng)).collect();
            let dp: Vec<CMat> = (0..mesh.num_vertices()).map(|_| random_traceless(2, &mut rng)).collect();
            let h = 1e-5;
            let eval = |t: f64| -> Result<f64> {
                let (a2, p2) = gauge::displace(&a, &phi, &de, &dp, t);
                Ok(gauge::ymh_value(&mesh, &a2, &p2)?.0)
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            let an: f64 = grad.edges.iter().zip(&de).map(|(x, y)| linalg::inner(x, y)).sum::<f64>()
                + grad.vertices.iter().zip(&dp).map(|(x, y)| linalg::inner(x, y)).sum::<f64>();
            fd_err = fd_err.max((fd - an).abs() / an.abs().max(1e-3));
        }
        out.check(Check::below("gradient vs finite differences, 20 directions", fd_err, 1e-4));

        let mut hitchin = 0.0_f64;
        for n in 2..=4 {
            for _ in 0..10 {
                let p = random_traceless(n, &mut rng);
                let gm = random_traceless(n, &mut rng) + linalg::identity(n) * c(3.0, 0.0);
                let conj = &gm * &p * linalg::inverse(&gm)?;
                for (x, y) in gauge::hitchin_map_point(&p).iter().zip(gauge::hitchin_map_point(&conj)) {
                    hitchin = hitchin.max((x - y).norm());
                }
            }
        }
        out.check(Check::below("hitchin map conjugation invariance", hitchin, 1e-10));

        let trials = self.scale().simpson_trials;
        for n in 2..=4 {
            let cst = gauge::nilpotent_constant(n, trials, self.seed + n as u64);
            out.check(Check::above(&format!("simpson constant, n={n}, {trials} samples"), cst, 0.0));
        }

        let flat = DiscreteConnection::trivial(2, &mesh);
        let zero = DiscreteHiggs::zero(2, &mesh);
        out.check(Check::equal("J with f = 0 = mu", gauge::donaldson_j(&mesh, &flat, &zero, 0.0)?, 0.0));
        let mu = 0.7;
        let fm = vec![linalg::identity(2) * c(mu, 0.0); mesh.faces.len()];
        out.check(Check::equal("J with f = mu I", gauge::j_of_field(&mesh, &fm, mu), 0.0));
        out.check(Check::above("J at random data", gauge::donaldson_j(&mesh, &a, &phi, 0.0)?, 0.0));
        Ok(out)
    }

    fn determinism(&self) -> Result<Outcome> {
        let mut out = Outcome::new();
        let first = json::to_string(&determinism_report(self.seed)?, true)?;
        let second = json::to_string(&determinism_report(self.seed)?, true)?;
        out.check(Check::holds("repeated runs give byte-identical json", first == second));
        let single = par::with_threads(1, || determinism_report(self.seed))?;
        let single = json::to_string(&single, true)?;
        out.check(Check::holds("one thread and the default pool agree byte for byte", first == single));
        out.note("report bytes", first.len() as f64);
        Ok(out)
    }
}

/// A rational projective connection, holomorphic on the upper half-plane.
pub fn sample_q() -> Jets {
    Arc::new(jet_of_rational(&[c(0.3, 0.1), c(-0.2, 0.05), c(0.1, 0.0)], &[(c(0.2, -1.5), 4)]))
}

/// Twenty points along a segment in the upper half-plane.
pub fn sample_grid() -> Vec<C64> {
    (0..20).map(|k| c(-0.5 + 0.05 * k as f64, 0.6 + 0.04 * k as f64)).collect()
}

fn random_traceless(n: usize, rng: &mut impl Rng) -> CMat {
    linalg::traceless(&CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
}

/// The quaternion group in `SU(2)`: irreducible, with exactly representable
/// entries so that `ρ(γ)ρ(γ)* = I` holds in floating point.
fn quaternion_datum(g: &FuchsianGroup) -> Result<Representation> {
    let i = linalg::diag(&[c(0.0, 1.0), c(0.0, -1.0)]);
    let j = linalg::real2(0.0, 1.0, -1.0, 0.0);
    commuting_pairs(g, i, j)
}

/// An irreducible representation into `SU(2)`.
fn unitary_datum(g: &FuchsianGroup) -> Result<Representation> {
    let x = linalg::from_rows(&[&[c(0.0, 0.7), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, -0.7)]]);
    let y = linalg::from_rows(&[&[c(0.0, 0.0), c(0.5, 0.0)], &[c(-0.5, 0.0), c(0.0, 0.0)]]);
    commuting_pairs(g, linalg::skew_exp(&x), linalg::skew_exp(&y))
}

/// `a_1 ↦ x`, `a_2 ↦ y`, every other generator to the identity; the
/// surface relation holds for any `x, y`.
fn commuting_pairs(g: &FuchsianGroup, x: CMat, y: CMat) -> Result<Representation> {
    if g.genus < 2 {
        return Err(Error::InvalidArgument("need genus at least 2".into()));
    }
    let mut images = vec![linalg::identity(2); 2 * g.genus];
    images[0] = x;
    images[2] = y;
    Representation::new(2, g.genus, images)
}

/// Area-weighted mean of `c_2` of the Higgs field and its relative spread.
fn c2_summary(mesh: &EquivariantMesh, psi: &crate::harmonic::PsiField) -> Result<(C64, f64)> {
    let higgs = higgs_from_psi(mesh, psi)?;
    let vals: Vec<C64> = higgs.iter().map(|h| gauge::hitchin_map_point(&h.phi)[0]).collect();
    let area: f64 = mesh.faces.iter().map(|f| f.area).sum();
    let mean = vals.iter().zip(&mesh.faces).map(|(v, f)| v * f.area).sum::<C64>() / area;
    let var = vals.iter().zip(&mesh.faces).map(|(v, f)| (v - mean).norm_sqr() * f.area).sum::<f64>() / area;
    Ok((mean, var.sqrt() / mean.norm().max(1e-300)))
}

/// A small mixed report for the determinism check.
pub fn determinism_report(seed: u64) -> Result<serde_json::Value> {
    let g = octagon_group();
    let mono = oper::monodromy(&OperODE::trivial(2), &g, Z0, &OdeOptions::default())?;
    let mesh = build_equivariant_mesh(&g, 1)?;
    let (_, hrep) = harmonic_solve(
        &mesh,
        &Representation::fuchsian(&g),
        &EquivariantMap::constant_identity(2, mesh.num_vertices()),
        &HarmonicOptions { max_iters: 20, ..Default::default() },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gauge::random_connection(&mesh, 2, 0.3, &mut rng);
    let phi = gauge::random_higgs(&mesh, 2, 0.3, &mut rng);
    let trace = gauge::ymh_flow(&mesh, &a, &phi, 5, 0.05, 0.0)?;
    let probe = gauge::simpson_bound_probe(3, 2.0, 500, seed)?;
    let omega = forms::poincare_series(&g, 2, forms::default_seed(2), 2)?;
    Ok(json!({
        "monodromy": mono.report(),
        "harmonic": hrep,
        "flow": trace.csv(),
        "simpson": probe,
        "form_at_i": [omega.value(Z0)?.re, omega.value(Z0)?.im],
        "moebius": Moebius::IDENTITY.entries(),
    }))
}

/// Runs the battery at `level`.
pub fn run_suite(level: Level) -> SuiteReport {
    Battery::new(level).run_all()
}
