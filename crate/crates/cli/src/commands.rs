//! One function per command: resolved parameters in, report and optional CSV
//! out.

use std::sync::Arc;

use hodge_core::gauge::{self, DiscreteHiggs};
use hodge_core::harmonic::{
    build_equivariant_mesh, harmonic_solve, psi_divergence, psi_field, DivergenceConfig, EquivariantMap,
    HarmonicOptions,
};
use hodge_core::hyp::{octagon_group, FuchsianGroup};
use hodge_core::jets::{JetProvider, Jets, Scaled, Zero};
use hodge_core::linalg::{self, c, CMat};
use hodge_core::oper::{self, OdeOptions, OperODE};
use hodge_core::rep::{self, Representation};
use hodge_core::suite::{self, Battery, Level, Perturbation};
use hodge_core::{forms, hn, Complex64, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Command, Params};

pub struct Output {
    pub report: Value,
    pub csv: Option<String>,
    /// Criteria that failed, for the suite.
    pub failed: Vec<usize>,
}

impl Output {
    fn report(report: Value) -> Self {
        Output { report, csv: None, failed: Vec::new() }
    }

    fn with_csv(report: Value, csv: String) -> Self {
        Output { report, csv: Some(csv), failed: Vec::new() }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn get<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| invalid(format!("missing {key}")))
}

fn z0(p: &Params) -> Result<Complex64> {
    let [re, im] = get(p.z0, "z0")?;
    Ok(Complex64::new(re, im))
}

fn ode_options(p: &Params) -> Result<OdeOptions> {
    let tol = get(p.tol, "tol")?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid(format!("tol {tol} must lie in (0, 1)")));
    }
    Ok(OdeOptions::with_tol(tol))
}

fn cx(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn run(cmd: Command, p: &Params) -> Result<Output> {
    let g = octagon_group();
    match cmd {
        Command::OperMonodromy => oper_monodromy(&g, p),
        Command::OperEichler => oper_eichler(&g, p),
        Command::OperWk => oper_wk(&g, p),
        Command::HnVerify => hn_verify(p),
        Command::RepAnalyze => rep_analyze(&g, p),
        Command::HarmonicSolve => harmonic(&g, p),
        Command::GaugeFlow => gauge_flow(&g, p),
        Command::FormsBuild => forms_build(&g, p),
        Command::Dims => dims(p),
        Command::Suite => run_suite(p),
    }
}

/// `Q ≡ 0`, or `Q = 0.1 P` with `P` the truncated weight-4 Poincaré series.
fn projective_connection(g: &FuchsianGroup, p: &Params) -> Result<Jets> {
    match p.q.as_deref() {
        Some("zero") => Ok(Arc::new(Zero)),
        Some("poincare") => {
            let series: Jets =
                Arc::new(forms::poincare_series(g, 2, forms::default_seed(2), get(p.radius, "radius")?)?);
            Ok(Arc::new(Scaled(c(0.1, 0.0), series)))
        }
        other => Err(invalid(format!("Q must be zero or poincare, got {other:?}"))),
    }
}

fn oper_monodromy(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    let ode = oper::ode_from_projective(n, projective_connection(g, p)?)?;
    let m = oper::monodromy(&ode, g, z0(p)?, &ode_options(p)?)?;
    Ok(Output::report(m.report()))
}

fn oper_eichler(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    if n < 3 || n % 2 == 0 {
        return Err(invalid(format!("Eichler integration needs odd n ≥ 3, got {n}")));
    }
    let q = (n as u32).div_ceil(2);
    let omega = forms::poincare_series(g, q, forms::default_seed(q), get(p.radius, "radius")?)?;
    let co = oper::eichler_cocycle(&OperODE::trivial(n), &omega, g, z0(p)?, &ode_options(p)?)?;
    let relation = co.relation_vector(g.genus)?;
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let vectors: Vec<Value> = co
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| json!({"word": hodge_core::hyp::letter_name(i as i8 + 1), "vector": v.iter().map(|x| cx(*x)).collect::<Vec<_>>()}))
        .collect();
    Ok(Output::report(json!({
        "n": n,
        "q": co.q,
        "z0": cx(co.z0),
        "omega_terms": omega.terms(),
        "generators": vectors,
        "relation_vector": relation.iter().map(|x| cx(*x)).collect::<Vec<_>>(),
        "relation_norm": norm(&relation),
    })))
}

fn oper_wk(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    if !(3..=6).contains(&n) {
        return Err(invalid(format!("w_k of the principal family needs 3 ≤ n ≤ 6, got {n}")));
    }
    let q = suite::sample_q();
    let ode = oper::ode_from_projective(n, q)?;
    let grid = suite::sample_grid();
    let mut csv = String::from("z_re,z_im,w2_re,w2_im,w3_re,w3_im,w4_re,w4_im\n");
    let (mut w3, mut w4) = (0.0_f64, 0.0_f64);
    let mut w2_exact = true;
    for &z in &grid {
        let w = oper::wk_covariants(&ode, z)?;
        w2_exact &= w.w2 == ode.coefficient(2).expect("order ≥ 2").value(z)?;
        let (a, b) = (w.w3.unwrap_or_default(), w.w4.unwrap_or_default());
        w3 = w3.max(a.norm());
        w4 = w4.max(b.norm());
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            z.re, z.im, w.w2.re, w.w2.im, a.re, a.im, b.re, b.im
        ));
    }
    let mut defect = 0.0_f64;
    for m in &g.generators {
        defect = defect.max(oper::wk_transformation_check(&ode, m, &grid[..5])?);
    }
    Ok(Output::with_csv(
        json!({
            "n": n,
            "samples": grid.len(),
            "w2_equals_q2": w2_exact,
            "w3_max": w3,
            "w4_max": if n >= 4 { json!(w4) } else { Value::Null },
            "covariance_defect": defect,
        }),
        csv,
    ))
}

fn hn_verify(p: &Params) -> Result<Output> {
    let (n, g) = (get(p.n, "n")?, get(p.g, "g")?);
    let r = hn::verify_maximality(n, g)?;
    let types = hn::enumerate_admissible_types(n, g)?;
    let mut report = serde_json::to_value(&r)?;
    report["oper_type"] = json!(hn::oper_hn_type(n, g)?.to_string());
    report["filtration_degrees"] = json!(hn::filtration_degrees(n, g)?.degs);
    Ok(Output::with_csv(report, hn::types_csv(&types)))
}

fn rep_analyze(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    let m = oper::monodromy(&OperODE::trivial(n), g, Complex64::new(0.0, 1.0), &ode_options(p)?)?;
    let rho = m.to_representation();
    let mono = m.monomial_basis()?;
    let mut principal_err = f64::INFINITY;
    for s in [1.0, -1.0] {
        let mut worst = 0.0_f64;
        for (x, gen) in mono.iter().zip(&g.generators) {
            let e = rep::principal_embedding(n, &gen.to_cmat())? * c(s, 0.0);
            worst = worst.max(linalg::max_abs(&(x - e)));
        }
        principal_err = principal_err.min(worst);
    }
    let mut report = rho.to_json_value();
    report["commutant_dimension"] = json!(rep::commutant_dimension(&rho));
    report["unitarity_margin"] = json!(rep::unitarity_margin(&rho, get(p.radius, "radius")?)?);
    report["relation_residual"] = json!(m.relation_residual());
    report["det_defect"] = json!(m.max_det_defect());
    report["principal_embedding_error"] = json!(principal_err);
    report["dimensions"] = serde_json::to_value(rep::moduli_dimensions(n, g.genus)?)?;
    Ok(Output::report(report))
}

fn representation(g: &FuchsianGroup, name: &str, n: usize) -> Result<Representation> {
    let two = |what: &str| if n == 2 { Ok(()) } else { Err(invalid(format!("the {what} datum has n = 2, got {n}"))) };
    match name {
        "fuchsian" => Representation::principal(g, n),
        "trivial" => Ok(Representation::trivial(n, g.genus)),
        "diagonal" => {
            two(name)?;
            Representation::abelian(g.genus, linalg::diag(&[c(2.0, 0.0), c(0.5, 0.0)]))
        }
        "unipotent" => {
            two(name)?;
            Representation::abelian(g.genus, linalg::real2(1.0, 1.0, 0.0, 1.0))
        }
        other => Err(invalid(format!("rep must be fuchsian, trivial, diagonal or unipotent, got {other:?}"))),
    }
}

fn harmonic(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    let rho = representation(g, p.rep.as_deref().unwrap_or_default(), n)?;
    let mesh = build_equivariant_mesh(g, get(p.refinement, "refinement")?)?;
    let opts = HarmonicOptions {
        tol: get(p.tol, "tol")?,
        max_iters: get(p.max_iters, "max_iters")?,
        divergence: DivergenceConfig { slope: get(p.slope, "slope")?, window: get(p.window, "window")? },
        ..Default::default()
    };
    let (u, mut rep) = harmonic_solve(&mesh, &rho, &EquivariantMap::constant_identity(n, mesh.num_vertices()), &opts)?;
    let (psi, identity) = psi_field(&mesh, &rho, &u)?;
    rep.psi_identity_gap = Some(identity.relative_gap);
    let div = psi_divergence(&mesh, &psi).iter().map(linalg::frobenius).fold(0.0, f64::max);
    let csv = rep.energy_csv();
    let mut report = serde_json::to_value(&rep)?;
    report["energy"] = json!(rep.energy());
    report["psi_divergence_sup"] = json!(div);
    report["mesh"] = json!({
        "vertices": mesh.num_vertices(),
        "edges": mesh.edges.len(),
        "faces": mesh.faces.len(),
        "cycle_residual": mesh.cycle_residual,
    });
    Ok(Output::with_csv(report, csv))
}

fn gauge_flow(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let n = get(p.n, "n")?;
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    let dt = get(p.dt, "dt")?;
    if !(dt > 0.0) {
        return Err(invalid(format!("dt {dt} must be positive")));
    }
    let mesh = build_equivariant_mesh(g, get(p.refinement, "refinement")?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(get(p.seed, "seed")?);
    let a = gauge::random_connection(&mesh, n, 0.3, &mut rng);
    let phi = gauge::random_higgs(&mesh, n, 0.3, &mut rng);
    let trace = gauge::ymh_flow(&mesh, &a, &phi, get(p.steps, "steps")?, dt, get(p.mu, "mu")?)?;
    let first = &trace.rows[0];
    let last = &trace.rows[trace.rows.len() - 1];
    Ok(Output::with_csv(
        json!({
            "n": n,
            "faces": mesh.faces.len(),
            "steps": trace.rows.len() - 1,
            "monotone": trace.is_monotone(),
            "initial": first,
            "final": last,
            "hitchin_mean": hitchin_mean(&trace.phi).iter().map(|z| cx(*z)).collect::<Vec<_>>(),
        }),
        trace.csv(),
    ))
}

/// Vertex average of `c_2, ..., c_n`.
fn hitchin_mean(phi: &DiscreteHiggs) -> Vec<Complex64> {
    let all: Vec<Vec<Complex64>> = phi.values.iter().map(|m: &CMat| gauge::hitchin_map_point(m)).collect();
    let k = all.first().map_or(0, Vec::len);
    (0..k).map(|j| all.iter().map(|v| v[j]).sum::<Complex64>() / all.len() as f64).collect()
}

fn forms_build(g: &FuchsianGroup, p: &Params) -> Result<Output> {
    let k = get(p.k, "k")?;
    let seed = forms::SeedSpec::default_for(k);
    let form = forms::poincare_series(g, k, Arc::new(seed.build()?), get(p.radius, "radius")?)?;
    let samples = forms::default_samples(g);
    let residual = forms::automorphy_residual(&form, k, &samples)?;
    let at_i = form.value(Complex64::new(0.0, 1.0))?;
    Ok(Output::with_csv(
        json!({
            "descriptor": form.to_spec(&seed),
            "terms": form.terms(),
            "automorphy_residual": residual,
            "value_at_i": cx(at_i),
        }),
        forms::sample_csv(&form, &suite::sample_grid(), 2)?,
    ))
}

fn dims(p: &Params) -> Result<Output> {
    let (n, g) = (get(p.n, "n")?, get(p.g, "g")?);
    let mut report = serde_json::to_value(rep::moduli_dimensions(n, g)?)?;
    report["clebsch_gordon"] = json!(rep::clebsch_gordon_dims(n));
    Ok(Output::report(report))
}

fn run_suite(p: &Params) -> Result<Output> {
    let level: Level = p.level.as_deref().unwrap_or_default().parse()?;
    let perturbation = match p.perturb.as_deref() {
        Some("none") => Perturbation::None,
        Some("wrong-w4-constant") => Perturbation::WrongW4Constant,
        other => return Err(invalid(format!("perturb must be none or wrong-w4-constant, got {other:?}"))),
    };
    let battery = Battery::new(level).with_perturbation(perturbation).with_seed(get(p.seed, "seed")?);
    let report = battery.run_with(|c| print!("{c}"));
    Ok(Output { failed: report.failed(), report: serde_json::to_value(&report)?, csv: None })
}
