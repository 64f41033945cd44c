//! Lattice gauge theory on the glued mesh: curvature from face holonomy,
//! moment maps, the Yang–Mills–Higgs functional and its damped gradient
//! flow, the Hitchin map, the `J` functional and a probe of the
//! commutator inequality for matrices with bounded spectrum.
//!
//! `U_e` transports from the fiber at `dst` to the fiber at `src`. The
//! face quantities live in the frame of corner 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonic::psi::fit_one_form;
use crate::harmonic::{EquivariantMesh, FaceSide};
use crate::linalg::{self, c, CMat, C64};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteConnection {
    pub edges: Vec<CMat>,
}

impl DiscreteConnection {
    pub fn trivial(n: usize, mesh: &EquivariantMesh) -> Self {
        DiscreteConnection { edges: vec![linalg::identity(n); mesh.edges.len()] }
    }

    pub fn validate(&self) -> Result<()> {
        for (e, u) in self.edges.iter().enumerate() {
            let defect = linalg::max_abs(&(u.adjoint() * u - linalg::identity(u.nrows())));
            if defect > 1e-10 {
                return Err(Error::InvalidArgument(format!("edge {e} is not unitary (defect {defect:e})")));
            }
        }
        Ok(())
    }

    /// `U_e ↦ g_src U_e g_dst*`.
    pub fn gauge_transform(&self, mesh: &EquivariantMesh, g: &[CMat]) -> Self {
        let edges = mesh.edges.iter().zip(&self.edges).map(|(ed, u)| &g[ed.src] * u * g[ed.dst].adjoint()).collect();
        DiscreteConnection { edges }
    }

    fn side(&self, s: &FaceSide) -> CMat {
        if s.forward {
            self.edges[s.edge].clone()
        } else {
            self.edges[s.edge].adjoint()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteHiggs {
    pub values: Vec<CMat>,
}

impl DiscreteHiggs {
    pub fn zero(n: usize, mesh: &EquivariantMesh) -> Self {
        DiscreteHiggs { values: vec![CMat::zeros(n, n); mesh.num_vertices()] }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, p) in self.values.iter().enumerate() {
            let t = linalg::trace(p).norm();
            if t > 1e-10 {
                return Err(Error::InvalidArgument(format!("Higgs field at vertex {v} has trace {t:e}")));
            }
        }
        Ok(())
    }

    pub fn gauge_transform(&self, g: &[CMat]) -> Self {
        DiscreteHiggs { values: self.values.iter().zip(g).map(|(p, gv)| gv * p * gv.adjoint()).collect() }
    }
}

fn check(mesh: &EquivariantMesh, a: &DiscreteConnection) -> Result<()> {
    if a.edges.len() != mesh.edges.len() {
        return Err(Error::InvalidArgument(format!("{} edge values for {} edges", a.edges.len(), mesh.edges.len())));
    }
    Ok(())
}

fn check_higgs(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs) -> Result<()> {
    check(mesh, a)?;
    if phi.values.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} Higgs values for {} vertices",
            phi.values.len(),
            mesh.num_vertices()
        )));
    }
    Ok(())
}

/// Side transports `M_k` and the corner transports `V_0 = I, V_1 = M_0,
/// V_2 = M_0 M_1` into the frame of corner 0, followed by the holonomy.
fn face_transports(mesh: &EquivariantMesh, a: &DiscreteConnection, f: usize) -> ([CMat; 3], [CMat; 3], CMat) {
    let sides = &mesh.faces[f].sides;
    let m = [a.side(&sides[0]), a.side(&sides[1]), a.side(&sides[2])];
    let n = m[0].nrows();
    let v = [linalg::identity(n), m[0].clone(), &m[0] * &m[1]];
    let h = &v[2] * &m[2];
    (m, v, h)
}

pub fn face_holonomy(mesh: &EquivariantMesh, a: &DiscreteConnection, f: usize) -> CMat {
    face_transports(mesh, a, f).2
}

/// `F_f = log(hol_f) / area_f` with the principal logarithm.
pub fn face_curvature(mesh: &EquivariantMesh, a: &DiscreteConnection) -> Result<Vec<CMat>> {
    check(mesh, a)?;
    let out = par::map_range(mesh.faces.len(), |f| {
        let h = face_holonomy(mesh, a, f);
        linalg::unitary_log(&h).map(|l| linalg::skew_part(&l) / c(mesh.faces[f].area, 0.0))
    });
    out.into_iter().collect()
}

#[derive(Clone, Debug)]
pub struct MomentResiduals {
    /// Per face, `F + ½[Ψ,Ψ]` as a density.
    pub mu1: Vec<CMat>,
    /// Per face, the covariant circulation of `Ψ`.
    pub mu2: Vec<CMat>,
    /// Per vertex, the weighted covariant divergence of `Ψ`.
    pub mu3: Vec<CMat>,
    pub mu1_norm: f64,
    pub mu2_norm: f64,
    pub mu3_norm: f64,
    pub mu3_sup: f64,
}

/// Side values of `Ψ` oriented along the face boundary, each in the frame
/// of the side's starting corner.
fn side_psi(a: &DiscreteConnection, psi: &[CMat], s: &FaceSide) -> CMat {
    if s.forward {
        psi[s.edge].clone()
    } else {
        let u = &a.edges[s.edge];
        -(u.adjoint() * &psi[s.edge] * u)
    }
}

/// Discrete moment maps of `(A, Ψ)` for a hermitian edge field `Ψ_e` given
/// in the frame of each edge's source; the reversed edge carries
/// `−U_e* Ψ_e U_e`.
pub fn moment_residuals(mesh: &EquivariantMesh, a: &DiscreteConnection, psi: &[CMat]) -> Result<MomentResiduals> {
    check(mesh, a)?;
    if psi.len() != mesh.edges.len() {
        return Err(Error::InvalidArgument(format!("{} Ψ values for {} edges", psi.len(), mesh.edges.len())));
    }
    let per_face = par::map_range(mesh.faces.len(), |f| -> Result<(CMat, CMat)> {
        let face = &mesh.faces[f];
        let (_, v, h) = face_transports(mesh, a, f);
        let vals: Vec<CMat> = (0..3).map(|k| &v[k] * side_psi(a, psi, &face.sides[k]) * v[k].adjoint()).collect();
        let dz: Vec<C64> = (0..3).map(|k| face.positions[(k + 1) % 3] - face.positions[k]).collect();
        let (fa, fb) = fit_one_form(&dz, &vals, f)?;
        let log_h = linalg::skew_part(&linalg::unitary_log(&h)?);
        let area = c(face.area, 0.0);
        let mu1 = (log_h + linalg::commutator(&fa, &fb) * c(face.coord_area, 0.0)) / area;
        let mu2 = vals.iter().fold(CMat::zeros(h.nrows(), h.nrows()), |acc, x| acc + x) / area;
        Ok((mu1, mu2))
    });
    let mut mu1 = Vec::with_capacity(per_face.len());
    let mut mu2 = Vec::with_capacity(per_face.len());
    for r in per_face {
        let (x, y) = r?;
        mu1.push(x);
        mu2.push(y);
    }
    let n = a.edges.first().map_or(0, |u| u.nrows());
    let mut mu3 = vec![CMat::zeros(n, n); mesh.num_vertices()];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let w = c(ed.weight, 0.0);
        mu3[ed.src] += &psi[e] * w;
        mu3[ed.dst] += side_psi(a, psi, &FaceSide { edge: e, forward: false }) * w;
    }
    let weighted = |fields: &[CMat]| -> f64 {
        mesh.faces.iter().zip(fields).map(|(f, m)| f.area * linalg::frobenius_sqr(m)).sum::<f64>().sqrt()
    };
    Ok(MomentResiduals {
        mu1_norm: weighted(&mu1),
        mu2_norm: weighted(&mu2),
        mu3_norm: mu3.iter().map(linalg::frobenius_sqr).sum::<f64>().sqrt(),
        mu3_sup: mu3.iter().map(linalg::frobenius).fold(0.0, f64::max),
        mu1,
        mu2,
        mu3,
    })
}

/// `Ψ_e = Φ̄_e dz_e + (Φ̄_e dz_e)*` with `Φ̄_e` the average of the endpoint
/// values transported to `src`.
pub fn psi_from_higgs(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs) -> Vec<CMat> {
    mesh.edges
        .iter()
        .enumerate()
        .map(|(e, ed)| {
            let u = &a.edges[e];
            let avg = (&phi.values[ed.src] + u * &phi.values[ed.dst] * u.adjoint()) * c(0.5, 0.0);
            let x = avg * ed.dz;
            &x + x.adjoint()
        })
        .collect()
}

/// `f_f = i F_f + avg_k V_k [Φ_k, Φ_k*] V_k*`.
pub fn f_field(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs) -> Result<Vec<CMat>> {
    check_higgs(mesh, a, phi)?;
    let out = par::map_range(mesh.faces.len(), |f| face_f(mesh, a, phi, f).map(|(x, _, _)| x));
    out.into_iter().collect()
}

/// Returns `(f, V, hol)`.
fn face_f(
    mesh: &EquivariantMesh,
    a: &DiscreteConnection,
    phi: &DiscreteHiggs,
    f: usize,
) -> Result<(CMat, [CMat; 3], CMat)> {
    let face = &mesh.faces[f];
    let (_, v, h) = face_transports(mesh, a, f);
    let log_h = linalg::unitary_log(&h)?;
    let mut x = log_h * c(0.0, 1.0 / face.area);
    for k in 0..3 {
        let p = &phi.values[face.corners[k]];
        let br = linalg::commutator(p, &p.adjoint());
        x += &v[k] * br * v[k].adjoint() * c(1.0 / 3.0, 0.0);
    }
    Ok((linalg::hermitian_part(&x), v, h))
}

/// `Σ_f area_f ‖f_f‖²` and the `f`-field.
pub fn ymh_value(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs) -> Result<(f64, Vec<CMat>)> {
    let f = f_field(mesh, a, phi)?;
    let v = mesh.faces.iter().zip(&f).map(|(face, x)| face.area * linalg::frobenius_sqr(x)).sum();
    Ok((v, f))
}

/// Adds the gradient of `X ↦ ⟨G, X⟩` through `X = M_0 ⋯ M_{m−1}` with
/// respect to `U_e ↦ exp(E) U_e` to `out`.
fn product_gradient(a: &DiscreteConnection, sides: &[FaceSide], m: &[CMat], g: &CMat, out: &mut [(usize, CMat)]) {
    let n = g.nrows();
    let len = sides.len();
    let mut suffix = vec![linalg::identity(n); len + 1];
    for j in (0..len).rev() {
        suffix[j] = &m[j] * &suffix[j + 1];
    }
    let mut prefix = linalg::identity(n);
    for j in 0..len {
        let s = &suffix[j + 1];
        let u = &a.edges[sides[j].edge];
        let grad = if sides[j].forward {
            prefix.adjoint() * g * s.adjoint() * u.adjoint()
        } else {
            -(u * prefix.adjoint() * g * s.adjoint())
        };
        out[j] = (sides[j].edge, linalg::skew_part(&grad));
        prefix = &prefix * &m[j];
    }
}

#[derive(Clone, Debug)]
pub struct YmhGradient {
    /// Skew-hermitian traceless, per edge.
    pub edges: Vec<CMat>,
    /// Traceless, per vertex.
    pub vertices: Vec<CMat>,
}

impl YmhGradient {
    pub fn norm_sqr(&self) -> f64 {
        self.edges.iter().chain(&self.vertices).map(linalg::frobenius_sqr).sum()
    }
}

/// Gradient of `ymh_value` for `U_e ↦ exp(E_e) U_e`, `Φ_v ↦ Φ_v + δΦ_v`
/// under the real inner product `Re tr(X*Y)`.
pub fn ymh_gradient(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs) -> Result<YmhGradient> {
    check_higgs(mesh, a, phi)?;
    let n = phi.values.first().map_or(0, |p| p.nrows());
    let per_face = par::map_range(mesh.faces.len(), |f| -> Result<(Vec<(usize, CMat)>, [CMat; 3])> {
        let face = &mesh.faces[f];
        let (ff, v, h) = face_f(mesh, a, phi, f)?;
        let (m, _, _) = face_transports(mesh, a, f);
        let area = face.area;
        let mut contrib = Vec::with_capacity(6);
        // holonomy
        let k = ff.clone() * c(0.0, -2.0);
        let gh = linalg::log_frechet_adjoint(&h, &k)?;
        let mut buf = vec![(0, CMat::zeros(n, n)); 3];
        product_gradient(a, &face.sides, &m, &gh, &mut buf);
        contrib.extend(buf.iter().cloned());
        // transports of the corner brackets
        let mut phis: [CMat; 3] = std::array::from_fn(|_| CMat::zeros(n, n));
        for k in 0..3 {
            let p = &phi.values[face.corners[k]];
            let br = linalg::commutator(p, &p.adjoint());
            if k > 0 {
                let gv = &ff * &v[k] * &br * c(4.0 / 3.0 * area, 0.0);
                let mut buf = vec![(0, CMat::zeros(n, n)); k];
                product_gradient(a, &face.sides[..k], &m[..k], &gv, &mut buf);
                contrib.extend(buf);
            }
            let fk = v[k].adjoint() * &ff * &v[k];
            phis[k] = linalg::commutator(&fk, p) * c(4.0 / 3.0 * area, 0.0);
        }
        Ok((contrib, phis))
    });
    let mut edges = vec![CMat::zeros(n, n); mesh.edges.len()];
    let mut vertices = vec![CMat::zeros(n, n); mesh.num_vertices()];
    for (f, r) in per_face.into_iter().enumerate() {
        let (contrib, phis) = r?;
        for (e, g) in contrib {
            edges[e] += g;
        }
        for k in 0..3 {
            vertices[mesh.faces[f].corners[k]] += &phis[k];
        }
    }
    for g in edges.iter_mut().chain(vertices.iter_mut()) {
        *g = linalg::traceless(g);
    }
    Ok(YmhGradient { edges, vertices })
}

/// `(exp(t E) U, Φ + t δΦ)`, re-unitarized by polar projection.
pub fn displace(
    a: &DiscreteConnection,
    phi: &DiscreteHiggs,
    de: &[CMat],
    dphi: &[CMat],
    t: f64,
) -> (DiscreteConnection, DiscreteHiggs) {
    let edges =
        a.edges.iter().zip(de).map(|(u, e)| linalg::polar_unitary(&(linalg::skew_exp(&(e * c(t, 0.0))) * u))).collect();
    let values = phi.values.iter().zip(dphi).map(|(p, d)| linalg::traceless(&(p + d * c(t, 0.0)))).collect();
    (DiscreteConnection { edges }, DiscreteHiggs { values })
}

#[derive(Clone, Debug)]
pub struct FlowStep {
    pub a: DiscreteConnection,
    pub phi: DiscreteHiggs,
    pub ymh: f64,
    pub dt: f64,
    pub halvings: usize,
}

pub const MAX_HALVINGS: usize = 30;

/// Explicit Euler step along the negative gradient, halving `dt` until YMH
/// does not increase.
pub fn ymh_flow_step(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs, dt: f64) -> Result<FlowStep> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let (y0, _) = ymh_value(mesh, a, phi)?;
    let grad = ymh_gradient(mesh, a, phi)?;
    if y0 == 0.0 || grad.norm_sqr() == 0.0 {
        return Ok(FlowStep { a: a.clone(), phi: phi.clone(), ymh: y0, dt, halvings: 0 });
    }
    let mut t = dt;
    for halvings in 0..=MAX_HALVINGS {
        let (a1, p1) = displace(a, phi, &grad.edges, &grad.vertices, -t);
        if let Ok((y1, _)) = ymh_value(mesh, &a1, &p1) {
            if y1 <= y0 {
                return Ok(FlowStep { a: a1, phi: p1, ymh: y1, dt: t, halvings });
            }
        }
        t *= 0.5;
    }
    Err(Error::Stall(MAX_HALVINGS))
}

/// Coefficients `c_2, …, c_n` of `det(λ + Φ) = λⁿ + c_1 λ^{n−1} + ⋯ + c_n`,
/// by Newton's identities from the power traces.
pub fn hitchin_map_point(phi: &CMat) -> Vec<C64> {
    let n = phi.nrows();
    let mut p = Vec::with_capacity(n);
    let mut pow = linalg::identity(n);
    for _ in 0..n {
        pow = &pow * phi;
        p.push(linalg::trace(&pow));
    }
    let mut e = vec![c(1.0, 0.0)];
    for k in 1..=n {
        let mut s = c(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += e[k - i] * p[i - 1] * sign;
        }
        e.push(s / k as f64);
    }
    e.into_iter().skip(2).collect()
}

/// Sum of absolute eigenvalues of a hermitian matrix.
pub fn nu(h: &CMat) -> f64 {
    linalg::herm_eig(h).0.iter().map(|x| x.abs()).sum()
}

/// `sqrt(Σ_f area_f ν(f_f − μ)²)`.
pub fn donaldson_j(mesh: &EquivariantMesh, a: &DiscreteConnection, phi: &DiscreteHiggs, mu: f64) -> Result<f64> {
    let f = f_field(mesh, a, phi)?;
    Ok(j_of_field(mesh, &f, mu))
}

pub fn j_of_field(mesh: &EquivariantMesh, f: &[CMat], mu: f64) -> f64 {
    mesh.faces
        .iter()
        .zip(f)
        .map(|(face, x)| {
            let shifted = x - linalg::identity(x.nrows()) * c(mu, 0.0);
            face.area * nu(&shifted).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRow {
    pub step: usize,
    pub ymh: f64,
    pub j: f64,
    pub mu1_norm: f64,
    pub mu2_norm: f64,
    pub mu3_norm: f64,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub rows: Vec<FlowRow>,
    pub a: DiscreteConnection,
    pub phi: DiscreteHiggs,
}

impl FlowTrace {
    pub fn csv(&self) -> String {
        let mut s = String::from("step,ymh,j,mu1_norm,mu2_norm,mu3_norm,dt\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.step, r.ymh, r.j, r.mu1_norm, r.mu2_norm, r.mu3_norm, r.dt
            ));
        }
        s
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ymh <= w[0].ymh)
    }
}

fn row(
    mesh: &EquivariantMesh,
    a: &DiscreteConnection,
    phi: &DiscreteHiggs,
    step: usize,
    dt: f64,
    mu: f64,
) -> Result<FlowRow> {
    let (ymh, f) = ymh_value(mesh, a, phi)?;
    let m = moment_residuals(mesh, a, &psi_from_higgs(mesh, a, phi))?;
    Ok(FlowRow {
        step,
        ymh,
        j: j_of_field(mesh, &f, mu),
        mu1_norm: m.mu1_norm,
        mu2_norm: m.mu2_norm,
        mu3_norm: m.mu3_norm,
        dt,
    })
}

/// Runs `steps` damped flow steps. The trial step starts from twice the last
/// accepted step, capped at `dt`.
pub fn ymh_flow(
    mesh: &EquivariantMesh,
    a: &DiscreteConnection,
    phi: &DiscreteHiggs,
    steps: usize,
    dt: f64,
    mu: f64,
) -> Result<FlowTrace> {
    let mut a = a.clone();
    let mut phi = phi.clone();
    let mut rows = vec![row(mesh, &a, &phi, 0, 0.0, mu)?];
    let mut trial = dt;
    for step in 1..=steps {
        let s = ymh_flow_step(mesh, &a, &phi, trial)?;
        trial = (2.0 * s.dt).min(dt);
        a = s.a;
        phi = s.phi;
        rows.push(row(mesh, &a, &phi, step, s.dt, mu)?);
    }
    Ok(FlowTrace { rows, a, phi })
}

fn random_matrix(n: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

/// Random skew-hermitian traceless matrix.
pub fn random_skew(n: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    linalg::traceless(&linalg::skew_part(&random_matrix(n, scale, rng)))
}

pub fn random_connection(mesh: &EquivariantMesh, n: usize, scale: f64, rng: &mut impl Rng) -> DiscreteConnection {
    DiscreteConnection { edges: (0..mesh.edges.len()).map(|_| linalg::skew_exp(&random_skew(n, scale, rng))).collect() }
}

pub fn random_higgs(mesh: &EquivariantMesh, n: usize, scale: f64, rng: &mut impl Rng) -> DiscreteHiggs {
    DiscreteHiggs {
        values: (0..mesh.num_vertices()).map(|_| linalg::traceless(&random_matrix(n, scale, rng))).collect(),
    }
}

pub fn random_unitary_gauge(mesh: &EquivariantMesh, n: usize, rng: &mut impl Rng) -> Vec<CMat> {
    (0..mesh.num_vertices()).map(|_| linalg::skew_exp(&random_skew(n, 2.0, rng))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimpsonSample {
    pub norm_sqr: f64,
    pub commutator_sqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimpsonProbe {
    pub n: usize,
    pub eigen_bound: f64,
    pub trials: usize,
    pub c1: f64,
    pub c2: f64,
    /// The sample that fixes `c2`.
    pub worst_case: SimpsonSample,
    /// `min ‖[N,N*]‖ / ‖N‖²` over the strictly upper triangular parts.
    pub nilpotent_constant: f64,
}

impl SimpsonProbe {
    pub fn holds(&self, s: &SimpsonSample) -> bool {
        s.commutator_sqr >= self.c1 * s.norm_sqr * s.norm_sqr - self.c2 * (1.0 + s.norm_sqr) - 1e-9 * s.norm_sqr.powi(2)
    }
}

fn upper_sample(n: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        if j > i {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
        } else {
            c(0.0, 0.0)
        }
    })
}

/// `‖[N,N*]‖ / ‖N‖²` minimized over random strictly upper triangular `N`.
pub fn nilpotent_constant(n: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..trials {
        let nn = upper_sample(n, 1.0, &mut rng);
        let norm = linalg::frobenius_sqr(&nn);
        if norm > 0.0 {
            best = best.min(linalg::frobenius(&linalg::commutator(&nn, &nn.adjoint())) / norm);
        }
    }
    best
}

/// Samples `P = Q (D + N) Q*` with `|D_ii| ≤ eigen_bound`, `N` strictly upper
/// triangular at log-uniform scales up to `10³` (and zero for one sample in
/// ten), and returns empirical constants for
/// `‖[P,P*]‖² ≥ C₁‖P‖⁴ − C₂(1 + ‖P‖²)`.
///
/// `C₁` is the largest power of two below half the squared nilpotent
/// constant; `C₂` the smallest power of two that makes every sample and
/// every normal matrix with the same spectral bound satisfy the inequality.
pub fn simpson_bound_probe(n: usize, eigen_bound: f64, trials: usize, seed: u64) -> Result<SimpsonProbe> {
    if trials == 0 || n < 2 {
        return Err(Error::InvalidArgument("need n ≥ 2 and at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(trials);
    let mut nil = f64::INFINITY;
    for t in 0..trials {
        let scale = if t % 10 == 9 { 0.0 } else { 10f64.powf(rng.random_range(-3.0..3.0)) };
        let nn = upper_sample(n, scale, &mut rng);
        let nn_norm = linalg::frobenius_sqr(&nn);
        if nn_norm > 0.0 {
            nil = nil.min(linalg::frobenius(&linalg::commutator(&nn, &nn.adjoint())) / nn_norm);
        }
        let mut p = nn;
        for i in 0..n {
            let r = eigen_bound * rng.random_range(0.0..1.0_f64).sqrt();
            p[(i, i)] = C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
        }
        let q = linalg::skew_exp(&linalg::skew_part(&random_matrix(n, 3.0, &mut rng)));
        let p = &q * p * q.adjoint();
        samples.push(SimpsonSample {
            norm_sqr: linalg::frobenius_sqr(&p),
            commutator_sqr: linalg::frobenius_sqr(&linalg::commutator(&p, &p.adjoint())),
        });
    }
    let mut c1 = 1.0;
    while c1 > 0.5 * nil * nil {
        c1 *= 0.5;
    }
    let normal_max = n as f64 * eigen_bound * eigen_bound;
    let mut need = c1 * normal_max * normal_max / (1.0 + normal_max);
    let mut worst = SimpsonSample { norm_sqr: normal_max, commutator_sqr: 0.0 };
    for s in &samples {
        let r = (c1 * s.norm_sqr * s.norm_sqr - s.commutator_sqr) / (1.0 + s.norm_sqr);
        if r > need {
            need = r;
            worst = s.clone();
        }
    }
    let mut c2 = 2f64.powi(-30);
    while c2 < need {
        c2 *= 2.0;
    }
    Ok(SimpsonProbe { n, eigen_bound, trials, c1, c2, worst_case: worst, nilpotent_constant: nil })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::build_equivariant_mesh;
    use crate::hyp::octagon_group;
    use crate::linalg::{diag, from_rows};

    fn mesh(r: usize) -> EquivariantMesh {
        build_equivariant_mesh(&octagon_group(), r).unwrap()
    }

    #[test]
    fn trivial_connection_is_flat() {
        let m = mesh(1);
        let a = DiscreteConnection::trivial(2, &m);
        assert!(face_curvature(&m, &a).unwrap().iter().all(|f| linalg::max_abs(f) == 0.0));
        let phi = DiscreteHiggs::zero(2, &m);
        assert_eq!(ymh_value(&m, &a, &phi).unwrap().0, 0.0);
        let r = moment_residuals(&m, &a, &vec![CMat::zeros(2, 2); m.edges.len()]).unwrap();
        assert_eq!((r.mu1_norm, r.mu2_norm, r.mu3_norm), (0.0, 0.0, 0.0));
        assert_eq!(donaldson_j(&m, &a, &phi, 0.0).unwrap(), 0.0);
        let s = ymh_flow_step(&m, &a, &phi, 0.1).unwrap();
        assert_eq!(s.a, a);
        assert_eq!(s.phi, phi);
    }

    #[test]
    fn abelian_plaquette() {
        let m = mesh(0);
        let mut a = DiscreteConnection::trivial(2, &m);
        let theta = 0.3;
        let e = m.faces[0].sides[0];
        a.edges[e.edge] = diag(&[C64::from_polar(1.0, theta), C64::from_polar(1.0, -theta)]);
        let f = face_curvature(&m, &a).unwrap();
        let sign = if e.forward { 1.0 } else { -1.0 };
        let expect = diag(&[c(0.0, sign * theta), c(0.0, -sign * theta)]) / c(m.faces[0].area, 0.0);
        assert!(linalg::max_abs(&(&f[0] - expect)) < 1e-12);
    }

    #[test]
    fn gauge_covariance() {
        let m = mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_connection(&m, 2, 0.4, &mut rng);
        let phi = random_higgs(&m, 2, 0.5, &mut rng);
        let g = random_unitary_gauge(&m, 2, &mut rng);
        let (a2, phi2) = (a.gauge_transform(&m, &g), phi.gauge_transform(&g));
        let f1 = face_curvature(&m, &a).unwrap();
        let f2 = face_curvature(&m, &a2).unwrap();
        for (k, face) in m.faces.iter().enumerate() {
            let g0 = &g[face.corners[0]];
            assert!(linalg::max_abs(&(g0 * &f1[k] * g0.adjoint() - &f2[k])) < 1e-10);
        }
        let (y1, _) = ymh_value(&m, &a, &phi).unwrap();
        let (y2, _) = ymh_value(&m, &a2, &phi2).unwrap();
        assert!((y1 - y2).abs() < 1e-10 * y1.max(1.0));
        let j1 = donaldson_j(&m, &a, &phi, 0.0).unwrap();
        let j2 = donaldson_j(&m, &a2, &phi2, 0.0).unwrap();
        assert!((j1 - j2).abs() < 1e-9 * j1.max(1.0));
        let psi = psi_from_higgs(&m, &a, &phi);
        let psi2: Vec<CMat> = m.edges.iter().zip(&psi).map(|(e, p)| &g[e.src] * p * g[e.src].adjoint()).collect();
        let r1 = moment_residuals(&m, &a, &psi).unwrap();
        let r2 = moment_residuals(&m, &a2, &psi2).unwrap();
        for (x, y) in [(r1.mu1_norm, r2.mu1_norm), (r1.mu2_norm, r2.mu2_norm), (r1.mu3_norm, r2.mu3_norm)] {
            assert!((x - y).abs() < 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn constant_nilpotent_higgs() {
        let m = mesh(1);
        let a = DiscreteConnection::trivial(2, &m);
        let nmat = from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]]);
        let phi = DiscreteHiggs { values: vec![nmat.clone(); m.num_vertices()] };
        let (y, _) = ymh_value(&m, &a, &phi).unwrap();
        let br = linalg::frobenius_sqr(&linalg::commutator(&nmat, &nmat.adjoint()));
        assert!((y - 2.0 * std::f64::consts::PI * br).abs() < 1e-10);
        assert!(y > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_connection(&m, 2, 0.3, &mut rng);
        let phi = random_higgs(&m, 2, 0.4, &mut rng);
        let g = ymh_gradient(&m, &a, &phi).unwrap();
        for _ in 0..20 {
            let de: Vec<CMat> = (0..m.edges.len()).map(|_| random_skew(2, 1.0, &mut rng)).collect();
            let dp: Vec<CMat> =
                (0..m.num_vertices()).map(|_| linalg::traceless(&random_matrix(2, 1.0, &mut rng))).collect();
            let h = 1e-5;
            let eval = |t: f64| {
                let edges = a.edges.iter().zip(&de).map(|(u, e)| linalg::skew_exp(&(e * c(t, 0.0))) * u).collect();
                let values = phi.values.iter().zip(&dp).map(|(p, d)| p + d * c(t, 0.0)).collect();
                ymh_value(&m, &DiscreteConnection { edges }, &DiscreteHiggs { values }).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an: f64 = g.edges.iter().zip(&de).map(|(x, y)| linalg::inner(x, y)).sum::<f64>()
                + g.vertices.iter().zip(&dp).map(|(x, y)| linalg::inner(x, y)).sum::<f64>();
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1e-3), "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn flow_decreases() {
        let m = mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_connection(&m, 2, 0.3, &mut rng);
        let phi = random_higgs(&m, 2, 0.3, &mut rng);
        let (y0, _) = ymh_value(&m, &a, &phi).unwrap();
        let s = ymh_flow_step(&m, &a, &phi, 0.05).unwrap();
        assert!(s.ymh < y0);
        s.a.validate().unwrap();
        s.phi.validate().unwrap();
        let trace = ymh_flow(&m, &a, &phi, 100, 0.05, 0.0).unwrap();
        assert!(trace.is_monotone());
        let mu2_0 = trace.rows[0].mu2_norm;
        assert!(trace.rows.iter().all(|r| r.mu2_norm <= 10.0 * mu2_0));
        assert!(trace.csv().starts_with("step,ymh,j,mu1_norm,mu2_norm,mu3_norm,dt\n"));
    }

    #[test]
    fn hitchin_map() {
        let q = c(0.7, -0.2);
        let phi = from_rows(&[&[c(0.0, 0.0), q], &[c(1.0, 0.0), c(0.0, 0.0)]]);
        let cs = hitchin_map_point(&phi);
        assert_eq!(cs.len(), 1);
        assert!((cs[0] + q).norm() < 1e-15);
        assert!(hitchin_map_point(&CMat::zeros(3, 3)).iter().all(|z| z.norm() == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = linalg::traceless(&random_matrix(4, 1.0, &mut rng));
        let g = random_matrix(4, 1.0, &mut rng) + linalg::identity(4) * c(2.0, 0.0);
        let conj = &g * &p * linalg::inverse(&g).unwrap();
        for (x, y) in hitchin_map_point(&p).iter().zip(hitchin_map_point(&conj)) {
            assert!((x - y).norm() < 1e-10);
        }
        // against det(λ+Φ) at λ = 0 and the trace of the second exterior power
        let d = linalg::det(&p);
        assert!((hitchin_map_point(&p)[2] - d).norm() < 1e-12);
    }

    #[test]
    fn j_functional() {
        let m = mesh(0);
        let f = vec![diag(&[c(1.0, 0.0), c(-1.0, 0.0)]); 1];
        let single = EquivariantMesh { faces: vec![m.faces[0].clone()], ..m.clone() };
        assert!((j_of_field(&single, &f, 0.0) - (single.faces[0].area * 4.0).sqrt()).abs() < 1e-14);
        let mu = 0.7;
        let fm = vec![linalg::identity(2) * c(mu, 0.0); m.faces.len()];
        assert_eq!(j_of_field(&m, &fm, mu), 0.0);
    }

    #[test]
    fn simpson_probe() {
        for n in 2..=4 {
            assert!(nilpotent_constant(n, 2000, n as u64) > 0.0);
        }
        let probe = simpson_bound_probe(3, 2.0, 2000, 5).unwrap();
        assert!(probe.c1 > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d: Vec<C64> =
                (0..3).map(|_| C64::from_polar(2.0 * rng.random_range(0.0..1.0), rng.random_range(0.0..6.0))).collect();
            let q = linalg::skew_exp(&random_skew(3, 2.0, &mut rng));
            let p = &q * diag(&d) * q.adjoint();
            let x = linalg::frobenius_sqr(&p);
            assert!(probe.c1 * x * x <= probe.c2 * (1.0 + x));
        }
        let again = simpson_bound_probe(3, 2.0, 2000, 5).unwrap();
        assert_eq!(probe, again);
        assert!(probe.holds(&probe.worst_case));
    }
}
