//! Energy and Karcher-mean relaxation for equivariant maps.

use serde::Serialize;

use super::mesh::EquivariantMesh;
use super::posherm::{self, act};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::par;
use crate::rep::Representation;

/// Values at the vertex-class representatives. The value at a translate
/// `γ·rep` is `ρ(γ) u ρ(γ)*`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantMap {
    pub values: Vec<CMat>,
}

impl EquivariantMap {
    pub fn constant_identity(n: usize, vertices: usize) -> Self {
        EquivariantMap { values: vec![linalg::identity(n); vertices] }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, m) in self.values.iter().enumerate() {
            posherm::validate(m).map_err(|e| Error::Breakdown { vertex: v, reason: e.to_string() })?;
        }
        Ok(())
    }

    /// `u ↦ g u g*` at every vertex.
    pub fn translate(&self, g: &CMat) -> Self {
        EquivariantMap { values: self.values.iter().map(|m| act(g, m)).collect() }
    }
}

/// `ρ(twist)` and its inverse for every edge.
#[derive(Clone, Debug)]
pub struct Twists {
    pub fwd: Vec<CMat>,
    pub inv: Vec<CMat>,
}

impl Twists {
    pub fn new(mesh: &EquivariantMesh, rho: &Representation) -> Result<Self> {
        check_sizes(mesh, rho)?;
        let fwd = mesh.edges.iter().map(|e| rho.word_image(&e.twist.letters)).collect::<Result<Vec<_>>>()?;
        let inv = fwd.iter().map(linalg::inverse).collect::<Result<Vec<_>>>()?;
        Ok(Twists { fwd, inv })
    }

    /// `u_dst` expressed in the frame of `src`.
    pub fn dst_in_src(&self, e: usize, u_dst: &CMat) -> CMat {
        act(&self.fwd[e], u_dst)
    }

    /// `u_src` expressed in the frame of `dst`.
    pub fn src_in_dst(&self, e: usize, u_src: &CMat) -> CMat {
        act(&self.inv[e], u_src)
    }
}

/// Allowed `‖Π[ρ(a_i), ρ(b_i)] − I‖` relative to the size of the product.
pub const RELATION_TOL: f64 = 1e-8;

fn check_sizes(mesh: &EquivariantMesh, rho: &Representation) -> Result<()> {
    if rho.genus != mesh.group.genus {
        return Err(Error::InvalidArgument(format!(
            "representation of genus {} on a genus {} mesh",
            rho.genus, mesh.group.genus
        )));
    }
    let p = rho.word_image(&crate::hyp::relation_letters(rho.genus))?;
    let defect = linalg::max_abs(&(&p - linalg::identity(rho.n)));
    if defect > RELATION_TOL * linalg::max_abs(&p).max(1.0) {
        return Err(Error::InvalidArgument(format!("images violate the surface relation by {defect:.3e}")));
    }
    Ok(())
}

fn check_map(mesh: &EquivariantMesh, rho: &Representation, u: &EquivariantMap) -> Result<()> {
    if u.values.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "map has {} values for {} vertices",
            u.values.len(),
            mesh.num_vertices()
        )));
    }
    if let Some(m) = u.values.iter().find(|m| m.nrows() != rho.n) {
        return Err(Error::InvalidArgument(format!("map value of size {} for rank {}", m.nrows(), rho.n)));
    }
    Ok(())
}

/// `Σ_e w_e d(u_src, ρ(twist_e) u_dst ρ(twist_e)*)²`.
pub fn discrete_energy(mesh: &EquivariantMesh, rho: &Representation, u: &EquivariantMap) -> Result<f64> {
    check_map(mesh, rho, u)?;
    let tw = Twists::new(mesh, rho)?;
    energy_with(mesh, &tw, &u.values)
}

pub(crate) fn energy_with(mesh: &EquivariantMesh, tw: &Twists, u: &[CMat]) -> Result<f64> {
    let terms = par::map_range(mesh.edges.len(), |e| {
        let ed = &mesh.edges[e];
        posherm::dist_d(&u[ed.src], &tw.dst_in_src(e, &u[ed.dst])).map(|d| ed.weight * d * d)
    });
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug)]
enum Other {
    Vertex(usize),
    /// Loop edge: the neighbor is `T u_v T*` for the vertex itself.
    SelfLoop,
}

#[derive(Clone, Debug)]
struct Nbr {
    other: Other,
    weight: f64,
    t: CMat,
    /// Counted in the local energy (loops appear twice in the gradient but
    /// once in the energy).
    energy: bool,
}

/// Twisted neighbors of every vertex, expressed in that vertex's frame.
pub(crate) struct Neighbors {
    lists: Vec<Vec<Nbr>>,
}

impl Neighbors {
    pub(crate) fn new(mesh: &EquivariantMesh, tw: &Twists) -> Self {
        let mut lists = vec![Vec::new(); mesh.num_vertices()];
        for (e, ed) in mesh.edges.iter().enumerate() {
            if ed.is_loop() {
                lists[ed.src].push(Nbr {
                    other: Other::SelfLoop,
                    weight: ed.weight,
                    t: tw.fwd[e].clone(),
                    energy: true,
                });
                lists[ed.src].push(Nbr {
                    other: Other::SelfLoop,
                    weight: ed.weight,
                    t: tw.inv[e].clone(),
                    energy: false,
                });
            } else {
                lists[ed.src].push(Nbr {
                    other: Other::Vertex(ed.dst),
                    weight: ed.weight,
                    t: tw.fwd[e].clone(),
                    energy: true,
                });
                lists[ed.dst].push(Nbr {
                    other: Other::Vertex(ed.src),
                    weight: ed.weight,
                    t: tw.inv[e].clone(),
                    energy: true,
                });
            }
        }
        Neighbors { lists }
    }

    fn neighbor(&self, nb: &Nbr, x: &CMat, u: &[CMat]) -> CMat {
        match nb.other {
            Other::Vertex(o) => act(&nb.t, &u[o]),
            Other::SelfLoop => act(&nb.t, x),
        }
    }

    fn local_energy(&self, v: usize, x: &CMat, u: &[CMat]) -> Result<f64> {
        let mut e = 0.0;
        for nb in self.lists[v].iter().filter(|nb| nb.energy) {
            let d = posherm::dist_d(x, &self.neighbor(nb, x, u))?;
            e += nb.weight * d * d;
        }
        Ok(e)
    }

    /// `(Σ w log(X^{-1/2} N X^{-1/2}), Σ w)` with `X = x`.
    fn karcher_sum(&self, v: usize, x_inv_sqrt: &CMat, x: &CMat, u: &[CMat]) -> Result<(CMat, f64)> {
        let n = x.nrows();
        let mut g = CMat::zeros(n, n);
        let mut wsum = 0.0;
        for nb in &self.lists[v] {
            g += posherm::log_at(x_inv_sqrt, &self.neighbor(nb, x, u))? * linalg::c(nb.weight, 0.0);
            wsum += nb.weight;
        }
        Ok((g, wsum))
    }

    /// Sup over vertices of the Karcher-gradient norm.
    pub(crate) fn gradient_norm(&self, u: &[CMat]) -> Result<f64> {
        let norms = par::map_range(u.len(), |v| -> Result<f64> {
            let (_, si) = linalg::pos_sqrt_pair(&u[v]).map_err(|e| breakdown(v, e))?;
            let (g, _) = self.karcher_sum(v, &si, &u[v], u).map_err(|e| breakdown(v, e))?;
            Ok(linalg::frobenius(&g))
        });
        let mut sup = 0.0_f64;
        for n in norms {
            sup = sup.max(n?);
        }
        Ok(sup)
    }

    /// Karcher-mean relaxation of one vertex against fixed neighbors.
    fn relax(&self, v: usize, u: &[CMat], sub_iters: usize) -> Result<CMat> {
        let mut x = u[v].clone();
        for _ in 0..sub_iters {
            let (s, si) = linalg::pos_sqrt_pair(&x)?;
            let (g, wsum) = self.karcher_sum(v, &si, &x, u)?;
            if wsum == 0.0 || linalg::frobenius(&g) < 1e-15 {
                break;
            }
            let step = linalg::traceless(&linalg::hermitian_part(&g)) / linalg::c(wsum, 0.0);
            let e0 = self.local_energy(v, &x, u)?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let cand = posherm::normalize_det(&posherm::exp_at(&s, &(&step * linalg::c(t, 0.0))));
                if self.local_energy(v, &cand, u)? <= e0 {
                    accepted = Some(cand);
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some(c) => x = c,
                None => break,
            }
        }
        Ok(x)
    }
}

fn breakdown(v: usize, e: Error) -> Error {
    match e {
        Error::Breakdown { .. } => e,
        other => Error::Breakdown { vertex: v, reason: other.to_string() },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceConfig {
    /// Growth of `log cond u(p̂)` per sweep that counts as divergence.
    pub slope: f64,
    /// Number of trailing sweeps the slope is measured over.
    pub window: usize,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig { slope: 0.01, window: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HarmonicOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub sub_iters: usize,
    pub divergence: DivergenceConfig,
    /// Update each color class concurrently instead of vertex by vertex.
    pub colored: bool,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        HarmonicOptions {
            tol: 1e-8,
            max_iters: 5000,
            sub_iters: 5,
            divergence: DivergenceConfig::default(),
            colored: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicReport {
    pub energy_trace: Vec<f64>,
    pub grad_trace: Vec<f64>,
    /// `log cond u(p̂)` after every sweep (index 0 is the initial map).
    pub cond_trace: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub tol: f64,
    pub divergence: DivergenceConfig,
    pub psi_identity_gap: Option<f64>,
}

impl HarmonicReport {
    pub fn energy(&self) -> f64 {
        *self.energy_trace.last().unwrap_or(&0.0)
    }

    /// Largest relative increase between consecutive sweeps (0 when the
    /// trace is nonincreasing).
    pub fn max_energy_increase(&self) -> f64 {
        self.energy_trace.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300)).fold(0.0, f64::max)
    }

    pub fn energy_csv(&self) -> String {
        let mut s = String::from("sweep,energy,grad_norm,log_cond\n");
        for (i, e) in self.energy_trace.iter().enumerate() {
            s.push_str(&format!("{i},{e:.16e},{:.16e},{:.16e}\n", self.grad_trace[i], self.cond_trace[i]));
        }
        s
    }
}

/// True when `log cond u(p̂)` grew faster than the configured slope over the
/// trailing window while the gradient is still above tolerance.
pub fn divergence_monitor(report: &HarmonicReport) -> bool {
    divergence_check(&report.cond_trace, report.grad_norm, report.tol, &report.divergence)
}

fn divergence_check(cond: &[f64], grad: f64, tol: f64, cfg: &DivergenceConfig) -> bool {
    let w = cfg.window;
    if w == 0 || cond.len() <= w || grad < tol {
        return false;
    }
    let last = cond.len() - 1;
    (cond[last] - cond[last - w]) / w as f64 > cfg.slope
}

/// One Gauss–Seidel sweep in color order. With `colored`, vertices of one
/// color are relaxed concurrently; they are never adjacent, so the result
/// equals the sequential sweep.
pub(crate) fn sweep(
    mesh: &EquivariantMesh,
    nb: &Neighbors,
    u: &mut [CMat],
    sub_iters: usize,
    colored: bool,
) -> Result<()> {
    for class in mesh.color_classes() {
        if colored {
            let new = par::map(&class, |&v| nb.relax(v, u, sub_iters).map_err(|e| breakdown(v, e)));
            for (&v, x) in class.iter().zip(new) {
                u[v] = x?;
            }
        } else {
            for &v in &class {
                u[v] = nb.relax(v, u, sub_iters).map_err(|e| breakdown(v, e))?;
            }
        }
    }
    Ok(())
}

/// Minimizes the discrete energy by Karcher-mean relaxation from `u0`.
pub fn harmonic_solve(
    mesh: &EquivariantMesh,
    rho: &Representation,
    u0: &EquivariantMap,
    opts: &HarmonicOptions,
) -> Result<(EquivariantMap, HarmonicReport)> {
    check_map(mesh, rho, u0)?;
    u0.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let tw = Twists::new(mesh, rho)?;
    let nb = Neighbors::new(mesh, &tw);
    let mut u = u0.values.clone();
    let p = mesh.basepoint;
    let mut report = HarmonicReport {
        energy_trace: vec![energy_with(mesh, &tw, &u)?],
        grad_trace: vec![nb.gradient_norm(&u)?],
        cond_trace: vec![posherm::log_condition(&u[p])],
        grad_norm: 0.0,
        iterations: 0,
        converged: false,
        diverged: false,
        tol: opts.tol,
        divergence: opts.divergence,
        psi_identity_gap: None,
    };
    report.grad_norm = report.grad_trace[0];
    report.converged = report.grad_norm < opts.tol;
    while !report.converged && report.iterations < opts.max_iters {
        sweep(mesh, &nb, &mut u, opts.sub_iters, opts.colored)?;
        report.iterations += 1;
        report.energy_trace.push(energy_with(mesh, &tw, &u)?);
        report.grad_norm = nb.gradient_norm(&u)?;
        report.grad_trace.push(report.grad_norm);
        report.cond_trace.push(posherm::log_condition(&u[p]));
        report.converged = report.grad_norm < opts.tol;
        if divergence_check(&report.cond_trace, report.grad_norm, opts.tol, &opts.divergence) {
            report.diverged = true;
            break;
        }
    }
    Ok((EquivariantMap { values: u }, report))
}

/// Sup-norm Karcher gradient of a map (the discrete tension).
pub fn karcher_gradient_norm(mesh: &EquivariantMesh, rho: &Representation, u: &EquivariantMap) -> Result<f64> {
    check_map(mesh, rho, u)?;
    let tw = Twists::new(mesh, rho)?;
    Neighbors::new(mesh, &tw).gradient_norm(&u.values)
}

/// `u ↦ geodesic(u_v, w_v, t)` vertexwise.
pub fn map_geodesic(u: &EquivariantMap, w: &EquivariantMap, t: f64) -> Result<EquivariantMap> {
    let values = u.values.iter().zip(&w.values).map(|(a, b)| posherm::geodesic(a, b, t)).collect::<Result<Vec<_>>>()?;
    Ok(EquivariantMap { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::mesh::build_equivariant_mesh;
    use crate::hyp::octagon_group;
    use crate::linalg::{c, from_rows};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(n: usize, nv: usize, seed: u64) -> EquivariantMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EquivariantMap { values: (0..nv).map(|_| posherm::random_pos_hermitian(n, 0.5, &mut rng)).collect() }
    }

    #[test]
    fn unitary_constant_energy_zero() {
        let g = octagon_group();
        let mesh = build_equivariant_mesh(&g, 1).unwrap();
        let rho = Representation::trivial(2, 2);
        let u = EquivariantMap::constant_identity(2, mesh.num_vertices());
        assert_eq!(discrete_energy(&mesh, &rho, &u).unwrap(), 0.0);
        let (u1, rep) = harmonic_solve(&mesh, &rho, &u, &HarmonicOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged && !divergence_monitor(&rep));
        assert_eq!(u1, u);
    }

    #[test]
    fn fuchsian_energy_positive_and_conjugation_invariant() {
        let g = octagon_group();
        let mesh = build_equivariant_mesh(&g, 1).unwrap();
        let rho = Representation::fuchsian(&g);
        let u = random_map(2, mesh.num_vertices(), 1);
        let e = discrete_energy(&mesh, &rho, &u).unwrap();
        assert!(e > 0.0);
        assert!(
            discrete_energy(&mesh, &rho, &EquivariantMap::constant_identity(2, mesh.num_vertices())).unwrap() > 0.0
        );
        let h = from_rows(&[&[c(1.0, 0.3), c(0.2, -0.1)], &[c(0.5, 0.0), c(1.2, 0.4)]]);
        let h = h.map(|z| z / linalg::det(&h).sqrt());
        let e2 = discrete_energy(&mesh, &rho.conjugate(&h).unwrap(), &u.translate(&h)).unwrap();
        assert!((e - e2).abs() < 1e-9 * e);
    }

    #[test]
    fn fuchsian_solve_decreases_energy() {
        let g = octagon_group();
        let mesh = build_equivariant_mesh(&g, 1).unwrap();
        let rho = Representation::fuchsian(&g);
        let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
        let opts = HarmonicOptions { tol: 1e-9, ..Default::default() };
        let (u, rep) = harmonic_solve(&mesh, &rho, &u0, &opts).unwrap();
        assert!(rep.converged, "grad {}", rep.grad_norm);
        assert!(!rep.diverged);
        assert!(rep.max_energy_increase() <= 1e-12);
        assert!(rep.energy_trace.windows(2).take(5).all(|w| w[1] < w[0]));
        u.validate().unwrap();
        assert!(karcher_gradient_norm(&mesh, &rho, &u).unwrap() < 1e-9);
    }

    #[test]
    fn colored_sweep_matches_sequential() {
        let g = octagon_group();
        let mesh = build_equivariant_mesh(&g, 2).unwrap();
        let rho = Representation::fuchsian(&g);
        let u0 = random_map(2, mesh.num_vertices(), 9);
        let mk = |colored| HarmonicOptions { max_iters: 5, colored, ..Default::default() };
        let (a, _) = harmonic_solve(&mesh, &rho, &u0, &mk(true)).unwrap();
        let (b, _) = harmonic_solve(&mesh, &rho, &u0, &mk(false)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(linalg::max_abs(&(x - y)) < 1e-12);
        }
    }

    #[test]
    fn convexity_along_geodesic() {
        let g = octagon_group();
        let mesh = build_equivariant_mesh(&g, 1).unwrap();
        let rho = Representation::fuchsian(&g);
        let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
        let (u, _) = harmonic_solve(&mesh, &rho, &u0, &HarmonicOptions::default()).unwrap();
        let w = EquivariantMap {
            values: u
                .values
                .iter()
                .zip(&random_map(2, mesh.num_vertices(), 4).values)
                .map(|(a, b)| {
                    let s = linalg::pos_sqrt(a).unwrap();
                    linalg::hermitian_part(&(&s * b * &s))
                })
                .collect(),
        };
        let es: Vec<f64> = (0..=10)
            .map(|k| discrete_energy(&mesh, &rho, &map_geodesic(&u, &w, k as f64 / 10.0).unwrap()).unwrap())
            .collect();
        for k in 1..10 {
            assert!(es[k - 1] - 2.0 * es[k] + es[k + 1] >= -1e-8);
        }
    }

    fn abelian(first: CMat) -> Representation {
        let mut im = vec![linalg::identity(2); 4];
        im[0] = first;
        Representation::new(2, 2, im).unwrap()
    }

    #[test]
    fn unipotent_datum_diverges() {
        let mesh = build_equivariant_mesh(&octagon_group(), 1).unwrap();
        let rho = abelian(from_rows(&[&[c(1.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]]));
        let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
        let opts = HarmonicOptions {
            max_iters: 2000,
            divergence: DivergenceConfig { slope: 1e-4, window: 200 },
            ..Default::default()
        };
        let (_, rep) = harmonic_solve(&mesh, &rho, &u0, &opts).unwrap();
        assert!(rep.diverged && divergence_monitor(&rep));
        assert!(!rep.converged);
        assert!(rep.cond_trace.last().unwrap() > &2.0);
    }

    #[test]
    fn diagonal_datum_is_semisimple_and_converges() {
        let mesh = build_equivariant_mesh(&octagon_group(), 1).unwrap();
        let rho = abelian(linalg::diag(&[c(2.0, 0.0), c(0.5, 0.0)]));
        let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
        let (_, rep) = harmonic_solve(&mesh, &rho, &u0, &HarmonicOptions::default()).unwrap();
        assert!(rep.converged && !rep.diverged);
        assert!(rep.energy() > 0.0);
    }

    #[test]
    fn non_representation_is_rejected() {
        let mesh = build_equivariant_mesh(&octagon_group(), 0).unwrap();
        let x = linalg::diag(&[c(0.0, 1.0), c(0.0, -1.0)]);
        let y = linalg::real2(0.0, 1.0, -1.0, 0.0);
        // [x, y] = −I
        let rho = Representation::new(2, 2, vec![x, y, linalg::identity(2), linalg::identity(2)]).unwrap();
        let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
        assert!(matches!(
            harmonic_solve(&mesh, &rho, &u0, &HarmonicOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn divergence_check_logic() {
        let cfg = DivergenceConfig { slope: 0.01, window: 10 };
        let rising: Vec<f64> = (0..20).map(|k| 0.1 * k as f64).collect();
        assert!(divergence_check(&rising, 1.0, 1e-8, &cfg));
        assert!(!divergence_check(&rising, 1e-9, 1e-8, &cfg));
        assert!(!divergence_check(&rising[..10], 1.0, 1e-8, &cfg));
        assert!(!divergence_check(&[1.0; 20], 1.0, 1e-8, &cfg));
    }
}
