//! The hermitian one-form `Ψ = −½ u⁻¹du` of an equivariant map and its
//! `(1,0)` part.

use serde::Serialize;

use super::mesh::EquivariantMesh;
use super::solve::{EquivariantMap, Twists};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::par;
use crate::rep::Representation;

/// Edge values of `Ψ`. `edges[e]` lives in the frame of `src` normalized by
/// `u_src^{-1/2}`; `reversed[e]` is the value on the reversed edge in the
/// frame of `dst`, equal to `−W Ψ_e W*` with `W = polar[e]`.
#[derive(Clone, Debug)]
pub struct PsiField {
    pub edges: Vec<CMat>,
    pub reversed: Vec<CMat>,
    pub polar: Vec<CMat>,
    /// Per face, the three side values in the frame of corner 0.
    pub faces: Vec<[CMat; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub energy: f64,
    pub four_psi_sq: f64,
    pub relative_gap: f64,
}

/// `d(S, T)²` through a Cholesky factor `S = LL*`: the spectrum of
/// `L⁻¹ T L⁻*` equals that of `S^{-1/2} T S^{-1/2}`.
fn dist_sq_cholesky(s: &CMat, t: &CMat) -> Result<f64> {
    let chol = s.clone().cholesky().ok_or_else(|| Error::NotPositiveHermitian("Cholesky failed".into()))?;
    let l = chol.l();
    let li = linalg::inverse(&l)?;
    let m = &li * t * li.adjoint();
    let (vals, _) = linalg::herm_eig(&m);
    if vals[0] < 1e-14 {
        return Err(Error::EigenvalueUnderflow(vals[0]));
    }
    Ok(vals.iter().map(|v| v.ln().powi(2)).sum())
}

pub fn psi_field(
    mesh: &EquivariantMesh,
    rho: &Representation,
    u: &EquivariantMap,
) -> Result<(PsiField, IdentityReport)> {
    u.validate()?;
    let tw = Twists::new(mesh, rho)?;
    let uv = &u.values;
    let per_edge = par::map_range(mesh.edges.len(), |e| -> Result<(CMat, CMat, CMat, f64)> {
        let ed = &mesh.edges[e];
        let s = &uv[ed.src];
        let t = tw.dst_in_src(e, &uv[ed.dst]);
        let (s_half, s_inv_half) = linalg::pos_sqrt_pair(s)?;
        let psi = linalg::pos_log(&linalg::hermitian_part(&(&s_inv_half * &t * &s_inv_half)))? * C64::new(-0.5, 0.0);
        let (_, d_inv_half) = linalg::pos_sqrt_pair(&uv[ed.dst])?;
        let k = d_inv_half * &tw.inv[e] * s_half;
        let w = linalg::polar_unitary(&k);
        let rev = -(&w * &psi * w.adjoint());
        let d2 = dist_sq_cholesky(s, &t)?;
        Ok((psi, rev, w, ed.weight * d2))
    });
    let mut edges = Vec::with_capacity(per_edge.len());
    let mut reversed = Vec::with_capacity(per_edge.len());
    let mut polar = Vec::with_capacity(per_edge.len());
    let mut energy = 0.0;
    for r in per_edge {
        let (p, rv, w, en) = r?;
        edges.push(p);
        reversed.push(rv);
        polar.push(w);
        energy += en;
    }
    let four_psi_sq: f64 =
        mesh.edges.iter().zip(&edges).map(|(ed, p)| 4.0 * ed.weight * linalg::frobenius_sqr(p)).sum();
    let relative_gap = if energy == 0.0 && four_psi_sq == 0.0 {
        0.0
    } else {
        (energy - four_psi_sq).abs() / energy.abs().max(four_psi_sq.abs())
    };

    let faces = par::map_range(mesh.faces.len(), |f| face_psi(mesh, rho, uv, f));
    let faces = faces.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((PsiField { edges, reversed, polar, faces }, IdentityReport { energy, four_psi_sq, relative_gap }))
}

/// Side values `−½(L_{k+1} − L_k)` with `L_k = log(X_0^{-1/2} X_k X_0^{-1/2})`
/// and `X_k` the map at the face's raw corners.
fn face_psi(mesh: &EquivariantMesh, rho: &Representation, u: &[CMat], f: usize) -> Result<[CMat; 3]> {
    let face = &mesh.faces[f];
    let mut x = Vec::with_capacity(3);
    for k in 0..3 {
        let g = rho.word_image(&face.twists[k].letters)?;
        x.push(super::posherm::act(&g, &u[face.corners[k]]));
    }
    let (_, si) = linalg::pos_sqrt_pair(&x[0])?;
    let n = rho.n;
    let l = [CMat::zeros(n, n), super::posherm::log_at(&si, &x[1])?, super::posherm::log_at(&si, &x[2])?];
    Ok(std::array::from_fn(|k| (&l[(k + 1) % 3] - &l[k]) * C64::new(-0.5, 0.0)))
}

/// Least-squares constant one-form `A dx + B dy` matching the side
/// integrals `values[k] ≈ A Re(dz_k) + B Im(dz_k)`.
pub fn fit_one_form(dz: &[C64], values: &[CMat], face: usize) -> Result<(CMat, CMat)> {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let n = values[0].nrows();
    let mut rx = CMat::zeros(n, n);
    let mut ry = CMat::zeros(n, n);
    for (d, v) in dz.iter().zip(values) {
        sxx += d.re * d.re;
        sxy += d.re * d.im;
        syy += d.im * d.im;
        rx += v * C64::new(d.re, 0.0);
        ry += v * C64::new(d.im, 0.0);
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-24 * (sxx + syy).powi(2).max(1e-300) || det == 0.0 {
        return Err(Error::DegenerateFace(face));
    }
    let a = (&rx * C64::new(syy, 0.0) - &ry * C64::new(sxy, 0.0)) / C64::new(det, 0.0);
    let b = (&ry * C64::new(sxx, 0.0) - &rx * C64::new(sxy, 0.0)) / C64::new(det, 0.0);
    Ok((a, b))
}

/// `Φ = (A − iB)/2`, the `dz` coefficient of `A dx + B dy`.
pub fn one_zero_part(a: &CMat, b: &CMat) -> CMat {
    (a - b * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0)
}

#[derive(Clone, Debug)]
pub struct HiggsFace {
    pub phi: CMat,
    pub traceless: CMat,
}

/// Per-face `(1,0)` part of the fitted `Ψ` in the half-plane coordinate.
pub fn higgs_from_psi(mesh: &EquivariantMesh, psi: &PsiField) -> Result<Vec<HiggsFace>> {
    let out = par::map_range(mesh.faces.len(), |f| -> Result<HiggsFace> {
        let face = &mesh.faces[f];
        if face.coord_area.abs() < 1e-14 {
            return Err(Error::DegenerateFace(f));
        }
        let dz: Vec<C64> = (0..3).map(|k| face.positions[(k + 1) % 3] - face.positions[k]).collect();
        let (a, b) = fit_one_form(&dz, &psi.faces[f], f)?;
        let phi = one_zero_part(&a, &b);
        let traceless = linalg::traceless(&phi);
        Ok(HiggsFace { phi, traceless })
    });
    out.into_iter().collect()
}

/// Weighted divergence `Σ w_e Ψ_e` of `Ψ` at every vertex, each edge
/// oriented away from the vertex and in its frame. Equals `−½` times the
/// Karcher gradient.
pub fn psi_divergence(mesh: &EquivariantMesh, psi: &PsiField) -> Vec<CMat> {
    let n = psi.edges.first().map_or(0, |m| m.nrows());
    let mut out = vec![CMat::zeros(n, n); mesh.num_vertices()];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let w = C64::new(ed.weight, 0.0);
        out[ed.src] += &psi.edges[e] * w;
        out[ed.dst] += &psi.reversed[e] * w;
    }
    out
}

/// The unitary connection of the map: `U_e = W_e*`, so that the reversed
/// value is `−U_e* Ψ_e U_e`.
pub fn polar_connection(psi: &PsiField) -> Vec<CMat> {
    psi.polar.iter().map(|w| w.adjoint()).collect()
}
