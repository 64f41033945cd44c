//! Equivariant triangulation of the octagon fundamental domain.
//!
//! Raw vertices live in the closed octagon in the upper half-plane. Raw
//! vertices on paired sides are glued to vertex classes; each raw vertex
//! `p` records a group element `g_p` with `p = g_p · rep(class(p))`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyp::{
    disk_to_half_plane, geodesic_point, hyp_distance, octagon_circumradius, FuchsianGroup, GroupWord, Moebius,
    BASEPOINT, OCTAGON_PAIRINGS,
};
use crate::linalg::C64;

pub const REFINEMENT_CAP: usize = 6;
pub const WEIGHT_FLOOR: f64 = 1e-6;
const MATCH_TOL: f64 = 1e-8;

/// An edge of the glued complex. The energy term is
/// `w · d(u_src, ρ(twist) u_dst ρ(twist)*)²`.
#[derive(Clone, Debug)]
pub struct MeshEdge {
    pub src: usize,
    pub dst: usize,
    pub twist: GroupWord,
    pub weight: f64,
    /// Displacement `dst − src` in the half-plane chart of one representative.
    pub dz: C64,
}

impl MeshEdge {
    pub fn is_loop(&self) -> bool {
        self.src == self.dst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FaceSide {
    pub edge: usize,
    pub forward: bool,
}

/// A counterclockwise triangle; side `k` runs from corner `k` to `k+1`.
#[derive(Clone, Debug)]
pub struct MeshFace {
    pub corners: [usize; 3],
    pub positions: [C64; 3],
    pub twists: [GroupWord; 3],
    pub sides: [FaceSide; 3],
    /// Hyperbolic area, rescaled so that all faces sum to `2π`.
    pub area: f64,
    /// Euclidean area in the half-plane chart.
    pub coord_area: f64,
}

#[derive(Clone, Debug)]
pub struct EquivariantMesh {
    pub group: FuchsianGroup,
    pub refinement: usize,
    /// Representative position of each vertex class.
    pub positions: Vec<C64>,
    pub edges: Vec<MeshEdge>,
    pub faces: Vec<MeshFace>,
    pub basepoint: usize,
    pub cycle_residual: f64,
    /// Greedy coloring of the vertices; no edge joins two distinct vertices
    /// of one color.
    pub colors: Vec<usize>,
}

impl EquivariantMesh {
    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.positions.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Vertices grouped by color, each group in increasing index order.
    pub fn color_classes(&self) -> Vec<Vec<usize>> {
        let k = self.colors.iter().copied().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); k];
        for (v, &col) in self.colors.iter().enumerate() {
            out[col].push(v);
        }
        out
    }

    /// The sweep order: color by color.
    pub fn sweep_order(&self) -> Vec<usize> {
        self.color_classes().concat()
    }

    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(|f| f.area).sum()
    }
}

struct Raw {
    pos: Vec<C64>,
    sides: Vec<u16>,
    tris: Vec<[usize; 3]>,
}

fn side_bit(k: usize) -> u16 {
    1 << (k % 8)
}

fn fan() -> Raw {
    let r = octagon_circumradius();
    let rho = (r / 2.0).tanh();
    let q = std::f64::consts::FRAC_PI_4;
    let mut pos = vec![BASEPOINT];
    let mut sides = vec![0u16];
    for k in 0..8 {
        let w = C64::from_polar(rho, (k as f64 + 0.5) * q);
        pos.push(disk_to_half_plane(w));
        sides.push(side_bit(k) | side_bit(k + 1));
    }
    let tris = (0..8).map(|k| [0, 1 + (k + 7) % 8, 1 + k]).collect();
    Raw { pos, sides, tris }
}

fn subdivide(raw: Raw) -> Raw {
    let Raw { mut pos, mut sides, tris } = raw;
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, pos: &mut Vec<C64>, sides: &mut Vec<u16>| -> usize {
        let key = (a.min(b), a.max(b));
        *mids.entry(key).or_insert_with(|| {
            pos.push(geodesic_point(pos[key.0], pos[key.1], 0.5));
            sides.push(sides[a] & sides[b]);
            pos.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * tris.len());
    for [a, b, c] in tris {
        let ab = mid(a, b, &mut pos, &mut sides);
        let bc = mid(b, c, &mut pos, &mut sides);
        let ca = mid(c, a, &mut pos, &mut sides);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    Raw { pos, sides, tris: out }
}

/// Angles of a hyperbolic triangle from its side lengths, opposite to each
/// corner.
fn hyperbolic_angles(p: &[C64; 3]) -> Result<[f64; 3]> {
    let len = |i: usize, j: usize| hyp_distance(p[i], p[j]);
    let a = len(1, 2)?;
    let b = len(2, 0)?;
    let c = len(0, 1)?;
    let angle = |opp: f64, s1: f64, s2: f64| {
        let cos = (s1.cosh() * s2.cosh() - opp.cosh()) / (s1.sinh() * s2.sinh());
        cos.clamp(-1.0, 1.0).acos()
    };
    Ok([angle(a, b, c), angle(b, c, a), angle(c, a, b)])
}

fn coord_area(p: &[C64; 3]) -> f64 {
    0.5 * ((p[1] - p[0]).conj() * (p[2] - p[0])).im
}

fn same_element(a: &Moebius, b: &Moebius) -> bool {
    a.dist(b) < 1e-6 * (1.0 + a.entries().iter().fold(0.0_f64, |m, x| m.max(x.abs())))
}

/// Triangulates the octagon by a fan of eight triangles around `i`, refined
/// by `refinement` rounds of geodesic midpoint subdivision, and glues the
/// boundary with the side pairings of `g`.
pub fn build_equivariant_mesh(g: &FuchsianGroup, refinement: usize) -> Result<EquivariantMesh> {
    if refinement > REFINEMENT_CAP {
        return Err(Error::CapExceeded { what: "refinement", value: refinement, cap: REFINEMENT_CAP });
    }
    if g.genus != 2 {
        return Err(Error::InvalidArgument(format!("the octagon mesh needs genus 2, got {}", g.genus)));
    }
    let mut raw = fan();
    for _ in 0..refinement {
        raw = subdivide(raw);
    }
    let nraw = raw.pos.len();

    // pairing relations q = γ_j p
    let mut rel: Vec<Vec<(usize, i8)>> = vec![Vec::new(); nraw];
    let mut relations = Vec::new();
    for (j, &(from, to)) in OCTAGON_PAIRINGS.iter().enumerate() {
        let gm = g.generators[j];
        let sides = &raw.sides;
        let on = |k: usize| (0..nraw).filter(move |&p| sides[p] & side_bit(k) != 0);
        let targets: Vec<usize> = on(to).collect();
        for p in on(from) {
            let img = gm.apply_unchecked(raw.pos[p]);
            let q = targets
                .iter()
                .copied()
                .find(|&q| (raw.pos[q] - img).norm() < MATCH_TOL * (1.0 + img.norm()))
                .ok_or_else(|| Error::InvalidArgument(format!("side {from} does not glue onto side {to}")))?;
            let letter = (j + 1) as i8;
            rel[p].push((q, letter));
            rel[q].push((p, -letter));
            relations.push((p, q, letter));
        }
    }

    // vertex classes by BFS; g_q = γ g_p along a relation q = γ p
    let mut class = vec![usize::MAX; nraw];
    let mut word: Vec<GroupWord> = vec![GroupWord::identity(); nraw];
    let mut reps = Vec::new();
    for start in 0..nraw {
        if class[start] != usize::MAX {
            continue;
        }
        let id = reps.len();
        reps.push(start);
        class[start] = id;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &(q, letter) in &rel[p] {
                if class[q] == usize::MAX {
                    class[q] = id;
                    let mut l = vec![letter];
                    l.extend_from_slice(&word[p].letters);
                    word[q] = g.word(&l);
                    queue.push_back(q);
                }
            }
        }
    }
    let mut cycle_residual = 0.0_f64;
    for &(p, q, letter) in &relations {
        let m = word[q].matrix.inverse() * g.letter_matrix(letter) * word[p].matrix;
        cycle_residual = cycle_residual.max(m.projective_dist(&Moebius::IDENTITY));
    }
    if cycle_residual > 1e-8 {
        return Err(Error::InvalidArgument(format!("cycle condition residual {cycle_residual:e}")));
    }

    // faces and edges
    let mut edges: Vec<MeshEdge> = Vec::new();
    let mut by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut faces = Vec::with_capacity(raw.tris.len());
    let mut half_cot = Vec::new();
    for tri in &raw.tris {
        let positions = [raw.pos[tri[0]], raw.pos[tri[1]], raw.pos[tri[2]]];
        let angles = hyperbolic_angles(&positions)?;
        let mut sides = [FaceSide { edge: 0, forward: true }; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (ca, cb) = (class[a], class[b]);
            let h = word[a].inverse().concat(g, &word[b]);
            let cot = 0.5 / angles[(k + 2) % 3].tan();
            let found = by_pair.get(&(ca.min(cb), ca.max(cb))).and_then(|list| {
                list.iter().find_map(|&e| {
                    let ed = &edges[e];
                    if ed.src == ca && ed.dst == cb && same_element(&ed.twist.matrix, &h.matrix) {
                        Some(FaceSide { edge: e, forward: true })
                    } else if ed.src == cb && ed.dst == ca && same_element(&ed.twist.matrix, &h.matrix.inverse()) {
                        Some(FaceSide { edge: e, forward: false })
                    } else {
                        None
                    }
                })
            });
            let side = match found {
                Some(s) => s,
                None => {
                    let e = edges.len();
                    edges.push(MeshEdge {
                        src: ca,
                        dst: cb,
                        twist: h,
                        weight: 0.0,
                        dz: positions[(k + 1) % 3] - positions[k],
                    });
                    half_cot.push(0.0);
                    by_pair.entry((ca.min(cb), ca.max(cb))).or_default().push(e);
                    FaceSide { edge: e, forward: true }
                }
            };
            half_cot[side.edge] += cot;
            sides[k] = side;
        }
        let hyp_area = std::f64::consts::PI - angles.iter().sum::<f64>();
        faces.push(MeshFace {
            corners: [class[tri[0]], class[tri[1]], class[tri[2]]],
            positions,
            twists: [word[tri[0]].clone(), word[tri[1]].clone(), word[tri[2]].clone()],
            sides,
            area: hyp_area,
            coord_area: coord_area(&positions),
        });
    }
    for (e, w) in edges.iter_mut().zip(&half_cot) {
        e.weight = w.max(WEIGHT_FLOOR);
    }
    let total: f64 = faces.iter().map(|f| f.area).sum();
    for f in &mut faces {
        f.area *= 2.0 * std::f64::consts::PI / total;
    }

    let positions: Vec<C64> = reps.iter().map(|&p| raw.pos[p]).collect();
    let colors = greedy_colors(positions.len(), &edges);
    Ok(EquivariantMesh {
        group: g.clone(),
        refinement,
        positions,
        edges,
        faces,
        basepoint: class[0],
        cycle_residual,
        colors,
    })
}

fn greedy_colors(nv: usize, edges: &[MeshEdge]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); nv];
    for e in edges.iter().filter(|e| !e.is_loop()) {
        adj[e.src].push(e.dst);
        adj[e.dst].push(e.src);
    }
    let mut colors = vec![usize::MAX; nv];
    for v in 0..nv {
        let used: Vec<usize> = adj[v].iter().map(|&u| colors[u]).collect();
        colors[v] = (0..).find(|c| !used.contains(c)).unwrap();
    }
    colors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyp::octagon_group;

    #[test]
    fn refinement_zero_glues_to_genus_two() {
        let m = build_equivariant_mesh(&octagon_group(), 0).unwrap();
        assert_eq!(m.faces.len(), 8);
        assert_eq!(m.num_vertices(), 2);
        assert_eq!(m.edges.len(), 12);
        assert_eq!(m.euler_characteristic(), -2);
        assert!(m.cycle_residual < 1e-8);
        assert_eq!(m.basepoint, 0);
    }

    #[test]
    fn refinement_counts() {
        let g = octagon_group();
        for r in 0..=3 {
            let m = build_equivariant_mesh(&g, r).unwrap();
            assert_eq!(m.faces.len(), 8 * 4usize.pow(r as u32));
            assert_eq!(m.euler_characteristic(), -2);
            assert!(m.cycle_residual < 1e-8);
            assert!((m.total_area() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
            assert!(m.edges.iter().all(|e| e.weight > 0.0));
            assert!(m.faces.iter().all(|f| f.coord_area > 0.0));
        }
        assert!(build_equivariant_mesh(&g, REFINEMENT_CAP + 1).is_err());
    }

    #[test]
    fn face_corners_are_translates_of_representatives() {
        let m = build_equivariant_mesh(&octagon_group(), 2).unwrap();
        for f in &m.faces {
            for k in 0..3 {
                let p = f.twists[k].matrix.apply_unchecked(m.positions[f.corners[k]]);
                assert!((p - f.positions[k]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn every_edge_has_two_face_sides() {
        let m = build_equivariant_mesh(&octagon_group(), 2).unwrap();
        let mut count = vec![0; m.edges.len()];
        for f in &m.faces {
            for s in &f.sides {
                count[s.edge] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 2));
    }

    #[test]
    fn coloring_is_proper() {
        let m = build_equivariant_mesh(&octagon_group(), 2).unwrap();
        for e in m.edges.iter().filter(|e| !e.is_loop()) {
            assert_ne!(m.colors[e.src], m.colors[e.dst]);
        }
        let mut order = m.sweep_order();
        order.sort();
        assert_eq!(order, (0..m.num_vertices()).collect::<Vec<_>>());
    }
}
