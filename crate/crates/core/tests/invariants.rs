use std::sync::OnceLock;

use hodge_core::gauge::{self, donaldson_j, random_connection, random_higgs, random_unitary_gauge, ymh_value};
use hodge_core::harmonic::posherm::random_pos_hermitian;
use hodge_core::harmonic::{
    build_equivariant_mesh, discrete_energy, dist_d, geodesic, EquivariantMap, EquivariantMesh,
};
use hodge_core::hn::{dominance_leq, enumerate_admissible_types, filtration_degrees, oper_hn_type};
use hodge_core::hyp::octagon_group;
use hodge_core::jets::jet_of_rational;
use hodge_core::linalg::{self, c, CMat};
use hodge_core::oper::schwarzian;
use hodge_core::rep::Representation;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mesh() -> &'static EquivariantMesh {
    static MESH: OnceLock<EquivariantMesh> = OnceLock::new();
    MESH.get_or_init(|| build_equivariant_mesh(&octagon_group(), 1).unwrap())
}

/// A determinant-one complex 2x2 matrix near the identity.
fn sl2(a: f64, b: f64, cc: f64, im: f64) -> CMat {
    let m = linalg::from_rows(&[&[c(1.0 + a, im), c(b, 0.0)], &[c(cc, -im), c(1.0, 0.0)]]);
    let s = linalg::det(&m).sqrt();
    m.map(|z| z / s)
}

fn random_map(n: usize, vertices: usize, rng: &mut ChaCha8Rng) -> EquivariantMap {
    EquivariantMap { values: (0..vertices).map(|_| random_pos_hermitian(n, 0.4, rng)).collect() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moebius_maps_have_zero_schwarzian(
        a in (-1.0f64..1.0, -1.0f64..1.0),
        b in (-1.0f64..1.0, -1.0f64..1.0),
        p in (-1.0f64..1.0, -3.0f64..-1.0),
        z in (-0.8f64..0.8, 0.5f64..2.0),
    ) {
        let (a, b, p) = (c(a.0, a.1), c(b.0, b.1), c(p.0, p.1));
        prop_assume!((a * p + b).norm() > 0.1);
        let m = jet_of_rational(&[b, a], &[(p, 1)]);
        let s = schwarzian(&m, c(z.0, z.1)).unwrap();
        prop_assert!(s.norm() < 1e-11, "{s}");
    }

    #[test]
    fn oper_type_dominates_every_admissible_type(n in 2usize..=8, g in 2usize..=5) {
        let top = oper_hn_type(n, g).unwrap();
        let degrees = filtration_degrees(n, g).unwrap();
        let slopes = top.expanded();
        for j in 1..n {
            let partial: i64 = slopes[..j].iter().map(|s| s.to_integer()).sum();
            prop_assert_eq!(partial, (j * (n - j) * (g - 1)) as i64);
            prop_assert_eq!(degrees.degs[j - 1], partial);
        }
        if n <= 5 && g <= 3 {
            for t in enumerate_admissible_types(n, g).unwrap() {
                prop_assert!(dominance_leq(&t, &top).unwrap(), "{t} vs {top}");
            }
        }
    }

    #[test]
    fn hitchin_map_is_conjugation_invariant(
        entries in proptest::collection::vec(-1.0f64..1.0, 8),
        g in (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5),
    ) {
        let phi = CMat::from_fn(2, 2, |i, j| c(entries[2 * (2 * i + j)], entries[2 * (2 * i + j) + 1]));
        let g = sl2(g.0, g.1, g.2, g.3);
        let conj = &g * &phi * linalg::inverse(&g).unwrap();
        for (x, y) in gauge::hitchin_map_point(&phi).iter().zip(gauge::hitchin_map_point(&conj)) {
            prop_assert!((x - y).norm() < 1e-10 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn geodesic_midpoint_halves_the_distance(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pos_hermitian(n, 0.8, &mut rng);
        let p = random_pos_hermitian(n, 0.8, &mut rng);
        let d = dist_d(&m, &p).unwrap();
        let mid = geodesic(&m, &p, 0.5).unwrap();
        prop_assert!((dist_d(&m, &mid).unwrap() - d / 2.0).abs() < 1e-9 * (1.0 + d));
        prop_assert!((dist_d(&mid, &p).unwrap() - d / 2.0).abs() < 1e-9 * (1.0 + d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_is_invariant_under_change_of_frame(
        seed in any::<u64>(),
        g in (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5),
    ) {
        let m = mesh();
        let rho = Representation::fuchsian(&octagon_group());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_map(2, m.num_vertices(), &mut rng);
        let g = sl2(g.0, g.1, g.2, g.3);
        let e0 = discrete_energy(m, &rho, &u).unwrap();
        let e1 = discrete_energy(m, &rho.conjugate(&g).unwrap(), &u.translate(&g)).unwrap();
        prop_assert!((e0 - e1).abs() < 1e-9 * e0.max(1.0), "{e0} vs {e1}");
    }

    #[test]
    fn ymh_and_j_are_unitary_gauge_invariant(seed in any::<u64>(), n in 2usize..=3) {
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_connection(m, n, 0.4, &mut rng);
        let phi = random_higgs(m, n, 0.5, &mut rng);
        let g = random_unitary_gauge(m, n, &mut rng);
        let (a2, phi2) = (a.gauge_transform(m, &g), phi.gauge_transform(&g));
        let (y1, _) = ymh_value(m, &a, &phi).unwrap();
        let (y2, _) = ymh_value(m, &a2, &phi2).unwrap();
        prop_assert!((y1 - y2).abs() < 1e-9 * y1.max(1.0));
        let j1 = donaldson_j(m, &a, &phi, 0.0).unwrap();
        let j2 = donaldson_j(m, &a2, &phi2, 0.0).unwrap();
        prop_assert!(j1 >= 0.0);
        prop_assert!((j1 - j2).abs() < 1e-9 * j1.max(1.0));
    }
}
