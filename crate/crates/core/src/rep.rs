//! Representations of the surface group in `SL_n(C)`.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::hyp::{relation_letters, word_ball_letters, FuchsianGroup};
use crate::linalg::{self, CMat, C64};
use crate::par;

/// Generator images `A_1, B_1, ..., A_g, B_g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub n: usize,
    pub genus: usize,
    pub images: Vec<CMat>,
}

impl Representation {
    pub fn new(n: usize, genus: usize, images: Vec<CMat>) -> Result<Self> {
        if images.len() != 2 * genus {
            return Err(Error::InvalidArgument(format!(
                "genus {genus} needs {} images, got {}",
                2 * genus,
                images.len()
            )));
        }
        for m in &images {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidArgument(format!("image of shape {:?}, expected {n}x{n}", m.shape())));
            }
            let d = linalg::det(m);
            if (d - C64::new(1.0, 0.0)).norm() > 1e-8 {
                return Err(Error::InvalidArgument(format!("image with determinant {d}")));
            }
        }
        Ok(Representation { n, genus, images })
    }

    pub fn trivial(n: usize, genus: usize) -> Self {
        Representation { n, genus, images: vec![linalg::identity(n); 2 * genus] }
    }

    /// The group itself, `n = 2`.
    pub fn fuchsian(g: &FuchsianGroup) -> Self {
        Representation { n: 2, genus: g.genus, images: g.generators.iter().map(|m| m.to_cmat()).collect() }
    }

    /// Principal embedding of the group into `SL_n`.
    pub fn principal(g: &FuchsianGroup, n: usize) -> Result<Self> {
        let images = g.generators.iter().map(|m| principal_embedding(n, &m.to_cmat())).collect::<Result<Vec<_>>>()?;
        Ok(Representation { n, genus: g.genus, images })
    }

    pub fn letter(&self, l: i8) -> Result<CMat> {
        let m = &self.images[l.unsigned_abs() as usize - 1];
        if l > 0 {
            Ok(m.clone())
        } else {
            linalg::inverse(m)
        }
    }

    pub fn word_image(&self, letters: &[i8]) -> Result<CMat> {
        let mut acc = linalg::identity(self.n);
        for &l in letters {
            acc *= self.letter(l)?;
        }
        Ok(acc)
    }

    /// First generator to `first`, the others to the identity.
    pub fn abelian(genus: usize, first: CMat) -> Result<Self> {
        if genus == 0 {
            return Err(Error::InvalidArgument("genus must be positive".into()));
        }
        let n = first.nrows();
        let mut images = vec![linalg::identity(n); 2 * genus];
        images[0] = first;
        Representation::new(n, genus, images)
    }

    /// `g ρ g⁻¹`.
    pub fn conjugate(&self, g: &CMat) -> Result<Self> {
        let gi = linalg::inverse(g)?;
        Ok(Representation { n: self.n, genus: self.genus, images: self.images.iter().map(|m| g * m * &gi).collect() })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "n": self.n,
            "genus": self.genus,
            "images": self.images.iter().map(crate::oper::matrix_json).collect::<Vec<_>>(),
        })
    }
}

fn check_invertible(rho: &Representation) -> Result<()> {
    for m in &rho.images {
        let d = linalg::det(m).norm();
        if d < 1e-10 {
            return Err(Error::SingularMatrix(d));
        }
    }
    Ok(())
}

/// `‖Π [A_i, B_i] − I‖`, max-entry norm, with `[A, B] = A B A⁻¹ B⁻¹`.
pub fn relation_residual_rep(rho: &Representation) -> Result<f64> {
    check_invertible(rho)?;
    let p = rho.word_image(&relation_letters(rho.genus))?;
    Ok(linalg::max_abs(&(p - linalg::identity(rho.n))))
}

/// As [`relation_residual_rep`] but also allowing `−I`.
pub fn relation_residual_signed(rho: &Representation) -> Result<f64> {
    check_invertible(rho)?;
    let p = rho.word_image(&relation_letters(rho.genus))?;
    let id = linalg::identity(rho.n);
    Ok(linalg::max_abs(&(&p - &id)).min(linalg::max_abs(&(&p + &id))))
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Polynomial in `(x, y)` of fixed degree stored by the power of `y`.
fn binary_power(a: C64, b: C64, p: usize) -> Vec<C64> {
    // (a x + b y)^p, coefficient of x^{p−j} y^j
    (0..=p).map(|j| a.powu((p - j) as u32) * b.powu(j as u32) * binomial(p, j)).collect()
}

fn poly_mul(u: &[C64], v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); u.len() + v.len() - 1];
    for (i, a) in u.iter().enumerate() {
        for (j, b) in v.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Action of `M` on binary forms of degree `n − 1` in the basis
/// `x^{n−1}, x^{n−2} y, ..., y^{n−1}`: row `k` holds the coordinates of
/// `(a x + b y)^{n−1−k} (c x + d y)^k`.
pub fn principal_embedding(n: usize, m: &CMat) -> Result<CMat> {
    if n == 0 || m.shape() != (2, 2) {
        return Err(Error::InvalidArgument("principal embedding needs n ≥ 1 and a 2x2 matrix".into()));
    }
    let d = linalg::det(m);
    if (d - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidArgument(format!("matrix is not unimodular (det {d})")));
    }
    let (a, b, c, dd) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let p = n - 1;
    let mut out = CMat::zeros(n, n);
    for k in 0..n {
        let row = poly_mul(&binary_power(a, b, p - k), &binary_power(c, dd, k));
        for (j, v) in row.into_iter().enumerate() {
            out[(k, j)] = v;
        }
    }
    Ok(out)
}

/// Relative singular-value threshold for null spaces.
pub const NULL_THRESHOLD: f64 = 1e-8;

/// Dimension of `{X : X A_i = A_i X for all i}`.
pub fn commutant_dimension(rho: &Representation) -> usize {
    let n = rho.n;
    let nn = n * n;
    let id = linalg::identity(n);
    // vec(XA − AX) = (Aᵀ ⊗ I − I ⊗ A) vec(X) in column-major vec
    let mut stacked = CMat::zeros(nn * rho.images.len().max(1), nn);
    for (i, a) in rho.images.iter().enumerate() {
        let block = linalg::kron(&a.transpose(), &id) - linalg::kron(&id, a);
        stacked.view_mut((i * nn, 0), (nn, nn)).copy_from(&block);
    }
    let s = linalg::singular_values(&stacked);
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return nn;
    }
    nn - s.iter().filter(|&&x| x > NULL_THRESHOLD * top).count()
}

/// `max ‖M*M − I‖` over images of words of length ≤ `radius`.
pub fn unitarity_margin(rho: &Representation, radius: usize) -> Result<f64> {
    let words = word_ball_letters(rho.genus, radius)?;
    let inverses = rho.images.iter().map(linalg::inverse).collect::<Result<Vec<_>>>()?;
    let margins = par::map(&words, |w| {
        let mut acc = linalg::identity(rho.n);
        for &l in w {
            let idx = l.unsigned_abs() as usize - 1;
            acc *= if l > 0 { &rho.images[idx] } else { &inverses[idx] };
        }
        linalg::max_abs(&(acc.adjoint() * &acc - linalg::identity(rho.n)))
    });
    Ok(margins.into_iter().fold(0.0, f64::max))
}

/// Dimensions `2j − 1`, `j = 2..n`, of the irreducible summands of the
/// trace-free endomorphisms of `Sym^{n−1}`.
pub fn clebsch_gordon_dims(n: usize) -> Vec<usize> {
    (2..=n).map(|j| 2 * j - 1).collect()
}

/// Dimension bookkeeping for the moduli spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModuliDimensions {
    pub n: usize,
    pub g: usize,
    pub betti: usize,
    pub hitchin_base: usize,
    /// `(q, dim H¹(X, V_q))` for `q = 2..n`.
    pub eichler_h1: Vec<(usize, usize)>,
}

/// `dim H⁰(K^q) = (2q − 1)(g − 1)` for `q ≥ 2`.
pub fn differentials_dimension(q: usize, g: usize) -> usize {
    (2 * q - 1) * (g - 1)
}

pub fn eichler_h1(q: usize, g: usize) -> usize {
    2 * differentials_dimension(q, g)
}

pub fn moduli_dimensions(n: usize, g: usize) -> Result<ModuliDimensions> {
    if n < 2 || g < 2 {
        return Err(Error::InvalidArgument(format!("need n ≥ 2 and g ≥ 2, got n = {n}, g = {g}")));
    }
    let betti = (n * n - 1) * (2 * g - 2);
    let hitchin_base: usize = (2..=n).map(|j| differentials_dimension(j, g)).sum();
    if betti != 2 * hitchin_base {
        return Err(Error::InvalidArgument(format!("dimension mismatch {betti} vs 2·{hitchin_base}")));
    }
    Ok(ModuliDimensions { n, g, betti, hitchin_base, eichler_h1: (2..=n).map(|q| (q, eichler_h1(q, g))).collect() })
}
