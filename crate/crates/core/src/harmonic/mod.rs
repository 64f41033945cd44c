//! Discrete ρ-equivariant harmonic maps into positive hermitian matrices of
//! determinant one.
//!
//! Equivariance reads `u(γx) = ρ(γ) u(x) ρ(γ)*`. A map is stored by its
//! values at vertex-class representatives; edges carry the group element
//! that carries the far endpoint into position.

pub mod mesh;
pub mod posherm;
pub mod psi;
pub mod solve;

pub use mesh::{build_equivariant_mesh, EquivariantMesh, FaceSide, MeshEdge, MeshFace};
pub use posherm::{dist_d, geodesic, PosHermitian};
pub use psi::{higgs_from_psi, polar_connection, psi_divergence, psi_field, HiggsFace, IdentityReport, PsiField};
pub use solve::{
    discrete_energy, divergence_monitor, harmonic_solve, karcher_gradient_norm, map_geodesic, DivergenceConfig,
    EquivariantMap, HarmonicOptions, HarmonicReport, Twists,
};
