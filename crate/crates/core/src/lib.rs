//! Numerical laboratory for the orthogonal Laplacian `Δ⊥u = ∇·(P∇u)`,
//! `P = I − ŵŵᵀ`, induced by a constraining vector field `w`.

pub mod expr;
pub mod field;
pub mod grid;
pub mod krylov;
pub mod montecarlo;
pub mod par;
pub mod poincare;
pub mod assembly;
pub mod diffusion;
pub mod sparse;
