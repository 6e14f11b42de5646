//! Dense linear algebra and seeded randomness shared by every other module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{solve_spd, symmetric_eigenvalues, top_k_principal_components, PrincipalComponents};
pub use matrix::{dot, matmul, norm, Matrix};
pub use rng::{stream, Rng};
