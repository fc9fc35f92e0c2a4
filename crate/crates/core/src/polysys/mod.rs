//! Small polynomial-system kernels: univariate real roots, the
//! hidden-variable solver for three quadrics, and the multi-start solver
//! for the four-cubic stationarity system.

mod cubic4;
mod poly1;
mod quadrics;

pub use cubic4::{
    monomial_index, solve_cubic_stationarity, symmetry_representative, CubicSystem4,
    CUBIC4_MONOMIALS,
};
pub use poly1::{real_roots, Poly1};
pub use quadrics::{
    resultant_determinant, resultant_polynomial, solve_three_quadrics,
    solve_three_quadrics_hiding, x_monomials, QuadricTriple,
};
