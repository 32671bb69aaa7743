//! Dense complex linear algebra, periodic quadrature and analytic zero
//! finding.

pub mod linalg;
pub mod quadrature;
pub mod zeros;

pub use linalg::{
    column_space, column_space_absolute, condition_number, eig_decompose, frobenius, kron,
    relative_difference, solve_linear, solve_linear_with_cap, vector_relative_difference,
    DenseMatrix, Eigen, LinearSolution, DEFAULT_CONDITION_CAP,
};
pub use quadrature::{trapezoid_2d, trapezoid_2d_offset, trapezoid_2d_vector};
pub use zeros::{
    find_zeros_in_rectangle, find_zeros_with_options, Rectangle, ZeroSearchOptions,
    ZeroSearchResult,
};
