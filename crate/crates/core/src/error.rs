use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, QopError>;

#[derive(Debug, Error)]
pub enum QopError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("theta series does not converge: Im(tau) = {0} <= 0")]
    NonConvergentTheta(f64),

    #[error("ill-conditioned linear system (condition estimate {condition:.3e}, cap {cap:.1e})")]
    IllConditioned { condition: f64, cap: f64 },

    #[error("matrix shape mismatch: {0}")]
    Shape(String),

    #[error("eigen-decomposition did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("near-singular integrand at grid point ({x:.6}, {y:.6})")]
    SingularIntegrand { x: f64, y: f64 },

    #[error("Sklyanin kernel denominator vanishes at z = {z}, w = {w} (factor j = {j})")]
    SingularKernel {
        z: Complex64,
        w: Complex64,
        j: usize,
    },

    #[error("quadrature not converged at {grid}x{grid}: successive grids differ by {change:.3e}")]
    QuadratureNotConverged { grid: usize, change: f64 },

    #[error("evaluation point {z} too close to a pole or zero of a denominator ({what})")]
    NearSingular { z: Complex64, what: &'static str },

    #[error("function is not a member of the theta space (fresh-point residual {residual:.3e})")]
    OffSpace { residual: f64 },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("zero search failed: {0}")]
    ZeroSearch(String),

    #[error(
        "rank deficiency: best condition estimate {best_condition:.3e} after {attempts} attempts"
    )]
    RankDeficient {
        best_condition: f64,
        attempts: usize,
    },

    #[error("unresolved eigenvalue degeneracy: {0}")]
    UnresolvedDegeneracy(String),

    #[error("dimension {dim} exceeds the dense storage guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },
}
