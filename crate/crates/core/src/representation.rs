//! The spin-`l` representation of the Sklyanin algebra on the
//! `(2l+1)`-dimensional space of even theta functions
//!
//! ```text
//! f(z+1) = f(−z) = f(z),   f(z+τ) = e^{−4lπi(2z+τ)} f(z),
//! ```
//!
//! realised in the basis `e_k(z; a, b) = [z;a]_k [z;b]_{2l−k}`.
//! Functions are converted to coefficient vectors by collocation, and
//! every expansion is re-checked at independent points so that a function
//! outside the space is reported rather than silently projected.

use std::f64::consts::PI;

use nalgebra::{DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QopError, Result};
use crate::lattice::{w_weights, WeightShift};
use crate::numerics::{condition_number, frobenius, DenseMatrix};
use crate::theta::{lattice_distance, za_bracket_k, ModelParams, ThetaChar, C64, I};

pub const DEFAULT_BASIS_A: f64 = 0.2313;
pub const DEFAULT_BASIS_B: f64 = -0.4177;

/// Relative tolerance of the fresh-point membership check.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
pub const COLLOCATION_CONDITION_CAP: f64 = 1e8;
/// Collocation and check points keep `|θ_11(2z)|` above this.
pub const DENOMINATOR_GUARD: f64 = 1e-3;
const MAX_RESAMPLES: usize = 20;
const FRESH_POINTS: usize = 3;
const GENERICITY_GAP: f64 = 1e-6;

/// Basis `e_k(z; a, b)` of the theta space together with a collocation
/// scheme for computing coordinates.
#[derive(Clone, Debug)]
pub struct ThetaBasis {
    params: ModelParams,
    a: C64,
    b: C64,
    points: Vec<C64>,
    fresh: Vec<C64>,
    collocation: DenseMatrix,
    lu: LU<C64, Dyn, Dyn>,
    condition: f64,
    seed: u64,
}

impl ThetaBasis {
    /// Default basis parameters; they are redrawn from the seeded generator
    /// only if genericity or conditioning fails.
    pub fn new(params: &ModelParams, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = C64::new(DEFAULT_BASIS_A, 0.0);
        let mut b = C64::new(DEFAULT_BASIS_B, 0.0);
        let mut last_err = None;
        for _ in 0..=MAX_RESAMPLES {
            match Self::build(params, a, b, seed, &mut rng) {
                Ok(basis) => return Ok(basis),
                Err(e) => last_err = Some(e),
            }
            a = C64::new(rng.gen_range(-0.5..0.5), 0.0);
            b = C64::new(rng.gen_range(-0.5..0.5), 0.0);
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Basis with explicit parameters `a`, `b`.
    pub fn with_parameters(params: &ModelParams, a: C64, b: C64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(params, a, b, seed, &mut rng)
    }

    fn build(
        params: &ModelParams,
        a: C64,
        b: C64,
        seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        params.validate()?;
        check_genericity(a, b, params.two_l as usize, params)?;
        let d = params.site_dim();
        let mut best = f64::INFINITY;
        for _ in 0..MAX_RESAMPLES {
            let points: Vec<C64> = (0..d).map(|_| draw_point(params, rng)).collect();
            let fresh: Vec<C64> = (0..FRESH_POINTS).map(|_| draw_point(params, rng)).collect();
            let collocation =
                DenseMatrix::from_fn(d, d, |m, k| basis_value(params, a, b, k, points[m]));
            let condition = condition_number(&collocation);
            best = best.min(condition);
            if condition.is_finite() && condition < COLLOCATION_CONDITION_CAP {
                let lu = collocation.clone().lu();
                let basis = ThetaBasis {
                    params: *params,
                    a,
                    b,
                    points,
                    fresh,
                    collocation,
                    lu,
                    condition,
                    seed,
                };
                basis.check_space_laws()?;
                return Ok(basis);
            }
        }
        Err(QopError::IllConditioned {
            condition: best,
            cap: COLLOCATION_CONDITION_CAP,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.site_dim()
    }

    pub fn parameters(&self) -> (C64, C64) {
        (self.a, self.b)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn collocation_points(&self) -> &[C64] {
        &self.points
    }

    pub fn collocation_matrix(&self) -> &DenseMatrix {
        &self.collocation
    }

    pub fn collocation_condition(&self) -> f64 {
        self.condition
    }

    /// `e_k(z; a, b)`.
    pub fn eval(&self, k: usize, z: C64) -> C64 {
        basis_value(&self.params, self.a, self.b, k, z)
    }

    /// The function with coordinates `coeffs`, evaluated at `z`.
    pub fn evaluate(&self, coeffs: &DVector<C64>, z: C64) -> C64 {
        (0..self.dim()).map(|k| coeffs[k] * self.eval(k, z)).sum()
    }

    /// Coordinates of `f`; errors with [`QopError::OffSpace`] when `f` fails
    /// the fresh-point check.
    pub fn expand<F: Fn(C64) -> C64>(&self, f: F) -> Result<DVector<C64>> {
        self.try_expand(|z| Ok(f(z)))
    }

    pub fn try_expand<F: Fn(C64) -> Result<C64>>(&self, f: F) -> Result<DVector<C64>> {
        let (c, residual) = self.expand_with_residual(f)?;
        if residual > MEMBERSHIP_TOL {
            return Err(QopError::OffSpace { residual });
        }
        Ok(c)
    }

    /// Coordinates and the fresh-point residual, without the membership
    /// verdict.
    pub fn expand_with_residual<F: Fn(C64) -> Result<C64>>(
        &self,
        f: F,
    ) -> Result<(DVector<C64>, f64)> {
        let rhs = self
            .points
            .iter()
            .map(|&z| f(z))
            .collect::<Result<Vec<_>>>()?;
        let c = self
            .lu
            .solve(&DVector::from_vec(rhs))
            .ok_or(QopError::IllConditioned {
                condition: self.condition,
                cap: COLLOCATION_CONDITION_CAP,
            })?;
        let mut residual: f64 = 0.0;
        for &z in &self.fresh {
            let fz = f(z)?;
            let terms: Vec<C64> = (0..self.dim()).map(|k| c[k] * self.eval(k, z)).collect();
            let approx: C64 = terms.iter().sum();
            let scale = terms
                .iter()
                .map(|t| t.norm())
                .sum::<f64>()
                .max(fz.norm())
                .max(f64::MIN_POSITIVE);
            residual = residual.max((approx - fz).norm() / scale);
        }
        Ok((c, residual))
    }

    /// Matrix whose column `k` holds the coordinates of `op(e_k)`.
    pub fn operator_matrix<Op>(&self, op: Op) -> Result<DenseMatrix>
    where
        Op: Fn(&dyn Fn(C64) -> C64, C64) -> Result<C64>,
    {
        let d = self.dim();
        let mut m = DenseMatrix::zeros(d, d);
        for k in 0..d {
            let ek = |z: C64| self.eval(k, z);
            let col = self.try_expand(|z| op(&ek, z))?;
            m.set_column(k, &col);
        }
        Ok(m)
    }

    /// Largest relative violation of `f(z+1) = f(−z) = f(z)` and of the
    /// τ-quasi-periodicity over the basis functions at the check points.
    pub fn space_law_residual(&self) -> f64 {
        let p = &self.params;
        let four_l = 2.0 * f64::from(p.two_l);
        let mut worst: f64 = 0.0;
        for k in 0..self.dim() {
            for &z in self.fresh.iter().chain(self.points.iter()) {
                let f = self.eval(k, z);
                let scale = f.norm().max(f64::MIN_POSITIVE);
                let shifted = (four_l * PI * I * (2.0 * z + p.tau)).exp() * self.eval(k, z + p.tau);
                worst = worst
                    .max((self.eval(k, z + 1.0) - f).norm() / scale)
                    .max((self.eval(k, -z) - f).norm() / scale)
                    .max((shifted - f).norm() / scale.max(shifted.norm()));
            }
        }
        worst
    }

    fn check_space_laws(&self) -> Result<()> {
        let r = self.space_law_residual();
        if r > MEMBERSHIP_TOL {
            return Err(QopError::OffSpace { residual: r });
        }
        Ok(())
    }
}

fn basis_value(params: &ModelParams, a: C64, b: C64, k: usize, z: C64) -> C64 {
    natural_basis_value(z, k, params.two_l as usize, a, b, params)
}

/// `e^N_k(z; a, b) = [z;a]_k [z;b]_{N−k}`.
pub fn natural_basis_value(
    z: C64,
    k: usize,
    n: usize,
    a: C64,
    b: C64,
    params: &ModelParams,
) -> C64 {
    za_bracket_k(z, a, k, params) * za_bracket_k(z, b, n - k, params)
}

/// Genericity of `(a, b)` for the basis `e^N_k(z; a, b)`:
/// `a − b + 2jη` (|j| < N) and `a + b + 2jη` (0 ≤ j < N) off the lattice.
pub fn check_genericity(a: C64, b: C64, n: usize, params: &ModelParams) -> Result<()> {
    let n = n as i64;
    let eta = params.eta;
    for j in (1 - n)..n {
        if lattice_distance(a - b + 2.0 * j as f64 * eta, params.tau) < GENERICITY_GAP {
            return Err(QopError::Degenerate(format!(
                "a − b + {}η lies on the period lattice",
                2 * j
            )));
        }
    }
    for j in 0..n {
        if lattice_distance(a + b + 2.0 * j as f64 * eta, params.tau) < GENERICITY_GAP {
            return Err(QopError::Degenerate(format!(
                "a + b + {}η lies on the period lattice",
                2 * j
            )));
        }
    }
    Ok(())
}

fn draw_point(params: &ModelParams, rng: &mut ChaCha8Rng) -> C64 {
    let t = params.tau.im;
    loop {
        let z = C64::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05 * t..0.45 * t));
        if params.theta(ThetaChar::T11, 2.0 * z).norm() >= DENOMINATOR_GUARD {
            return z;
        }
    }
}

/// `s_a(z)` of the difference-operator realisation.
pub fn s_function(a: usize, z: C64, params: &ModelParams) -> C64 {
    let eta = params.eta_c();
    match a {
        0 => params.theta(ThetaChar::T11, eta) * params.theta(ThetaChar::T11, 2.0 * z),
        1 => params.theta(ThetaChar::T10, eta) * params.theta(ThetaChar::T10, 2.0 * z),
        2 => I * params.theta(ThetaChar::T00, eta) * params.theta(ThetaChar::T00, 2.0 * z),
        3 => params.theta(ThetaChar::T01, eta) * params.theta(ThetaChar::T01, 2.0 * z),
        _ => panic!("generator index {a} out of range"),
    }
}

/// `(S^a f)(z) = [s_a(z−lη) f(z+η) − s_a(−z−lη) f(z−η)] / θ_11(2z)`.
pub fn apply_difference_op<F: Fn(C64) -> C64 + ?Sized>(
    a: usize,
    f: &F,
    z: C64,
    params: &ModelParams,
) -> Result<C64> {
    let den = params.theta(ThetaChar::T11, 2.0 * z);
    if den.norm() < DENOMINATOR_GUARD {
        return Err(QopError::NearSingular {
            z,
            what: "θ_11(2z) in the difference operator",
        });
    }
    let leta = params.spin() * params.eta;
    let eta = params.eta;
    Ok((s_function(a, z - leta, params) * f(z + eta)
        - s_function(a, -z - leta, params) * f(z - eta))
        / den)
}

/// Matrices of the four generators `S^0..S^3` in a fixed basis.
#[derive(Clone, Debug)]
pub struct RepMatrices {
    pub s: [DenseMatrix; 4],
}

impl RepMatrices {
    pub fn dim(&self) -> usize {
        self.s[0].nrows()
    }
}

pub fn rep_matrices(basis: &ThetaBasis) -> Result<RepMatrices> {
    let p = *basis.params();
    let build = |a: usize| basis.operator_matrix(|f, z| apply_difference_op(a, f, z, &p));
    Ok(RepMatrices {
        s: [build(0)?, build(1)?, build(2)?, build(3)?],
    })
}

/// `J_{β,γ} = (W_β² − W_γ²)/(W_α² − W_0²)` for `α = 1, 2, 3` with
/// `(α, β, γ)` cyclic, at spectral parameter `u`.
pub fn structure_constants(u: C64, params: &ModelParams) -> Result<[C64; 3]> {
    let w = w_weights(u, params, WeightShift::L)?;
    let sq: Vec<C64> = w.iter().map(|x| x * x).collect();
    let mut j = [C64::new(0.0, 0.0); 3];
    for alpha in 1..=3 {
        let beta = alpha % 3 + 1;
        let gamma = beta % 3 + 1;
        let den = sq[alpha] - sq[0];
        if den.norm() < 1e-12 * sq[alpha].norm().max(sq[0].norm()).max(1.0) {
            return Err(QopError::Degenerate(format!(
                "structure constant denominator vanishes at u = {u}"
            )));
        }
        j[alpha - 1] = (sq[beta] - sq[gamma]) / den;
    }
    Ok(j)
}

#[derive(Clone, Copy, Debug)]
pub struct CommutationReport {
    /// Largest relative residual over the six quadratic relations.
    pub residual: f64,
    /// Relative change of the structure constants between two values of `u`.
    pub j_drift: f64,
}

/// Residuals of
///
/// ```text
/// [S^α, S^0] = −i J_{β,γ} {S^β, S^γ},   [S^α, S^β] = i {S^0, S^γ}
/// ```
///
/// normalised by `max_a ‖S^a‖²`.
pub fn commutation_residual(rep: &RepMatrices, params: &ModelParams) -> Result<CommutationReport> {
    let j = structure_constants(C64::new(0.3, 0.0), params)?;
    let j2 = structure_constants(C64::new(0.7, 0.0), params)?;
    let j_drift = (0..3)
        .map(|i| (j[i] - j2[i]).norm() / j[i].norm().max(j2[i].norm()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);

    let s = &rep.s;
    let scale = s
        .iter()
        .map(frobenius)
        .fold(0.0, f64::max)
        .powi(2)
        .max(f64::MIN_POSITIVE);
    let comm = |x: &DenseMatrix, y: &DenseMatrix| x * y - y * x;
    let anti = |x: &DenseMatrix, y: &DenseMatrix| x * y + y * x;
    let mut residual: f64 = 0.0;
    for alpha in 1..=3 {
        let beta = alpha % 3 + 1;
        let gamma = beta % 3 + 1;
        let r1 = comm(&s[alpha], &s[0]) + anti(&s[beta], &s[gamma]) * (I * j[alpha - 1]);
        let r2 = comm(&s[alpha], &s[beta]) - anti(&s[0], &s[gamma]) * I;
        residual = residual
            .max(frobenius(&r1) / scale)
            .max(frobenius(&r2) / scale);
    }
    Ok(CommutationReport { residual, j_drift })
}

/// Change of basis to `θ_00(2z,2τ) ∓ θ_10(2z,2τ)` for spin 1/2, in which the
/// generators become `θ_11(2η)·σ^a`. Returns the largest entrywise deviation
/// relative to `|θ_11(2η)|`.
pub fn pauli_reduction_residual(basis: &ThetaBasis, rep: &RepMatrices) -> Result<f64> {
    let p = basis.params();
    if p.two_l != 1 {
        return Err(QopError::InvalidParameter {
            field: "l",
            reason: "Pauli reduction needs spin 1/2".into(),
        });
    }
    let v1 = basis.expand(|z| {
        p.theta_double(ThetaChar::T00, 2.0 * z) - p.theta_double(ThetaChar::T10, 2.0 * z)
    })?;
    let v2 = basis.expand(|z| {
        p.theta_double(ThetaChar::T00, 2.0 * z) + p.theta_double(ThetaChar::T10, 2.0 * z)
    })?;
    let mut change = DenseMatrix::zeros(2, 2);
    change.set_column(0, &v1);
    change.set_column(1, &v2);
    let inv = change
        .clone()
        .try_inverse()
        .ok_or(QopError::IllConditioned {
            condition: f64::INFINITY,
            cap: COLLOCATION_CONDITION_CAP,
        })?;
    let c = p.theta(ThetaChar::T11, 2.0 * p.eta_c());
    let pauli = pauli_matrices();
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        let m = &inv * &rep.s[a] * &change - &pauli[a] * c;
        worst = worst.max(m.iter().map(|x| x.norm()).fold(0.0, f64::max) / c.norm());
    }
    Ok(worst)
}

/// `σ^0 = 1, σ^1, σ^2, σ^3`.
pub fn pauli_matrices() -> [DenseMatrix; 4] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    [
        DenseMatrix::identity(2, 2),
        DenseMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        DenseMatrix::from_row_slice(2, 2, &[o, -I, I, o]),
        DenseMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
    ]
}

/// The involutions `U_1, U_2 = U_3 U_1, U_3`.
#[derive(Clone, Debug)]
pub struct UMatrices {
    pub u1: DenseMatrix,
    pub u2: DenseMatrix,
    pub u3: DenseMatrix,
}

impl UMatrices {
    /// `U_a` for `a = 1, 2, 3`.
    pub fn get(&self, a: usize) -> &DenseMatrix {
        match a {
            1 => &self.u1,
            2 => &self.u2,
            3 => &self.u3,
            _ => panic!("U index {a} out of range"),
        }
    }
}

/// `(U_1 f)(z) = e^{πil} f(z+1/2)`, `(U_3 f)(z) = e^{πil} e^{πil(4z+τ)} f(z+τ/2)`.
pub fn u_matrices(basis: &ThetaBasis) -> Result<UMatrices> {
    let p = *basis.params();
    let l = p.spin();
    let phase = (PI * I * l).exp();
    let u1 = basis.operator_matrix(|f, z| Ok(phase * f(z + 0.5)))?;
    let u3 = basis.operator_matrix(|f, z| {
        Ok(phase * (PI * I * l * (4.0 * z + p.tau)).exp() * f(z + p.tau * 0.5))
    })?;
    let u2 = &u3 * &u1;
    Ok(UMatrices { u1, u2, u3 })
}

/// Largest relative residual of the `U_a` relations:
/// `U_a² = (−1)^{2l}`, `U_a U_b = (−1)^{2l} U_b U_a = U_c` (cyclic), and
/// `U_a^{-1} S^b U_a = ±S^b` with the signs of the automorphism `X_a`.
/// Each residual is relative to the product of its factor norms.
pub fn u_relation_residual(u: &UMatrices, rep: &RepMatrices, params: &ModelParams) -> Result<f64> {
    let d = rep.dim();
    let sign = if params.two_l % 2 == 0 { 1.0 } else { -1.0 };
    let id = DenseMatrix::identity(d, d);
    // Product identities are measured against ‖A‖·‖B‖ of their factors: the
    // natural basis is far from unitary, so U_a² = ±1 carries cancellation
    // of order ‖U_a‖².
    let rel = |x: &DenseMatrix, y: &DenseMatrix, factors: f64| {
        let scale = frobenius(x)
            .max(frobenius(y))
            .max(factors)
            .max(f64::MIN_POSITIVE);
        frobenius(&(x - y)) / scale
    };
    let mut worst: f64 = 0.0;
    for a in 1..=3 {
        let ua = u.get(a);
        let na = frobenius(ua);
        worst = worst.max(rel(&(ua * ua), &(&id * C64::new(sign, 0.0)), na * na));
        let b = a % 3 + 1;
        let c = b % 3 + 1;
        let ub = u.get(b);
        let nab = na * frobenius(ub);
        let ab = ua * ub;
        worst = worst.max(rel(&ab, &((ub * ua) * C64::new(sign, 0.0)), nab));
        worst = worst.max(rel(&ab, u.get(c), nab));

        let inv = ua.clone().try_inverse().ok_or(QopError::IllConditioned {
            condition: f64::INFINITY,
            cap: COLLOCATION_CONDITION_CAP,
        })?;
        let ninv = frobenius(&inv);
        for g in 0..4 {
            let flip = if g == 0 || g == a { 1.0 } else { -1.0 };
            let conj = &inv * &rep.s[g] * ua;
            worst = worst.max(rel(
                &conj,
                &(&rep.s[g] * C64::new(flip, 0.0)),
                ninv * frobenius(&rep.s[g]) * na,
            ));
        }
    }
    Ok(worst)
}
