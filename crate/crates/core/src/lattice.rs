//! L-operators, Baxter's R-matrix, the transfer matrix, gauge matrices and
//! local pseudo-vacua.
//!
//! Chain vectors and operators use the ordering `V_N ⊗ ⋯ ⊗ V_1`: site `j`
//! contributes digit `k_j` with weight `(2l+1)^{j−1}` (site 1 fastest), so
//! a product vector is `kron(g_N, …, g_1)`.
//!
//! Auxiliary indices `0, 1` stand for the signs `−, +`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{QopError, Result};
use crate::numerics::{frobenius, kron, vector_relative_difference, DenseMatrix};
use crate::representation::{pauli_matrices, RepMatrices, ThetaBasis, UMatrices};
use crate::sklyanin::OrthonormalFrame;
use crate::theta::{bracket_k, ModelParams, ThetaChar, C64, I};

/// Largest chain dimension stored densely.
pub const DIMENSION_GUARD: usize = 4096;
/// Gauge matrices with `|det| ≤` this are rejected.
pub const GAUGE_DET_GUARD: f64 = 1e-10;

/// `W^L` or the R-matrix weights `W^R(u) = W^L(u + η)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightShift {
    L,
    R,
}

const WEIGHT_CHARS: [ThetaChar; 4] = [
    ThetaChar::T11,
    ThetaChar::T10,
    ThetaChar::T00,
    ThetaChar::T01,
];

/// `W_a(u) = θ_a(u)/θ_a(η)` with `θ_0..θ_3 = θ_11, θ_10, θ_00, θ_01`.
pub fn w_weights(u: C64, params: &ModelParams, shift: WeightShift) -> Result<[C64; 4]> {
    let eta = params.eta_c();
    let arg = match shift {
        WeightShift::L => u,
        WeightShift::R => u + eta,
    };
    let mut w = [C64::new(0.0, 0.0); 4];
    for (a, ch) in WEIGHT_CHARS.iter().enumerate() {
        let den = params.theta(*ch, eta);
        if den.norm() < 1e-14 {
            return Err(QopError::Degenerate(format!(
                "theta_{}{}(eta) vanishes",
                ch.a, ch.b
            )));
        }
        w[a] = params.theta(*ch, arg) / den;
    }
    Ok(w)
}

/// `L(u) = Σ_a W_a(u) S^a ⊗ σ^a` as a 2×2 array of site operators.
#[derive(Clone, Debug)]
pub struct LOperator {
    pub blocks: [[DenseMatrix; 2]; 2],
}

impl LOperator {
    pub fn block(&self, eps: usize, eps2: usize) -> &DenseMatrix {
        &self.blocks[eps][eps2]
    }

    /// The operator on `C² ⊗ V` (auxiliary index outermost).
    pub fn full(&self) -> DenseMatrix {
        let d = self.blocks[0][0].nrows();
        let mut m = DenseMatrix::zeros(2 * d, 2 * d);
        for e in 0..2 {
            for f in 0..2 {
                m.view_mut((e * d, f * d), (d, d))
                    .copy_from(&self.blocks[e][f]);
            }
        }
        m
    }
}

pub fn l_operator(u: C64, rep: &RepMatrices, params: &ModelParams) -> Result<LOperator> {
    let w = w_weights(u, params, WeightShift::L)?;
    let s = &rep.s;
    let ws = |a: usize| &s[a] * w[a];
    Ok(LOperator {
        blocks: [
            [ws(0) + ws(3), ws(1) - ws(2) * I],
            [ws(1) + ws(2) * I, ws(0) - ws(3)],
        ],
    })
}

/// Largest residual of the adjoint block law
/// `L_{−−}(u)* = −L_{++}(−ū)`, `L_{−+}(u)* = L_{+−}(−ū)` (and the mirrored pair).
pub fn l_adjoint_residual(
    u: C64,
    rep: &RepMatrices,
    frame: &OrthonormalFrame,
    params: &ModelParams,
) -> Result<f64> {
    let l = l_operator(u, rep, params)?;
    let lm = l_operator(-u.conj(), rep, params)?;
    let mut worst: f64 = 0.0;
    for e in 0..2 {
        for f in 0..2 {
            let sign = if e == f { -1.0 } else { 1.0 };
            let adj = frame.adjoint(l.block(e, f));
            let target = lm.block(1 - e, 1 - f) * C64::new(sign, 0.0);
            let scale = frobenius(&adj)
                .max(frobenius(&target))
                .max(f64::MIN_POSITIVE);
            worst = worst.max(frobenius(&(adj - target)) / scale);
        }
    }
    Ok(worst)
}

/// Baxter's R-matrix `Σ_a W^R_a(u) σ^a ⊗ σ^a`.
pub fn r_matrix(u: C64, params: &ModelParams) -> Result<DenseMatrix> {
    let w = w_weights(u, params, WeightShift::R)?;
    let sig = pauli_matrices();
    let mut r = DenseMatrix::zeros(4, 4);
    for a in 0..4 {
        r += kron(&sig[a], &sig[a]) * w[a];
    }
    Ok(r)
}

/// `‖L_12(v) L_13(u) R_23(u−v) − R_23(u−v) L_13(u) L_12(v)‖ / ‖L_12 L_13 R_23‖`
/// on `V ⊗ C² ⊗ C²`.
pub fn rll_residual(u: C64, v: C64, rep: &RepMatrices, params: &ModelParams) -> Result<f64> {
    let d = rep.dim();
    let sig = pauli_matrices();
    let id_d = DenseMatrix::identity(d, d);
    let id2 = DenseMatrix::identity(2, 2);
    let wu = w_weights(u, params, WeightShift::L)?;
    let wv = w_weights(v, params, WeightShift::L)?;
    let mut l12 = DenseMatrix::zeros(4 * d, 4 * d);
    let mut l13 = DenseMatrix::zeros(4 * d, 4 * d);
    for a in 0..4 {
        l12 += kron(&kron(&rep.s[a], &sig[a]), &id2) * wv[a];
        l13 += kron(&kron(&rep.s[a], &id2), &sig[a]) * wu[a];
    }
    let r23 = kron(&id_d, &r_matrix(u - v, params)?);
    let lhs = &l12 * &l13 * &r23;
    let rhs = &r23 * &l13 * &l12;
    Ok(frobenius(&(&lhs - &rhs)) / frobenius(&lhs).max(frobenius(&rhs)))
}

fn check_chain_dim(d: usize, n: usize) -> Result<usize> {
    let dim = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    if dim > DIMENSION_GUARD {
        return Err(QopError::DimensionGuard {
            dim,
            limit: DIMENSION_GUARD,
        });
    }
    Ok(dim)
}

/// `1 ⊗ ⋯ ⊗ A ⊗ ⋯ ⊗ 1` with `A` on site `j` (1-based) of an `n`-site chain.
pub fn embed_site(a: &DenseMatrix, j: usize, n: usize) -> DenseMatrix {
    assert!(j >= 1 && j <= n, "site {j} out of range 1..={n}");
    let d = a.nrows();
    let left = DenseMatrix::identity(d.pow((n - j) as u32), d.pow((n - j) as u32));
    let right = DenseMatrix::identity(d.pow((j - 1) as u32), d.pow((j - 1) as u32));
    kron(&kron(&left, a), &right)
}

/// `A ⊗ ⋯ ⊗ A` (`n` factors).
pub fn tensor_power(a: &DenseMatrix, n: usize) -> DenseMatrix {
    (0..n).fold(DenseMatrix::identity(1, 1), |acc, _| kron(&acc, a))
}

/// `g_N ⊗ ⋯ ⊗ g_1` from the site vectors listed as `[g_1, …, g_N]`.
pub fn chain_vector(sites: &[DVector<C64>]) -> DVector<C64> {
    let mut out = DVector::from_element(1, C64::new(1.0, 0.0));
    for g in sites.iter().rev() {
        out = out.kronecker(g);
    }
    out
}

/// Trace over the auxiliary space of an ordered product of 2×2 site-block
/// arrays, `factors = [F_1, …, F_N]` with `F_j` acting on site `j`; the
/// product is `F_N ⋯ F_1`.
fn traced_monodromy(factors: &[[[DenseMatrix; 2]; 2]]) -> Result<DenseMatrix> {
    let n = factors.len();
    let d = factors[0][0][0].nrows();
    let dim = check_chain_dim(d, n)?;
    let embedded = |j: usize, e: usize, f: usize| embed_site(&factors[j - 1][e][f], j, n);
    let mut p: [[DenseMatrix; 2]; 2] = [
        [embedded(1, 0, 0), embedded(1, 0, 1)],
        [embedded(1, 1, 0), embedded(1, 1, 1)],
    ];
    for j in 2..=n {
        let e = [
            [embedded(j, 0, 0), embedded(j, 0, 1)],
            [embedded(j, 1, 0), embedded(j, 1, 1)],
        ];
        let mut next: [[DenseMatrix; 2]; 2] = Default::default();
        for a in 0..2 {
            for b in 0..2 {
                next[a][b] = &e[a][0] * &p[0][b] + &e[a][1] * &p[1][b];
            }
        }
        p = next;
    }
    debug_assert_eq!(p[0][0].nrows(), dim);
    Ok(&p[0][0] + &p[1][1])
}

/// `T(u) = tr_0 L_N(u) ⋯ L_1(u)`.
pub fn transfer_matrix(u: C64, rep: &RepMatrices, params: &ModelParams) -> Result<DenseMatrix> {
    check_chain_dim(rep.dim(), params.n_sites)?;
    let l = l_operator(u, rep, params)?;
    let factors = vec![l.blocks.clone(); params.n_sites];
    traced_monodromy(&factors)
}

/// Gauge matrix
///
/// ```text
/// M_λ(v) = [ −θ_00((λ−v)/2, τ/2)   −θ_00((λ+v)/2, τ/2) ]
///          [  θ_01((λ−v)/2, τ/2)    θ_01((λ+v)/2, τ/2) ]
/// ```
#[derive(Clone, Debug)]
pub struct GaugeMatrix {
    pub m: DenseMatrix,
    pub lambda: C64,
    pub v: C64,
}

pub fn gauge_matrix_unchecked(lambda: C64, v: C64, params: &ModelParams) -> GaugeMatrix {
    let a = (lambda - v) / 2.0;
    let b = (lambda + v) / 2.0;
    let m = DenseMatrix::from_row_slice(
        2,
        2,
        &[
            -params.theta_half(ThetaChar::T00, a),
            -params.theta_half(ThetaChar::T00, b),
            params.theta_half(ThetaChar::T01, a),
            params.theta_half(ThetaChar::T01, b),
        ],
    );
    GaugeMatrix { m, lambda, v }
}

/// As [`gauge_matrix_unchecked`], rejecting (near-)singular matrices.
pub fn gauge_matrix(lambda: C64, v: C64, params: &ModelParams) -> Result<GaugeMatrix> {
    let g = gauge_matrix_unchecked(lambda, v, params);
    let det = g.determinant();
    if det.norm() <= GAUGE_DET_GUARD {
        return Err(QopError::Degenerate(format!(
            "gauge matrix at λ = {lambda}, v = {v} is singular (|det| = {:.3e})",
            det.norm()
        )));
    }
    Ok(g)
}

impl GaugeMatrix {
    pub fn determinant(&self) -> C64 {
        self.m[(0, 0)] * self.m[(1, 1)] - self.m[(0, 1)] * self.m[(1, 0)]
    }

    pub fn inverse(&self) -> DenseMatrix {
        let det = self.determinant();
        DenseMatrix::from_row_slice(
            2,
            2,
            &[
                self.m[(1, 1)],
                -self.m[(0, 1)],
                -self.m[(1, 0)],
                self.m[(0, 0)],
            ],
        ) / det
    }
}

/// Components of `M_λ(v)⁻¹ L(u) M_{λ'}(v)`.
#[derive(Clone, Debug)]
pub struct TwistedL {
    pub alpha: DenseMatrix,
    pub beta: DenseMatrix,
    pub gamma: DenseMatrix,
    pub delta: DenseMatrix,
}

impl TwistedL {
    fn blocks(&self) -> [[DenseMatrix; 2]; 2] {
        [
            [self.alpha.clone(), self.beta.clone()],
            [self.gamma.clone(), self.delta.clone()],
        ]
    }
}

/// 2×2 conjugation of a block array: `A · B · C` with scalar `A`, `C`.
fn sandwich(
    left: &DenseMatrix,
    blocks: &[[DenseMatrix; 2]; 2],
    right: &DenseMatrix,
) -> [[DenseMatrix; 2]; 2] {
    let d = blocks[0][0].nrows();
    let mut out: [[DenseMatrix; 2]; 2] = Default::default();
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = DenseMatrix::zeros(d, d);
            for a in 0..2 {
                for b in 0..2 {
                    acc += &blocks[a][b] * (left[(i, a)] * right[(b, j)]);
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn twisted_l(
    lambda: C64,
    lambda2: C64,
    u: C64,
    v: C64,
    rep: &RepMatrices,
    params: &ModelParams,
) -> Result<TwistedL> {
    let left = gauge_matrix(lambda, v, params)?.inverse();
    let right = gauge_matrix(lambda2, v, params)?.m;
    let l = l_operator(u, rep, params)?;
    let [[alpha, beta], [gamma, delta]] = sandwich(&left, &l.blocks, &right);
    Ok(TwistedL {
        alpha,
        beta,
        gamma,
        delta,
    })
}

/// `ω_λ(u;v)(z) = [z + c]_{2l} [−z + c]_{2l}`, `c = (λ+u−v)/2 + (1−l)η`.
pub fn omega_value(z: C64, lambda: C64, u: C64, v: C64, params: &ModelParams) -> C64 {
    intertwiner_value(z, lambda, params.two_l as i32, u, v, params)
}

/// Intertwining vector `φ_{λ,λ+4mη}(u;v)` at `z`, with `two_m = 2m`.
pub fn intertwiner_value(
    z: C64,
    lambda: C64,
    two_m: i32,
    u: C64,
    v: C64,
    params: &ModelParams,
) -> C64 {
    let two_l = params.two_l as i32;
    assert!(
        two_m.abs() <= two_l && (two_l - two_m) % 2 == 0,
        "m must be one of −l, −l+1, …, l"
    );
    let l = params.spin();
    let m = f64::from(two_m) / 2.0;
    let lambda2 = lambda + 4.0 * m * params.eta;
    let shift = (1.0 - l) * params.eta;
    let c1 = (lambda + u - v) / 2.0 + shift;
    let c2 = (lambda2 + u - v) / 2.0 + shift;
    let k1 = ((two_l + two_m) / 2) as usize;
    let k2 = ((two_l - two_m) / 2) as usize;
    bracket_k(z + c1, k1, params)
        * bracket_k(-z + c1, k1, params)
        * bracket_k(z + c2, k2, params)
        * bracket_k(-z + c2, k2, params)
}

pub fn omega_vector(lambda: C64, u: C64, v: C64, basis: &ThetaBasis) -> Result<DVector<C64>> {
    let p = *basis.params();
    basis.expand(|z| omega_value(z, lambda, u, v, &p))
}

pub fn intertwiner_vector(
    lambda: C64,
    two_m: i32,
    u: C64,
    v: C64,
    basis: &ThetaBasis,
) -> Result<DVector<C64>> {
    let p = *basis.params();
    basis.expand(|z| intertwiner_value(z, lambda, two_m, u, v, &p))
}

/// Residuals of the three pseudo-vacuum relations for the branch `sign`:
///
/// ```text
/// α ω = 2[u+2lη] ω(λ−2η),   γ ω = 0,   δ ω = 2[u−2lη][λ]/[λ±4lη] ω(λ+2η)
/// ```
///
/// with the twisted operator `L_{λ±4lη, λ}(u;v)` and `ω = ω_{±λ}(u; ±v)`.
/// The γ residual is relative to `‖γ‖·‖ω‖`.
#[derive(Clone, Copy, Debug)]
pub struct VacuumResiduals {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl VacuumResiduals {
    pub fn max(&self) -> f64 {
        self.alpha.max(self.gamma).max(self.delta)
    }
}

pub fn vacuum_action_residual(
    lambda: C64,
    u: C64,
    v: C64,
    sign: i32,
    rep: &RepMatrices,
    basis: &ThetaBasis,
    params: &ModelParams,
) -> Result<VacuumResiduals> {
    let s = f64::from(sign.signum());
    let four_l_eta = 2.0 * f64::from(params.two_l) * params.eta;
    let two_l_eta = f64::from(params.two_l) * params.eta;
    let e2 = 2.0 * params.eta;
    let tw = twisted_l(lambda + s * four_l_eta, lambda, u, v, rep, params)?;
    let w = omega_vector(s * lambda, u, s * v, basis)?;
    let w_minus = omega_vector(s * lambda - e2, u, s * v, basis)?;
    let w_plus = omega_vector(s * lambda + e2, u, s * v, basis)?;

    let a_lhs = &tw.alpha * &w;
    let a_rhs = &w_minus * (2.0 * params.bracket(u + two_l_eta));
    let d_lhs = &tw.delta * &w;
    let coeff = 2.0 * params.bracket(u - two_l_eta) * params.bracket(lambda)
        / params.bracket(lambda + s * four_l_eta);
    let d_rhs = &w_plus * coeff;
    let g = &tw.gamma * &w;
    Ok(VacuumResiduals {
        alpha: vector_relative_difference(&a_lhs, &a_rhs),
        gamma: g.norm() / (frobenius(&tw.gamma) * w.norm()).max(f64::MIN_POSITIVE),
        delta: vector_relative_difference(&d_lhs, &d_rhs),
    })
}

/// `λ_1 = λ`, `λ_{j+1} = λ_j + 4σ_j lη`; returns `[λ_1, …, λ_{N+1}]`.
pub fn lambda_sequence(lambda: C64, sigma: &[i32], params: &ModelParams) -> Vec<C64> {
    let step = 2.0 * f64::from(params.two_l) * params.eta;
    let mut out = Vec::with_capacity(sigma.len() + 1);
    out.push(lambda);
    for (j, s) in sigma.iter().enumerate() {
        out.push(out[j] + step * f64::from(*s));
    }
    out
}

/// `tr_0 ∏_{j=N..1} L_{λ_{j+1},λ_j}(u;v)` for the λ-sequence generated by
/// `sigma` (listed as `[σ_1, …, σ_N]`), compared to `T(u)`.
pub fn twisted_trace_residual(
    u: C64,
    v: C64,
    lambda: C64,
    sigma: &[i32],
    rep: &RepMatrices,
    params: &ModelParams,
) -> Result<f64> {
    let lams = lambda_sequence(lambda, sigma, params);
    let factors = (0..params.n_sites)
        .map(|j| Ok(twisted_l(lams[j + 1], lams[j], u, v, rep, params)?.blocks()))
        .collect::<Result<Vec<_>>>()?;
    let twisted = traced_monodromy(&factors)?;
    let t = transfer_matrix(u, rep, params)?;
    Ok(frobenius(&(&twisted - &t)) / frobenius(&t))
}

/// Residuals of `U_1 ω_λ(u;v) = e^{−lπi} ω_λ(u+1;v)` and
/// `U_3 ω_λ(u;v) = e^{lπi(τ−1) + 2lπi(λ+u−v+2lη)} ω_λ(u+τ;v)`.
pub fn u_on_omega_residual(
    lambda: C64,
    u: C64,
    v: C64,
    umats: &UMatrices,
    basis: &ThetaBasis,
) -> Result<(f64, f64)> {
    let p = basis.params();
    let l = p.spin();
    let w = omega_vector(lambda, u, v, basis)?;
    let r1 = omega_vector(lambda, u + 1.0, v, basis)? * (-PI * I * l).exp();
    let f3 =
        (PI * I * l * (p.tau - 1.0) + 2.0 * PI * I * l * (lambda + u - v + 2.0 * l * p.eta)).exp();
    let r3 = omega_vector(lambda, u + p.tau, v, basis)? * f3;
    Ok((
        vector_relative_difference(&(&umats.u1 * &w), &r1),
        vector_relative_difference(&(&umats.u3 * &w), &r3),
    ))
}

/// `T(u)* = T(−ū)` in Gram form, `‖T(u)^H G − G T(−ū)‖ / ‖G T(−ū)‖` with
/// `G` the chain Gram matrix. Forming `G⁻¹ T^H G` through the Cholesky
/// factor loses about `cond(G)` digits, which at higher spin swamps the
/// identity; the Gram form needs no inverse.
pub fn transfer_adjoint_residual(
    u: C64,
    rep: &RepMatrices,
    chain_frame: &OrthonormalFrame,
    params: &ModelParams,
) -> Result<f64> {
    let t = transfer_matrix(u, rep, params)?;
    let tm = transfer_matrix(-u.conj(), rep, params)?;
    let g = chain_frame.gram();
    let rhs = &g * &tm;
    Ok(frobenius(&(t.adjoint() * &g - &rhs)) / frobenius(&rhs).max(f64::MIN_POSITIVE))
}

/// `‖[A, B]‖ / ‖A B‖`.
pub fn commutator_residual(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let ab = a * b;
    frobenius(&(&ab - b * a)) / frobenius(&ab).max(f64::MIN_POSITIVE)
}
