//! The Sklyanin form
//!
//! ```text
//! ⟨f, g⟩ = ∫_0^1 dx ∫_0^{Im τ} dy  conj(f(z)) g(z) μ(z, z̄),   z = x + iy,
//! ```
//!
//! its Gram matrices and orthonormal frames, and the closed forms for
//! elliptic binomial coefficients, the extremal 6j-symbol and the
//! biorthogonality of the natural bases.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{QopError, Result};
use crate::numerics::{frobenius, kron, trapezoid_2d_vector, DenseMatrix};
use crate::representation::{natural_basis_value, ThetaBasis};
use crate::theta::{bracket_k, za_bracket_k, ModelParams, ThetaChar, C64, I};

/// Each θ_00 factor in the kernel denominator must exceed this.
pub const MU_GUARD: f64 = 1e-8;

/// Grid-doubling policy for the Sklyanin form.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    pub start: usize,
    pub max: usize,
    /// Relative change between successive grids accepted as converged.
    pub tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            start: 64,
            max: 512,
            tol: 1e-8,
        }
    }
}

/// `μ(z,w) = θ_11(2z)θ_11(2w) / ∏_{j=0}^{2l+1} θ_00(z+w+(2j−2l−1)η) θ_00(z−w+(2j−2l−1)η)`.
pub fn mu_kernel(z: C64, w: C64, params: &ModelParams) -> Result<C64> {
    let two_l = params.two_l as i64;
    let mut den = C64::new(1.0, 0.0);
    for j in 0..=(two_l + 1) {
        let shift = (2 * j - two_l - 1) as f64 * params.eta;
        let p = params.theta(ThetaChar::T00, z + w + shift);
        let m = params.theta(ThetaChar::T00, z - w + shift);
        if p.norm() < MU_GUARD || m.norm() < MU_GUARD {
            return Err(QopError::SingularKernel {
                z,
                w,
                j: j as usize,
            });
        }
        den *= p * m;
    }
    Ok(params.theta(ThetaChar::T11, 2.0 * z) * params.theta(ThetaChar::T11, 2.0 * w) / den)
}

/// Matrix of Sklyanin forms `⟨f_i, g_j⟩` on an `n × n` grid. A pole on the
/// grid triggers one retry with the grid shifted by half a step.
pub fn pairing_matrix(
    fs: &[&(dyn Fn(C64) -> C64 + Sync)],
    gs: &[&(dyn Fn(C64) -> C64 + Sync)],
    params: &ModelParams,
    n: usize,
) -> Result<DenseMatrix> {
    let t = params.tau.im;
    let (rows, cols) = (fs.len(), gs.len());
    let integrand = |x: f64, y: f64| -> Result<Vec<C64>> {
        let z = C64::new(x, y);
        let mu = mu_kernel(z, z.conj(), params)?;
        let fv: Vec<C64> = fs.iter().map(|f| f(z).conj() * mu).collect();
        let gv: Vec<C64> = gs.iter().map(|g| g(z)).collect();
        let mut out = Vec::with_capacity(rows * cols);
        // column-major, matching nalgebra storage
        for g in &gv {
            for f in &fv {
                out.push(f * g);
            }
        }
        Ok(out)
    };
    let values = match trapezoid_2d_vector(integrand, rows * cols, n, n, (1.0, t), (0.0, 0.0)) {
        Ok(v) => v,
        Err(QopError::SingularIntegrand { .. }) | Err(QopError::SingularKernel { .. }) => {
            trapezoid_2d_vector(integrand, rows * cols, n, n, (1.0, t), (0.5, 0.5))?
        }
        Err(e) => return Err(e),
    };
    Ok(DenseMatrix::from_vec(rows, cols, values))
}

/// `⟨f, g⟩` for two functions on an `n × n` grid.
pub fn sklyanin_inner_fn<F, G>(f: F, g: G, params: &ModelParams, n: usize) -> Result<C64>
where
    F: Fn(C64) -> C64 + Sync,
    G: Fn(C64) -> C64 + Sync,
{
    Ok(pairing_matrix(&[&f], &[&g], params, n)?[(0, 0)])
}

/// `⟨f, g⟩` for coefficient vectors in `basis`.
pub fn sklyanin_inner(
    f: &DVector<C64>,
    g: &DVector<C64>,
    basis: &ThetaBasis,
    n: usize,
) -> Result<C64> {
    sklyanin_inner_fn(
        |z| basis.evaluate(f, z),
        |z| basis.evaluate(g, z),
        basis.params(),
        n,
    )
}

/// Gram matrix `G_jk = ⟨e_j, e_k⟩` of a basis.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub g: DenseMatrix,
    pub grid: (usize, usize),
    /// Relative change against the previous (half-size) grid.
    pub convergence_estimate: f64,
}

pub fn gram_matrix_on_grid(basis: &ThetaBasis, n: usize) -> Result<DenseMatrix> {
    let d = basis.dim();
    let funcs: Vec<Box<dyn Fn(C64) -> C64 + Sync + '_>> = (0..d)
        .map(|k| Box::new(move |z| basis.eval(k, z)) as Box<dyn Fn(C64) -> C64 + Sync>)
        .collect();
    let refs: Vec<&(dyn Fn(C64) -> C64 + Sync)> = funcs.iter().map(|b| b.as_ref()).collect();
    pairing_matrix(&refs, &refs, basis.params(), n)
}

/// Gram matrix with grid doubling until successive grids agree.
pub fn gram_matrix(basis: &ThetaBasis, opts: &QuadratureOptions) -> Result<GramMatrix> {
    let mut n = opts.start;
    let mut prev = gram_matrix_on_grid(basis, n)?;
    let mut change = f64::INFINITY;
    while n < opts.max {
        n *= 2;
        let next = gram_matrix_on_grid(basis, n)?;
        change = frobenius(&(&next - &prev)) / frobenius(&next);
        prev = next;
        if change < opts.tol {
            break;
        }
    }
    if !(change < opts.tol) {
        return Err(QopError::QuadratureNotConverged { grid: n, change });
    }
    let gram = GramMatrix {
        g: prev,
        grid: (n, n),
        convergence_estimate: change,
    };
    if gram.min_eigenvalue() <= 0.0 {
        return Err(QopError::Degenerate(format!(
            "Gram matrix is not positive definite (min eigenvalue {:.3e})",
            gram.min_eigenvalue()
        )));
    }
    Ok(gram)
}

impl GramMatrix {
    pub fn hermiticity_residual(&self) -> f64 {
        frobenius(&(&self.g - self.g.adjoint())) / frobenius(&self.g)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.g + self.g.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// `‖G A − A^H G‖ / ‖G A‖`: zero iff `A` is self-adjoint for the form.
    pub fn self_adjointness_residual(&self, a: &DenseMatrix) -> f64 {
        let ga = &self.g * a;
        frobenius(&(&ga - a.adjoint() * &self.g)) / frobenius(&ga)
    }
}

/// Cholesky frame `G = R^H R`: coordinates `c' = R c` make the Sklyanin
/// form the standard dot product.
#[derive(Clone, Debug)]
pub struct OrthonormalFrame {
    pub r: DenseMatrix,
    pub r_inverse: DenseMatrix,
}

pub fn orthonormal_frame(g: &DenseMatrix) -> Result<OrthonormalFrame> {
    let h = (g + g.adjoint()) * C64::new(0.5, 0.0);
    let min_eig = h
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) {
        return Err(QopError::Degenerate(format!(
            "Gram matrix is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    let chol = h.cholesky().ok_or_else(|| {
        QopError::Degenerate("Gram matrix is not positive definite; Cholesky failed".into())
    })?;
    let r = chol.l().adjoint();
    let r_inverse = r
        .clone()
        .try_inverse()
        .ok_or_else(|| QopError::Degenerate("Cholesky factor is singular".into()))?;
    Ok(OrthonormalFrame { r, r_inverse })
}

impl OrthonormalFrame {
    /// `R A R⁻¹`.
    pub fn to_frame(&self, a: &DenseMatrix) -> DenseMatrix {
        &self.r * a * &self.r_inverse
    }

    /// Adjoint with respect to the form, in the original coordinates:
    /// `G⁻¹ A^H G = R⁻¹ (R A R⁻¹)^H R`.
    pub fn adjoint(&self, a: &DenseMatrix) -> DenseMatrix {
        &self.r_inverse * self.to_frame(a).adjoint() * &self.r
    }

    /// `R^H R`.
    pub fn gram(&self) -> DenseMatrix {
        self.r.adjoint() * &self.r
    }

    /// Frame of the `n`-fold tensor power of the space.
    pub fn tensor_power(&self, n: usize) -> OrthonormalFrame {
        let mut r = DenseMatrix::identity(1, 1);
        let mut ri = DenseMatrix::identity(1, 1);
        for _ in 0..n {
            r = kron(&r, &self.r);
            ri = kron(&ri, &self.r_inverse);
        }
        OrthonormalFrame { r, r_inverse: ri }
    }
}

fn nonzero(x: C64, what: &str) -> Result<C64> {
    if x.norm() < 1e-14 {
        return Err(QopError::Degenerate(format!(
            "{what} vanishes (non-generic parameters)"
        )));
    }
    Ok(x)
}

/// Elliptic binomial coefficient `C_n^k(a, b, c)`, defined by
/// `[z;a]_k = Σ_n C_n^k(a,b,c) [z;b]_n [z;c]_{k−n}`:
///
/// ```text
/// [2η]_k / ([2η]_n [2η]_{k−n}) ·
///   [a−c]_n [a+c+2(k−n)η]_n [a−b]_{k−n} [a+b+2nη]_{k−n}
///   / ([b−c+2(n−k)η]_n [c−b−2nη]_{k−n} [b+c]_k)
/// ```
pub fn elliptic_binomial(
    n: usize,
    k: usize,
    a: C64,
    b: C64,
    c: C64,
    params: &ModelParams,
) -> Result<C64> {
    if n > k {
        return Err(QopError::InvalidParameter {
            field: "n",
            reason: format!("need n ≤ k, got n={n}, k={k}"),
        });
    }
    let e2 = C64::new(2.0 * params.eta, 0.0);
    let eta = params.eta;
    let (nf, kf) = (n as f64, k as f64);
    let br = |x: C64, m: usize| bracket_k(x, m, params);
    let num = br(e2, k)
        * br(a - c, n)
        * br(a + c + 2.0 * (kf - nf) * eta, n)
        * br(a - b, k - n)
        * br(a + b + 2.0 * nf * eta, k - n);
    let den = br(e2, n)
        * br(e2, k - n)
        * br(b - c + 2.0 * (nf - kf) * eta, n)
        * br(c - b - 2.0 * nf * eta, k - n)
        * br(b + c, k);
    Ok(num / nonzero(den, "elliptic binomial denominator")?)
}

/// Largest relative residual of the defining expansion of `C_n^k` at `zs`.
pub fn elliptic_binomial_residual(
    k: usize,
    a: C64,
    b: C64,
    c: C64,
    zs: &[C64],
    params: &ModelParams,
) -> Result<f64> {
    let coeffs = (0..=k)
        .map(|n| elliptic_binomial(n, k, a, b, c, params))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for &z in zs {
        let lhs = za_bracket_k(z, a, k, params);
        let terms: Vec<C64> = (0..=k)
            .map(|n| coeffs[n] * za_bracket_k(z, b, n, params) * za_bracket_k(z, c, k - n, params))
            .collect();
        let rhs: C64 = terms.iter().sum();
        let scale = terms
            .iter()
            .map(|t| t.norm())
            .sum::<f64>()
            .max(lhs.norm())
            .max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    Ok(worst)
}

/// Extremal 6j-symbol `R_N^N(a,b,c,d;N) = [d;a]_N / [d;c]_N` (independent of `b`).
pub fn extremal_6j(
    a: C64,
    _b: C64,
    c: C64,
    d: C64,
    nn: usize,
    params: &ModelParams,
) -> Result<C64> {
    let den = nonzero(za_bracket_k(d, c, nn, params), "[d;c]_N")?;
    Ok(za_bracket_k(d, a, nn, params) / den)
}

/// The same coefficient obtained numerically: expand `e^N_N(z; a, b)` in the
/// basis `e^N_k(z; c, d)` (with `N = 2l`) by collocation and read off the
/// last coordinate.
pub fn extremal_6j_by_collocation(
    a: C64,
    b: C64,
    c: C64,
    d: C64,
    params: &ModelParams,
    seed: u64,
) -> Result<C64> {
    let basis = ThetaBasis::with_parameters(params, c, d, seed)?;
    let n = params.two_l as usize;
    let coeffs = basis.expand(|z| natural_basis_value(z, n, n, a, b, params))?;
    Ok(coeffs[n])
}

/// `∏_{j≥1} (1 − e^{2jπiτ})³`, truncated once `|e^{2jπiτ}| < 1e−16`.
fn q_product(params: &ModelParams) -> C64 {
    let q = (2.0 * PI * I * params.tau).exp();
    let mut p = C64::new(1.0, 0.0);
    let mut qj = q;
    while qj.norm() >= 1e-16 {
        p *= (C64::new(1.0, 0.0) - qj).powu(3);
        qj *= q;
    }
    p
}

/// Normalisation constant of the biorthogonality relation as it appears in
/// the literature, `−2η e^{3πiτ/4} / ([2(N+1)η] ∏(1 − e^{2jπiτ})³)`.
pub fn printed_pairing_constant(nn: usize, params: &ModelParams) -> C64 {
    let eta = params.eta;
    -2.0 * eta * (0.75 * PI * I * params.tau).exp()
        / (params.bracket(C64::new(2.0 * (nn as f64 + 1.0) * eta, 0.0)) * q_product(params))
}

/// Normalisation constant `C_N` matching the form as defined here (measure
/// `dx dy` on `[0,1] × [0, Im τ]`): the literature value times
/// `e^{−πiτ(1+N/2)}`.
pub fn pairing_constant(nn: usize, params: &ModelParams) -> C64 {
    printed_pairing_constant(nn, params) * (-PI * I * params.tau * (1.0 + 0.5 * nn as f64)).exp()
}

/// `Γ^N_k(c, d)`.
pub fn gamma_coefficient(k: usize, c: C64, d: C64, nn: usize, params: &ModelParams) -> Result<C64> {
    let eta = params.eta;
    let (kf, nf) = (k as f64, nn as f64);
    let br = |x: C64| params.bracket(x);
    let brk = |x: C64, m: usize| bracket_k(x, m, params);
    let cd = c - d;
    let pref = (PI * I * nf * (params.tau - 1.0) / 2.0).exp();
    let num = br(cd - 2.0 * nf * eta)
        * brk(C64::new(2.0 * eta, 0.0), k)
        * brk(cd + 2.0 * eta, k)
        * brk(cd + 2.0 * (1.0 - nf) * eta, nn)
        * brk(c + d, nn);
    let den = br(cd + 2.0 * (2.0 * kf - nf) * eta)
        * brk(C64::new(-2.0 * nf * eta, 0.0), k)
        * brk(cd - 2.0 * nf * eta, k);
    Ok(pref * num / nonzero(den, "Γ denominator")?)
}

/// `Γ^N_N(c, d) = e^{πiN(τ+1)/2} [c−d]_N [c+d]_N`.
pub fn gamma_extremal(c: C64, d: C64, nn: usize, params: &ModelParams) -> C64 {
    (PI * I * nn as f64 * (params.tau + 1.0) / 2.0).exp()
        * bracket_k(c - d, nn, params)
        * bracket_k(c + d, nn, params)
}

/// Parameters of the basis dual to `e^N_k(z; c, d)`:
/// `(−d̄ + (1−N)η + (τ+1)/2,  −c̄ + (1−N)η − (τ+1)/2)`.
pub fn dual_parameters(c: C64, d: C64, nn: usize, params: &ModelParams) -> (C64, C64) {
    let shift = (1.0 - nn as f64) * params.eta;
    let half = (params.tau + 1.0) * 0.5;
    (-d.conj() + shift + half, -c.conj() + shift - half)
}

/// `⟨e^N_m(z; dual(c,d)), e^N_k(z; c, d)⟩ = C_N e^{2πi(−dm + c(N−m) − N(1+τ)/4)} Γ^N_k(c,d) δ_{km}`.
pub fn dual_pairing_closed_form(
    m: usize,
    k: usize,
    c: C64,
    d: C64,
    nn: usize,
    params: &ModelParams,
) -> Result<C64> {
    if m != k {
        return Ok(C64::new(0.0, 0.0));
    }
    let (mf, nf) = (m as f64, nn as f64);
    let phase = (2.0 * PI * I * (-d * mf + c * (nf - mf) - nf * (params.tau + 1.0) / 4.0)).exp();
    Ok(pairing_constant(nn, params) * phase * gamma_coefficient(k, c, d, nn, params)?)
}

/// Largest entry of `|quadrature − closed form|` for the pairing of the dual
/// basis with `e^N_k(z; c, d)`, relative to the largest diagonal entry.
pub fn biorthogonality_residual(
    c: C64,
    d: C64,
    nn: usize,
    params: &ModelParams,
    grid: usize,
) -> Result<f64> {
    let (a2, b2) = dual_parameters(c, d, nn, params);
    let p = *params;
    let left: Vec<Box<dyn Fn(C64) -> C64 + Sync>> = (0..=nn)
        .map(|m| Box::new(move |z| natural_basis_value(z, m, nn, a2, b2, &p)) as Box<_>)
        .collect();
    let right: Vec<Box<dyn Fn(C64) -> C64 + Sync>> = (0..=nn)
        .map(|k| Box::new(move |z| natural_basis_value(z, k, nn, c, d, &p)) as Box<_>)
        .collect();
    let lr: Vec<&(dyn Fn(C64) -> C64 + Sync)> = left.iter().map(|b| b.as_ref()).collect();
    let rr: Vec<&(dyn Fn(C64) -> C64 + Sync)> = right.iter().map(|b| b.as_ref()).collect();
    let num = pairing_matrix(&lr, &rr, params, grid)?;
    let mut cf = DenseMatrix::zeros(nn + 1, nn + 1);
    for k in 0..=nn {
        cf[(k, k)] = dual_pairing_closed_form(k, k, c, d, nn, params)?;
    }
    let scale = (0..=nn)
        .map(|k| cf[(k, k)].norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    Ok((&num - &cf).iter().map(|x| x.norm()).fold(0.0, f64::max) / scale)
}

/// `⟨e^N_N(z; α, ·), e^N_N(z; γ, ·)⟩ =
///  C_N e^{πiNτ/2} ∏_{j<N} θ_00(γ−ᾱ+(2j−N+1)η) θ_00(γ+ᾱ+(2j+N−1)η)`.
pub fn natural_pairing_closed_form(alpha: C64, gamma: C64, nn: usize, params: &ModelParams) -> C64 {
    let eta = params.eta;
    let nf = nn as f64;
    let ab = alpha.conj();
    let mut p = pairing_constant(nn, params) * (PI * I * nf * params.tau / 2.0).exp();
    for j in 0..nn {
        let jf = j as f64;
        p *= params.theta(ThetaChar::T00, gamma - ab + (2.0 * jf - nf + 1.0) * eta)
            * params.theta(ThetaChar::T00, gamma + ab + (2.0 * jf + nf - 1.0) * eta);
    }
    p
}

/// First parameter of the natural-basis vector `e^{2l}_{2l}(z; ·, ·)` equal
/// to the pseudo-vacuum `ω_{σλ}(u; σv)`.
pub fn omega_basis_parameter(lambda: C64, u: C64, v: C64, sigma: i32, params: &ModelParams) -> C64 {
    let s = f64::from(sigma);
    let l = params.spin();
    (lambda + u * s - v) / 2.0 + (s * l - (2.0 * l - 1.0)) * params.eta
}

/// `⟨ω_{σλ}(−ū; σv), ω_{σ'λ'}(u'; σ'v')⟩` in closed form.
#[allow(clippy::too_many_arguments)]
pub fn omega_pair_closed_form(
    u: C64,
    u2: C64,
    v: C64,
    v2: C64,
    lambda: C64,
    lambda2: C64,
    sigma: i32,
    sigma2: i32,
    params: &ModelParams,
) -> C64 {
    let alpha = omega_basis_parameter(lambda, -u.conj(), v, sigma, params);
    let gamma = omega_basis_parameter(lambda2, u2, v2, sigma2, params);
    natural_pairing_closed_form(alpha, gamma, params.two_l as usize, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::rep_matrices;
    use crate::theta::ThetaChar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(two_l: u32, eta: f64) -> ModelParams {
        ModelParams::new(1.0, eta, two_l, 2).unwrap()
    }

    fn omega(z: C64, lambda: C64, u: C64, v: C64, params: &ModelParams) -> C64 {
        let l = params.spin();
        let c = (lambda + u - v) / 2.0 + (1.0 - l) * params.eta;
        za_bracket_k(z, c, params.two_l as usize, params)
    }

    #[test]
    fn kernel_is_symmetric_and_vanishes_at_origin() {
        let params = p(1, 0.15);
        let z = C64::new(0.21, 0.33);
        let w = C64::new(0.47, 0.12);
        let a = mu_kernel(z, w, &params).unwrap();
        let b = mu_kernel(w, z, &params).unwrap();
        assert!((a - b).norm() < 1e-13 * a.norm());
        assert!(mu_kernel(C64::new(0.0, 0.0), w, &params).unwrap().norm() < 1e-14);
    }

    #[test]
    fn kernel_matches_direct_product() {
        let params = p(1, 0.15);
        let z = C64::new(0.3, 0.2);
        let w = z.conj();
        let th = |ch, x| params.theta(ch, x);
        let e = params.eta;
        let mut den = C64::new(1.0, 0.0);
        for s in [-2.0, 0.0, 2.0] {
            den *= th(ThetaChar::T00, z + w + s * e) * th(ThetaChar::T00, z - w + s * e);
        }
        let direct = th(ThetaChar::T11, 2.0 * z) * th(ThetaChar::T11, 2.0 * w) / den;
        assert!((mu_kernel(z, w, &params).unwrap() - direct).norm() < 1e-14 * direct.norm());
    }

    #[test]
    fn form_is_hermitian_and_positive() {
        let params = p(2, 0.11);
        let basis = ThetaBasis::new(&params, 1).unwrap();
        let f = DVector::from_vec(vec![
            C64::new(1.0, 0.2),
            C64::new(-0.3, 0.5),
            C64::new(0.1, 0.0),
        ]);
        let g = DVector::from_vec(vec![
            C64::new(0.2, -0.1),
            C64::new(0.7, 0.0),
            C64::new(-0.4, 0.3),
        ]);
        let fg = sklyanin_inner(&f, &g, &basis, 64).unwrap();
        let gf = sklyanin_inner(&g, &f, &basis, 64).unwrap();
        assert!((fg - gf.conj()).norm() < 1e-10 * fg.norm());
        let ff = sklyanin_inner(&f, &f, &basis, 64).unwrap();
        assert!(ff.re > 0.0 && ff.im.abs() < 1e-10 * ff.re);
    }

    #[test]
    fn gram_converges_under_grid_doubling() {
        let params = p(1, 0.15);
        let basis = ThetaBasis::new(&params, 1).unwrap();
        let g64 = gram_matrix_on_grid(&basis, 64).unwrap();
        let g128 = gram_matrix_on_grid(&basis, 128).unwrap();
        assert!(frobenius(&(&g64 - &g128)) / frobenius(&g128) < 1e-8);
    }

    #[test]
    fn generators_are_self_adjoint() {
        for (two_l, eta) in [(1, 0.15), (2, 0.11)] {
            let params = p(two_l, eta);
            let basis = ThetaBasis::new(&params, 1).unwrap();
            let gram = gram_matrix(&basis, &QuadratureOptions::default()).unwrap();
            assert!(gram.hermiticity_residual() < 1e-10);
            assert!(gram.min_eigenvalue() > 0.0);
            let rep = rep_matrices(&basis).unwrap();
            let frame = orthonormal_frame(&gram.g).unwrap();
            for s in &rep.s {
                assert!(gram.self_adjointness_residual(s) < 1e-6);
                let fs = frame.to_frame(s);
                assert!(frobenius(&(&fs - fs.adjoint())) / frobenius(&fs) < 1e-6);
            }
        }
    }

    #[test]
    fn frame_of_identity_and_diagonal() {
        let id = DenseMatrix::identity(3, 3);
        let f = orthonormal_frame(&id).unwrap();
        assert!(frobenius(&(&f.r - &id)) < 1e-15);
        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(4.0, 0.0),
            C64::new(9.0, 0.0),
            C64::new(0.25, 0.0),
        ]));
        let f = orthonormal_frame(&d).unwrap();
        for (i, s) in [2.0, 3.0, 0.5].iter().enumerate() {
            assert!((f.r[(i, i)] - s).norm() < 1e-14);
        }
    }

    #[test]
    fn frame_refactorises_seeded_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::from_fn(4, 4, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let g = a.adjoint() * &a + DenseMatrix::identity(4, 4);
        let f = orthonormal_frame(&g).unwrap();
        assert!(frobenius(&(f.gram() - &g)) < 1e-12 * frobenius(&g));
        // adjoint is involutive
        let b = DenseMatrix::from_fn(4, 4, |i, j| C64::new(i as f64, j as f64 * 0.5));
        assert!(frobenius(&(f.adjoint(&f.adjoint(&b)) - &b)) < 1e-12 * frobenius(&b));
    }

    #[test]
    fn non_positive_gram_is_rejected() {
        let g = DenseMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        assert!(orthonormal_frame(&g).is_err());
    }

    #[test]
    fn elliptic_binomial_expansion_identity() {
        let params = p(2, 0.11);
        let a = C64::new(0.17, 0.05);
        let b = C64::new(-0.29, 0.02);
        let c = C64::new(0.41, -0.03);
        let zs: Vec<C64> = (0..5)
            .map(|i| C64::new(0.1 + 0.17 * i as f64, 0.07 * i as f64 + 0.1))
            .collect();
        assert!((elliptic_binomial(0, 0, a, b, c, &params).unwrap() - 1.0).norm() < 1e-15);
        for k in 0..=3 {
            assert!(
                elliptic_binomial_residual(k, a, b, c, &zs, &params).unwrap() < 1e-9,
                "k={k}"
            );
        }
    }

    #[test]
    fn top_binomial_coefficient_matches_bracket_ratio() {
        let params = p(2, 0.11);
        let a = C64::new(0.17, 0.05);
        let b = C64::new(-0.29, 0.02);
        let c = C64::new(0.41, -0.03);
        // at z = ±c + lattice, [z;c]_{k-n} vanishes for n < k, leaving only the n = k term
        let z = c;
        let k = 2;
        let ratio = za_bracket_k(z, a, k, &params) / za_bracket_k(z, b, k, &params);
        let top = elliptic_binomial(k, k, a, b, c, &params).unwrap();
        assert!((top - ratio).norm() < 1e-10 * ratio.norm());
    }

    #[test]
    fn extremal_6j_closed_form() {
        let params = p(2, 0.11);
        let a = C64::new(0.13, 0.04);
        let b = C64::new(-0.31, 0.0);
        let c = C64::new(0.27, -0.02);
        let d = C64::new(-0.19, 0.03);
        assert!((extremal_6j(c, b, c, d, 2, &params).unwrap() - 1.0).norm() < 1e-15);
        let b2 = C64::new(0.05, 0.01);
        assert_eq!(
            extremal_6j(a, b, c, d, 2, &params).unwrap(),
            extremal_6j(a, b2, c, d, 2, &params).unwrap()
        );
        let closed = extremal_6j(a, b, c, d, 2, &params).unwrap();
        let numeric = extremal_6j_by_collocation(a, b, c, d, &params, 1).unwrap();
        assert!((closed - numeric).norm() < 1e-9 * closed.norm());
    }

    #[test]
    fn extremal_gamma_reduces() {
        let params = p(2, 0.11);
        let c = C64::new(0.21, 0.04);
        let d = C64::new(-0.33, 0.02);
        let general = gamma_coefficient(2, c, d, 2, &params).unwrap();
        let special = gamma_extremal(c, d, 2, &params);
        assert!((general - special).norm() < 1e-12 * special.norm());
    }

    #[test]
    fn pairing_constant_correction_factor() {
        let params = ModelParams::new(0.8, 0.1, 2, 2).unwrap();
        let ratio = pairing_constant(2, &params) / printed_pairing_constant(2, &params);
        let expected = (-PI * I * params.tau * 2.0).exp();
        assert!((ratio - expected).norm() < 1e-14 * expected.norm());
    }

    #[test]
    fn biorthogonality_against_quadrature() {
        for (two_l, eta) in [(1, 0.15), (2, 0.11)] {
            let params = p(two_l, eta);
            let nn = two_l as usize;
            let c = C64::new(0.21, 0.04);
            let d = C64::new(-0.33, 0.02);
            let err = biorthogonality_residual(c, d, nn, &params, 128).unwrap();
            assert!(err < 1e-6, "2l={two_l}: {err}");
        }
    }

    #[test]
    fn natural_pairing_against_quadrature() {
        let params = p(2, 0.11);
        let alpha = C64::new(0.13, 0.05);
        let gamma = C64::new(0.27, -0.03);
        let f = |z| natural_basis_value(z, 2, 2, alpha, C64::new(0.1, 0.0), &params);
        let g = |z| natural_basis_value(z, 2, 2, gamma, C64::new(0.1, 0.0), &params);
        let num = sklyanin_inner_fn(f, g, &params, 128).unwrap();
        let cf = natural_pairing_closed_form(alpha, gamma, 2, &params);
        assert!((num - cf).norm() < 1e-8 * cf.norm());
    }

    #[test]
    fn omega_pairing_against_quadrature() {
        for (two_l, eta) in [(1, 0.15), (2, 0.11)] {
            let params = p(two_l, eta);
            let (u, u2) = (C64::new(0.23, 0.11), C64::new(-0.17, 0.31));
            let (v, v2) = (C64::new(0.31, 0.0), C64::new(-0.12, 0.0));
            let (lam, lam2) = (C64::new(0.37, 0.0), C64::new(0.09, 0.0));
            for (s, s2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let sf = f64::from(s);
                let sf2 = f64::from(s2);
                let left = |z| omega(z, lam * sf, -u.conj(), v * sf, &params);
                let right = |z| omega(z, lam2 * sf2, u2, v2 * sf2, &params);
                let num = sklyanin_inner_fn(left, right, &params, 128).unwrap();
                let cf = omega_pair_closed_form(u, u2, v, v2, lam, lam2, s, s2, &params);
                assert!(
                    (num - cf).norm() < 1e-6 * cf.norm(),
                    "2l={two_l} σ=({s},{s2}): {num} vs {cf}"
                );
            }
        }
    }

    #[test]
    fn omega_pairing_display_shift_differs_for_higher_spin() {
        // The second θ_00 product written with (2j−N+1)η after the explicit
        // −2(2l−1)η term is off by 2(N−1)η; it coincides with the derived form
        // only for l = 1/2.
        let printed =
            |u: C64, u2: C64, v: C64, v2: C64, lam: C64, lam2: C64, params: &ModelParams| {
                let l = params.spin();
                let nn = params.two_l as usize;
                let e = params.eta;
                let mut p = pairing_constant(nn, params) * (PI * I * l * params.tau).exp();
                for j in 0..nn {
                    let sh = (2.0 * j as f64 - nn as f64 + 1.0) * e;
                    p *= params.theta(
                        ThetaChar::T00,
                        (lam2 - lam.conj()) / 2.0 + (u2 + u) / 2.0 + (v.conj() - v2) / 2.0 + sh,
                    ) * params.theta(
                        ThetaChar::T00,
                        (lam2 + lam.conj()) / 2.0 + (u2 - u) / 2.0 + 2.0 * l * e
                            - 2.0 * (2.0 * l - 1.0) * e
                            - (v2 + v.conj()) / 2.0
                            + sh,
                    );
                }
                p
            };
        let (u, u2) = (C64::new(0.23, 0.11), C64::new(-0.17, 0.31));
        let (v, v2) = (C64::new(0.31, 0.0), C64::new(-0.12, 0.0));
        let (lam, lam2) = (C64::new(0.37, 0.0), C64::new(0.09, 0.0));
        let half = p(1, 0.15);
        let a = printed(u, u2, v, v2, lam, lam2, &half);
        let b = omega_pair_closed_form(u, u2, v, v2, lam, lam2, 1, 1, &half);
        assert!((a - b).norm() < 1e-12 * b.norm());
        let one = p(2, 0.11);
        let a = printed(u, u2, v, v2, lam, lam2, &one);
        let b = omega_pair_closed_form(u, u2, v, v2, lam, lam2, 1, 1, &one);
        assert!((a - b).norm() > 1e-3 * b.norm());
    }

    #[test]
    fn omega_self_pairing_is_a_positive_norm() {
        let params = p(2, 0.11);
        let u = C64::new(0.23, 0.11);
        let v = C64::new(0.31, 0.0);
        let lam = C64::new(0.37, 0.0);
        let val = omega_pair_closed_form(u, -u.conj(), v, v, lam, lam, 1, 1, &params);
        assert!(val.re > 0.0 && val.im.abs() < 1e-12 * val.re);
    }
}
