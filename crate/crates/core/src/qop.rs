//! `Q_R(u)`, `Q_L(u)` and `Q(u) = Q_R(u) Q_R(u_0)⁻¹`.
//!
//! Columns of `Q_R(u)` are products of local pseudo-vacua
//! `φ(u; v, λ, σ) = g_N ⊗ ⋯ ⊗ g_1`, `g_j = ω_{σ_jλ_j}(u; σ_j v)`.
//! `Q_L(u) = Q_R(−ū)^*` is the adjoint of a map `C^dim → H`, with the
//! standard form on `C^dim` and the Sklyanin form `G^{⊗N}` on `H`, i.e.
//! `Q_R(−ū)^H G^{⊗N}`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{QopError, Result};
use crate::lattice::{chain_vector, gauge_matrix, lambda_sequence, omega_vector, tensor_power};
use crate::numerics::{condition_number, frobenius, DenseMatrix};
use crate::representation::{ThetaBasis, UMatrices};
use crate::sklyanin::omega_pair_closed_form;
use crate::theta::{ModelParams, C64, I};

/// Cap on the condition number of `Q_R(u_0)`.
pub const Q_CONDITION_CAP: f64 = 1e8;
/// Specs whose `(σ, λ − v)` agree to this are duplicates (identical columns).
pub const DUPLICATE_TOL: f64 = 1e-12;
/// Draws of `v`, `λ` this close to a gauge degeneracy are redrawn.
const GAUGE_MARGIN: f64 = 0.02;

/// A balanced sign sequence `(σ_1, …, σ_N)`, `Σ σ_j = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SigmaSequence {
    signs: Vec<i32>,
}

impl SigmaSequence {
    pub fn new(signs: Vec<i32>) -> Result<Self> {
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(QopError::InvalidParameter {
                field: "sigma",
                reason: "entries must be ±1".into(),
            });
        }
        if signs.iter().sum::<i32>() != 0 {
            return Err(QopError::InvalidParameter {
                field: "sigma",
                reason: "sequence must sum to zero".into(),
            });
        }
        Ok(SigmaSequence { signs })
    }

    pub fn signs(&self) -> &[i32] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// All balanced sequences of length `n`, lexicographic with `+` before `−`.
pub fn sigma_sequences(n: usize) -> Result<Vec<SigmaSequence>> {
    if n < 2 || n % 2 != 0 {
        return Err(QopError::InvalidParameter {
            field: "n_sites",
            reason: format!("must be even and ≥ 2, got {n}"),
        });
    }
    if n > 30 {
        return Err(QopError::InvalidParameter {
            field: "n_sites",
            reason: format!("{n} sites is beyond enumeration"),
        });
    }
    Ok((0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == n / 2)
        .map(|m| SigmaSequence {
            // bit (n−1−j) set means σ_{j+1} = −1
            signs: (0..n)
                .map(|j| if m >> (n - 1 - j) & 1 == 1 { -1 } else { 1 })
                .collect(),
        })
        .collect())
}

/// Parameters `(v, λ, σ)` of one column of `Q_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSpec {
    pub v: C64,
    pub lambda: C64,
    pub sigma: SigmaSequence,
}

impl ColumnSpec {
    /// The column depends on `(v, λ)` only through `λ − v`.
    fn key(&self) -> C64 {
        self.lambda - self.v
    }
}

/// `h_±(u) = (2[u ∓ 2lη])^N`.
pub fn h_pm(u: C64, sign: i32, params: &ModelParams) -> C64 {
    let shift = f64::from(params.two_l) * params.eta * f64::from(sign.signum());
    (2.0 * params.bracket(u - shift)).powu(params.n_sites as u32)
}

/// The site vectors `[g_1, …, g_N]` of a column.
pub fn site_vectors(u: C64, spec: &ColumnSpec, basis: &ThetaBasis) -> Result<Vec<DVector<C64>>> {
    let params = basis.params();
    if spec.sigma.len() != params.n_sites {
        return Err(QopError::Shape(format!(
            "sigma has {} entries for {} sites",
            spec.sigma.len(),
            params.n_sites
        )));
    }
    let lams = lambda_sequence(spec.lambda, spec.sigma.signs(), params);
    spec.sigma
        .signs()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let s = f64::from(*s);
            omega_vector(s * lams[j], u, s * spec.v, basis)
        })
        .collect()
}

/// `φ(u; v, λ, σ) = g_N ⊗ ⋯ ⊗ g_1`.
pub fn phi_column(u: C64, spec: &ColumnSpec, basis: &ThetaBasis) -> Result<DVector<C64>> {
    Ok(chain_vector(&site_vectors(u, spec, basis)?))
}

/// `‖L − a·X − b·Y‖ / max(‖L‖, ‖aX‖, ‖bY‖)`.
pub fn three_term_residual(
    lhs: &DenseMatrix,
    a: C64,
    x: &DenseMatrix,
    b: C64,
    y: &DenseMatrix,
) -> f64 {
    let ax = x * a;
    let by = y * b;
    let scale = frobenius(lhs)
        .max(frobenius(&ax))
        .max(frobenius(&by))
        .max(f64::MIN_POSITIVE);
    frobenius(&(lhs - ax - by)) / scale
}

/// `T(u)φ(u) = h₋(u)φ(u−2η) + h₊(u)φ(u+2η)` for a precomputed `T(u)`.
pub fn phi_three_term_residual(
    u: C64,
    t: &DenseMatrix,
    spec: &ColumnSpec,
    basis: &ThetaBasis,
) -> Result<f64> {
    let params = basis.params();
    let e2 = 2.0 * params.eta;
    let col = |x: DVector<C64>| DenseMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let phi = col(phi_column(u, spec, basis)?);
    let lo = col(phi_column(u - e2, spec, basis)?);
    let hi = col(phi_column(u + e2, spec, basis)?);
    Ok(three_term_residual(
        &(t * phi),
        h_pm(u, -1, params),
        &lo,
        h_pm(u, 1, params),
        &hi,
    ))
}

/// Rejects repeated columns (same `σ` and `λ − v`), which make `Q_R` singular.
pub fn validate_specs(specs: &[ColumnSpec]) -> Result<()> {
    for (i, a) in specs.iter().enumerate() {
        for b in &specs[..i] {
            if a.sigma == b.sigma && (a.key() - b.key()).norm() < DUPLICATE_TOL {
                return Err(QopError::Degenerate(format!(
                    "duplicate column spec (σ = {:?}, λ − v = {})",
                    a.sigma.signs(),
                    a.key()
                )));
            }
        }
    }
    Ok(())
}

/// Matrix whose `k`-th column is `φ(u; spec_k)`.
pub fn build_qr(u: C64, specs: &[ColumnSpec], basis: &ThetaBasis) -> Result<DenseMatrix> {
    let cols = specs
        .par_iter()
        .map(|s| phi_column(u, s, basis))
        .collect::<Result<Vec<_>>>()?;
    let dim = basis.params().chain_dim();
    if cols.iter().any(|c| c.len() != dim) {
        return Err(QopError::Shape(
            "column length differs from the chain dimension".into(),
        ));
    }
    Ok(DenseMatrix::from_columns(&cols))
}

/// `Q_L(u) = Q_R(−ū)^H G^{⊗N}`.
pub fn build_ql(
    u: C64,
    specs: &[ColumnSpec],
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<DenseMatrix> {
    Ok(build_qr(-u.conj(), specs, basis)?.adjoint() * chain_gram)
}

/// Knobs of [`sample_column_specs`].
#[derive(Clone, Copy, Debug)]
pub struct SamplerOptions {
    pub u0_candidates: usize,
    pub max_attempts: usize,
    pub condition_cap: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            u0_candidates: 8,
            max_attempts: 20,
            condition_cap: Q_CONDITION_CAP,
        }
    }
}

/// Accepted specs with the chosen `u_0` and the condition of `Q_R(u_0)`.
#[derive(Clone, Debug)]
pub struct ColumnSample {
    pub specs: Vec<ColumnSpec>,
    pub u0: C64,
    pub condition: f64,
    pub attempts: usize,
}

fn draw_spec(rng: &mut ChaCha8Rng, sigma: &SigmaSequence, params: &ModelParams) -> ColumnSpec {
    loop {
        let v = C64::new(rng.gen_range(-0.5..0.5), 0.0);
        let lambda = C64::new(rng.gen_range(-0.5..0.5), 0.0);
        if v.re.abs() < GAUGE_MARGIN {
            continue;
        }
        let spec = ColumnSpec {
            v,
            lambda,
            sigma: sigma.clone(),
        };
        // every λ_j must admit an invertible gauge matrix
        let lams = lambda_sequence(lambda, sigma.signs(), params);
        if lams.iter().all(|l| gauge_matrix(*l, v, params).is_ok()) {
            return spec;
        }
    }
}

/// Seeded column specs cycling through the σ-sequences, resampled until
/// `Q_R(u_0)` is invertible within the cap. `u_0` is the best of a fixed set
/// of seeded candidates in the fundamental cell.
pub fn sample_column_specs(
    basis: &ThetaBasis,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<ColumnSample> {
    let params = *basis.params();
    let dim = params.chain_dim();
    let seqs = sigma_sequences(params.n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_0b_2c_77);
    let t = params.tau.im;
    let candidates: Vec<C64> = (0..opts.u0_candidates.max(1))
        .map(|_| C64::new(rng.gen_range(0.05..0.95), t * rng.gen_range(0.05..0.95)))
        .collect();
    let mut best = f64::INFINITY;
    for attempt in 1..=opts.max_attempts.max(1) {
        let specs: Vec<ColumnSpec> = (0..dim)
            .map(|k| draw_spec(&mut rng, &seqs[k % seqs.len()], &params))
            .collect();
        if validate_specs(&specs).is_err() {
            continue;
        }
        let conds = candidates
            .par_iter()
            .map(|u0| Ok(condition_number(&build_qr(*u0, &specs, basis)?)))
            .collect::<Result<Vec<f64>>>()?;
        let (idx, cond) = conds
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, c)| if *c < acc.1 { (i, *c) } else { acc },
            );
        best = best.min(cond);
        if cond < opts.condition_cap {
            return Ok(ColumnSample {
                specs,
                u0: candidates[idx],
                condition: cond,
                attempts: attempt,
            });
        }
    }
    Err(QopError::RankDeficient {
        best_condition: best,
        attempts: opts.max_attempts.max(1),
    })
}

/// One seeded set of `(2l+1)^N` distinct column specs with no condition
/// requirement: enough for the identities that hold column by column
/// (`TQ_R`, `Q_LT`, Φ-symmetry, U-laws) even when `Q_R` is rank-deficient.
pub fn draw_column_specs(params: &ModelParams, seed: u64) -> Result<Vec<ColumnSpec>> {
    let seqs = sigma_sequences(params.n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_0b_2c_77);
    let mut specs: Vec<ColumnSpec> = Vec::with_capacity(params.chain_dim());
    while specs.len() < params.chain_dim() {
        let s = draw_spec(&mut rng, &seqs[specs.len() % seqs.len()], params);
        if specs
            .iter()
            .all(|o| o.sigma != s.sigma || (o.key() - s.key()).norm() >= DUPLICATE_TOL)
        {
            specs.push(s);
        }
    }
    Ok(specs)
}

/// Numerical rank of `Q_R(u)` (singular values above `rel_tol·σ_max`).
pub fn numerical_rank(a: &DenseMatrix, rel_tol: f64) -> usize {
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// `Φ(u, u') = ⟨φ(−ū; v, λ, σ), φ(u'; v', λ', σ')⟩` as the product of the
/// single-site pairings `g_k^H G g'_k`.
pub fn phi_pairing(
    u: C64,
    u2: C64,
    spec: &ColumnSpec,
    spec2: &ColumnSpec,
    basis: &ThetaBasis,
    site_gram: &DenseMatrix,
) -> Result<C64> {
    let a = site_vectors(-u.conj(), spec, basis)?;
    let b = site_vectors(u2, spec2, basis)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x.adjoint() * site_gram * y)[(0, 0)])
        .product())
}

/// The same pairing from the chain vectors and `G^{⊗N}`.
pub fn phi_pairing_chain(
    u: C64,
    u2: C64,
    spec: &ColumnSpec,
    spec2: &ColumnSpec,
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<C64> {
    let a = phi_column(-u.conj(), spec, basis)?;
    let b = phi_column(u2, spec2, basis)?;
    Ok((a.adjoint() * chain_gram * b)[(0, 0)])
}

/// The pairing from the closed form of each single-site factor.
pub fn phi_pairing_closed_form(
    u: C64,
    u2: C64,
    spec: &ColumnSpec,
    spec2: &ColumnSpec,
    params: &ModelParams,
) -> C64 {
    let la = lambda_sequence(spec.lambda, spec.sigma.signs(), params);
    let lb = lambda_sequence(spec2.lambda, spec2.sigma.signs(), params);
    (0..params.n_sites)
        .map(|k| {
            let (s, s2) = (spec.sigma.signs()[k], spec2.sigma.signs()[k]);
            omega_pair_closed_form(u, u2, spec.v, spec2.v, la[k], lb[k], s, s2, params)
        })
        .product()
}

/// `|Φ(u,u') − Φ(u',u)| / max(|Φ(u,u')|, |Φ(u',u)|)`.
pub fn phi_symmetry_residual(
    u: C64,
    u2: C64,
    spec: &ColumnSpec,
    spec2: &ColumnSpec,
    basis: &ThetaBasis,
    site_gram: &DenseMatrix,
) -> Result<f64> {
    let a = phi_pairing(u, u2, spec, spec2, basis, site_gram)?;
    let b = phi_pairing(u2, u, spec, spec2, basis, site_gram)?;
    Ok(scalar_relative(a, b))
}

fn scalar_relative(a: C64, b: C64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max_ij |A_ij − B_ij| / max(max|A_ij|, max|B_ij|)`.
pub fn entrywise_relative(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let s = max_abs(a).max(max_abs(b));
    if s == 0.0 {
        0.0
    } else {
        max_abs(&(a - b)) / s
    }
}

/// `Q_L(u) Q_R(u') = Q_L(u') Q_R(u)`, entrywise relative.
pub fn qlqr_residual(
    u: C64,
    u2: C64,
    specs: &[ColumnSpec],
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<f64> {
    let a = build_ql(u, specs, basis, chain_gram)? * build_qr(u2, specs, basis)?;
    let b = build_ql(u2, specs, basis, chain_gram)? * build_qr(u, specs, basis)?;
    Ok(entrywise_relative(&a, &b))
}

/// `T(u) Q_R(u) = h₋ Q_R(u−2η) + h₊ Q_R(u+2η)` for a precomputed `T(u)`.
pub fn tqr_residual(
    u: C64,
    t: &DenseMatrix,
    specs: &[ColumnSpec],
    basis: &ThetaBasis,
) -> Result<f64> {
    let p = basis.params();
    let e2 = 2.0 * p.eta;
    let lhs = t * build_qr(u, specs, basis)?;
    Ok(three_term_residual(
        &lhs,
        h_pm(u, -1, p),
        &build_qr(u - e2, specs, basis)?,
        h_pm(u, 1, p),
        &build_qr(u + e2, specs, basis)?,
    ))
}

/// `Q_L(u) T(u) = h₋ Q_L(u−2η) + h₊ Q_L(u+2η)`.
pub fn qlt_residual(
    u: C64,
    t: &DenseMatrix,
    specs: &[ColumnSpec],
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<f64> {
    let p = basis.params();
    let e2 = 2.0 * p.eta;
    let lhs = build_ql(u, specs, basis, chain_gram)? * t;
    Ok(three_term_residual(
        &lhs,
        h_pm(u, -1, p),
        &build_ql(u - e2, specs, basis, chain_gram)?,
        h_pm(u, 1, p),
        &build_ql(u + e2, specs, basis, chain_gram)?,
    ))
}

/// Phase factors of the `U_1` and `U_3` laws: `e^{−Nlπi}` and
/// `e^{Nlπi(τ−1) + 2Nlπiu}`.
pub fn u_law_factors(u: C64, params: &ModelParams) -> (C64, C64) {
    let nl = params.total_spin() as f64;
    let f1 = (-PI * I * nl).exp();
    let f3 = (PI * I * nl * (params.tau - 1.0) + 2.0 * PI * I * nl * u).exp();
    (f1, f3)
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    crate::numerics::relative_difference(a, b)
}

/// `[U_1^{⊗N} Q_R(u) vs e^{−Nlπi} Q_R(u+1), U_3^{⊗N} Q_R(u) vs … Q_R(u+τ)]`.
pub fn qr_u_law_residuals(
    u: C64,
    specs: &[ColumnSpec],
    umats: &UMatrices,
    basis: &ThetaBasis,
) -> Result<[f64; 2]> {
    let p = basis.params();
    let n = p.n_sites;
    let (f1, f3) = u_law_factors(u, p);
    let q = build_qr(u, specs, basis)?;
    let u1 = tensor_power(&umats.u1, n);
    let u3 = tensor_power(&umats.u3, n);
    Ok([
        rel(&(&u1 * &q), &(build_qr(u + 1.0, specs, basis)? * f1)),
        rel(&(&u3 * &q), &(build_qr(u + p.tau, specs, basis)? * f3)),
    ])
}

/// Mirror laws `Q_L(u) U_a^{⊗N} = (factor) Q_L(u + shift)`.
pub fn ql_u_law_residuals(
    u: C64,
    specs: &[ColumnSpec],
    umats: &UMatrices,
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<[f64; 2]> {
    let p = basis.params();
    let n = p.n_sites;
    let (f1, f3) = u_law_factors(u, p);
    let q = build_ql(u, specs, basis, chain_gram)?;
    let u1 = tensor_power(&umats.u1, n);
    let u3 = tensor_power(&umats.u3, n);
    Ok([
        rel(
            &(&q * &u1),
            &(build_ql(u + 1.0, specs, basis, chain_gram)? * f1),
        ),
        rel(
            &(&q * &u3),
            &(build_ql(u + p.tau, specs, basis, chain_gram)? * f3),
        ),
    ])
}

/// `Q_R(u + 2) = Q_R(u)`.
pub fn qr_periodicity_residual(u: C64, specs: &[ColumnSpec], basis: &ThetaBasis) -> Result<f64> {
    Ok(rel(
        &build_qr(u, specs, basis)?,
        &build_qr(u + 2.0, specs, basis)?,
    ))
}

/// Column specs with `Q_R(u_0)⁻¹`, shared read-only by every `Q(u)`.
#[derive(Clone, Debug)]
pub struct QFamily {
    pub specs: Vec<ColumnSpec>,
    pub u0: C64,
    pub condition: f64,
    pub attempts: usize,
    qr_u0_inverse: DenseMatrix,
}

impl QFamily {
    /// Samples specs with [`sample_column_specs`] and factorises `Q_R(u_0)`.
    pub fn new(basis: &ThetaBasis, seed: u64, opts: &SamplerOptions) -> Result<Self> {
        let sample = sample_column_specs(basis, seed, opts)?;
        Self::from_specs(sample.specs, sample.u0, basis, opts.condition_cap).map(|mut f| {
            f.attempts = sample.attempts;
            f
        })
    }

    pub fn from_specs(
        specs: Vec<ColumnSpec>,
        u0: C64,
        basis: &ThetaBasis,
        cap: f64,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        let q0 = build_qr(u0, &specs, basis)?;
        if q0.nrows() != q0.ncols() {
            return Err(QopError::Shape(format!(
                "Q_R(u0) is {}x{}",
                q0.nrows(),
                q0.ncols()
            )));
        }
        let condition = condition_number(&q0);
        if !condition.is_finite() || condition > cap {
            return Err(QopError::IllConditioned { condition, cap });
        }
        let qr_u0_inverse = q0.try_inverse().ok_or(QopError::IllConditioned {
            condition: f64::INFINITY,
            cap,
        })?;
        Ok(QFamily {
            specs,
            u0,
            condition,
            attempts: 1,
            qr_u0_inverse,
        })
    }

    pub fn qr_u0_inverse(&self) -> &DenseMatrix {
        &self.qr_u0_inverse
    }

    pub fn qr(&self, u: C64, basis: &ThetaBasis) -> Result<DenseMatrix> {
        build_qr(u, &self.specs, basis)
    }

    pub fn ql(&self, u: C64, basis: &ThetaBasis, chain_gram: &DenseMatrix) -> Result<DenseMatrix> {
        build_ql(u, &self.specs, basis, chain_gram)
    }

    /// `Q(u) = Q_R(u) Q_R(u_0)⁻¹`.
    pub fn q(&self, u: C64, basis: &ThetaBasis) -> Result<DenseMatrix> {
        Ok(self.qr(u, basis)? * &self.qr_u0_inverse)
    }
}

pub fn build_q(u: C64, family: &QFamily, basis: &ThetaBasis) -> Result<DenseMatrix> {
    family.q(u, basis)
}

/// Raw residuals of the `Q(u)` relations; compare against `tol · condition`.
#[derive(Clone, Copy, Debug)]
pub struct QRelationResiduals {
    /// `Q(u_0) = 1`.
    pub identity_at_u0: f64,
    /// `Q(u) = Q_L(u_0)⁻¹ Q_L(u)`.
    pub left_factorisation: f64,
    /// `Q(u) Q(u') = Q(u') Q(u)`.
    pub qq_commute: f64,
    /// `T(u) Q(u) = Q(u) T(u)`.
    pub tq_commute: f64,
    /// `T(u) Q(u) = h₋ Q(u−2η) + h₊ Q(u+2η)`.
    pub tq_three_term: f64,
    /// `Q(u) T(u) = h₋ Q(u−2η) + h₊ Q(u+2η)`.
    pub qt_three_term: f64,
    pub condition: f64,
}

impl QRelationResiduals {
    pub fn max_raw(&self) -> f64 {
        [
            self.identity_at_u0,
            self.left_factorisation,
            self.qq_commute,
            self.tq_commute,
            self.tq_three_term,
            self.qt_three_term,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest residual divided by the condition estimate.
    pub fn max_scaled(&self) -> f64 {
        self.max_raw() / self.condition.max(1.0)
    }
}

/// All `Q(u)` relations at `u` (with `u'` for `QQ = QQ`); `t` is `T(u)`.
pub fn q_relation_residuals(
    u: C64,
    u2: C64,
    t: &DenseMatrix,
    family: &QFamily,
    basis: &ThetaBasis,
    chain_gram: &DenseMatrix,
) -> Result<QRelationResiduals> {
    let p = basis.params();
    let e2 = 2.0 * p.eta;
    let dim = p.chain_dim();
    let q = family.q(u, basis)?;
    let q2 = family.q(u2, basis)?;
    let q_lo = family.q(u - e2, basis)?;
    let q_hi = family.q(u + e2, basis)?;
    let (hm, hp) = (h_pm(u, -1, p), h_pm(u, 1, p));

    let id = DenseMatrix::identity(dim, dim);
    let q_at_u0 = family.q(family.u0, basis)?;
    let ql0 = family.ql(family.u0, basis, chain_gram)?;
    let ql = family.ql(u, basis, chain_gram)?;
    let left = ql0.lu().solve(&ql).ok_or(QopError::IllConditioned {
        condition: f64::INFINITY,
        cap: Q_CONDITION_CAP,
    })?;

    let tq = t * &q;
    let qt = &q * t;
    Ok(QRelationResiduals {
        identity_at_u0: rel(&q_at_u0, &id),
        left_factorisation: rel(&left, &q),
        qq_commute: rel(&(&q * &q2), &(&q2 * &q)),
        tq_commute: rel(&tq, &qt),
        tq_three_term: three_term_residual(&tq, hm, &q_lo, hp, &q_hi),
        qt_three_term: three_term_residual(&qt, hm, &q_lo, hp, &q_hi),
        condition: family.condition,
    })
}

/// `[U_1 Q, Q U_1, U_3 Q, Q U_3]` against the shifted `Q`.
pub fn q_u_law_residuals(
    u: C64,
    family: &QFamily,
    umats: &UMatrices,
    basis: &ThetaBasis,
) -> Result<[f64; 4]> {
    let p = basis.params();
    let n = p.n_sites;
    let (f1, f3) = u_law_factors(u, p);
    let q = family.q(u, basis)?;
    let u1 = tensor_power(&umats.u1, n);
    let u3 = tensor_power(&umats.u3, n);
    let s1 = family.q(u + 1.0, basis)? * f1;
    let s3 = family.q(u + p.tau, basis)? * f3;
    Ok([
        rel(&(&u1 * &q), &s1),
        rel(&(&q * &u1), &s1),
        rel(&(&u3 * &q), &s3),
        rel(&(&q * &u3), &s3),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::transfer_matrix;
    use crate::representation::{rep_matrices, u_matrices};
    use crate::sklyanin::{gram_matrix, orthonormal_frame, QuadratureOptions};

    fn params(two_l: u32, eta: f64, n: usize) -> (ModelParams, ThetaBasis) {
        let p = ModelParams::new(1.0, eta, two_l, n).unwrap();
        let b = ThetaBasis::new(&p, 1).unwrap();
        (p, b)
    }

    fn gram(basis: &ThetaBasis) -> DenseMatrix {
        gram_matrix(basis, &QuadratureOptions::default()).unwrap().g
    }

    fn spec(v: f64, lambda: f64, signs: &[i32]) -> ColumnSpec {
        ColumnSpec {
            v: C64::new(v, 0.0),
            lambda: C64::new(lambda, 0.0),
            sigma: SigmaSequence::new(signs.to_vec()).unwrap(),
        }
    }

    #[test]
    fn sigma_enumeration() {
        let two = sigma_sequences(2).unwrap();
        assert_eq!(
            two.iter().map(|s| s.signs().to_vec()).collect::<Vec<_>>(),
            vec![vec![1, -1], vec![-1, 1]]
        );
        let four = sigma_sequences(4).unwrap();
        assert_eq!(four.len(), 6);
        assert_eq!(four[0].signs(), &[1, 1, -1, -1]);
        assert!(four.iter().all(|s| s.signs().iter().sum::<i32>() == 0));
        assert_eq!(sigma_sequences(6).unwrap().len(), 20);
        assert!(sigma_sequences(3).is_err());
        assert!(SigmaSequence::new(vec![1, 1]).is_err());
    }

    #[test]
    fn lambda_sequences_close_and_weighted_sum() {
        let p = ModelParams::new(1.0, 0.15, 1, 4).unwrap();
        for s in sigma_sequences(4).unwrap() {
            let lams = lambda_sequence(C64::new(0.23, 0.0), s.signs(), &p);
            assert!((lams[4] - lams[0]).norm() < 1e-15);
            let sum: C64 = (0..4).map(|k| lams[k] * f64::from(s.signs()[k])).sum();
            let expect = -2.0 * 4.0 * p.spin() * p.eta;
            assert!((sum.re - expect).abs() < 1e-14, "{sum} vs {expect}");
        }
    }

    #[test]
    fn h_functions() {
        let p = ModelParams::new(1.0, 0.15, 1, 2).unwrap();
        let two_l_eta = C64::new(0.15, 0.0);
        assert!(h_pm(two_l_eta, 1, &p).norm() < 1e-15);
        assert!(h_pm(-two_l_eta, -1, &p).norm() < 1e-15);
        let u = C64::new(0.31, 0.2);
        let direct = (2.0 * p.bracket(u - 0.15)).powu(2);
        assert!((h_pm(u, 1, &p) - direct).norm() < 1e-15);
    }

    #[test]
    fn phi_three_term_identity() {
        for (two_l, eta, n, signs) in [
            (1, 0.15, 2, vec![1, -1]),
            (2, 0.11, 2, vec![-1, 1]),
            (1, 0.15, 4, vec![1, -1, -1, 1]),
        ] {
            let (p, basis) = params(two_l, eta, n);
            let rep = rep_matrices(&basis).unwrap();
            let u = C64::new(0.27, 0.11);
            let t = transfer_matrix(u, &rep, &p).unwrap();
            let r = phi_three_term_residual(u, &t, &spec(0.19, -0.31, &signs), &basis).unwrap();
            assert!(r < 1e-9, "2l={two_l} n={n}: {r}");
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let a = spec(0.1, 0.3, &[1, -1]);
        let b = spec(0.2, 0.4, &[1, -1]);
        assert!(validate_specs(&[a.clone(), b]).is_err());
        let c = spec(0.2, 0.4, &[-1, 1]);
        assert!(validate_specs(&[a, c]).is_ok());
    }

    #[test]
    fn spin_half_sampler_finds_full_rank() {
        let (p, basis) = params(1, 0.15, 2);
        let s = sample_column_specs(&basis, 1, &SamplerOptions::default()).unwrap();
        assert_eq!(s.specs.len(), p.chain_dim());
        assert!(s.condition < Q_CONDITION_CAP);
        let again = sample_column_specs(&basis, 1, &SamplerOptions::default()).unwrap();
        assert_eq!(s.specs, again.specs);
        assert_eq!(s.u0, again.u0);
    }

    #[test]
    fn two_site_columns_depend_on_lambda_minus_v_only() {
        let (_, basis) = params(2, 0.11, 2);
        let u = C64::new(0.3, 0.2);
        let a = phi_column(u, &spec(0.1, 0.35, &[1, -1]), &basis).unwrap();
        let b = phi_column(u, &spec(-0.05, 0.2, &[1, -1]), &basis).unwrap();
        assert!(crate::numerics::vector_relative_difference(&a, &b) < 1e-12);
    }

    #[test]
    fn qr_relations() {
        let (p, basis) = params(1, 0.15, 2);
        let rep = rep_matrices(&basis).unwrap();
        let s = sample_column_specs(&basis, 2, &SamplerOptions::default()).unwrap();
        let u = C64::new(0.41, 0.17);
        let t = transfer_matrix(u, &rep, &p).unwrap();
        assert!(tqr_residual(u, &t, &s.specs, &basis).unwrap() < 1e-9);
        assert!(qr_periodicity_residual(u, &s.specs, &basis).unwrap() < 1e-12);
        let umats = u_matrices(&basis).unwrap();
        let [r1, r3] = qr_u_law_residuals(u, &s.specs, &umats, &basis).unwrap();
        assert!(r1 < 1e-8 && r3 < 1e-8, "{r1} {r3}");
    }

    #[test]
    fn ql_relations_and_pairing() {
        let (p, basis) = params(2, 0.11, 2);
        let rep = rep_matrices(&basis).unwrap();
        let g = gram(&basis);
        let chain = orthonormal_frame(&g).unwrap().tensor_power(2).gram();
        let specs = vec![
            spec(0.12, -0.21, &[1, -1]),
            spec(-0.27, 0.33, &[-1, 1]),
            spec(0.31, 0.08, &[1, -1]),
        ];
        let u = C64::new(0.33, 0.14);
        let u2 = C64::new(-0.12, 0.29);
        let t = transfer_matrix(u, &rep, &p).unwrap();
        assert!(qlt_residual(u, &t, &specs, &basis, &chain).unwrap() < 1e-6);
        assert!(qlqr_residual(u, u2, &specs, &basis, &chain).unwrap() < 1e-6);
        let umats = u_matrices(&basis).unwrap();
        let [r1, r3] = ql_u_law_residuals(u, &specs, &umats, &basis, &chain).unwrap();
        assert!(r1 < 1e-6 && r3 < 1e-6, "{r1} {r3}");

        let (a, b) = (&specs[0], &specs[1]);
        let prod = phi_pairing(u, u2, a, b, &basis, &g).unwrap();
        let full = phi_pairing_chain(u, u2, a, b, &basis, &chain).unwrap();
        assert!(scalar_relative(prod, full) < 1e-10);
        assert!(phi_symmetry_residual(u, u2, a, b, &basis, &g).unwrap() < 1e-6);
        let cf = phi_pairing_closed_form(u, u2, a, b, &p);
        assert!(scalar_relative(prod, cf) < 1e-6, "{prod} vs {cf}");
    }

    #[test]
    fn site_pairing_invariant_along_fixed_factor_arguments() {
        // moving (u, λ) by (δ, σδ) and (u', λ') by (δ', −σ'δ') keeps both
        // factor arguments of the single-site pairing fixed
        let p = ModelParams::new(1.0, 0.11, 2, 2).unwrap();
        let (u, u2) = (C64::new(0.33, 0.14), C64::new(-0.12, 0.29));
        let (v, v2) = (C64::new(0.12, 0.0), C64::new(-0.27, 0.0));
        let (lam, lam2) = (C64::new(-0.21, 0.0), C64::new(0.33, 0.0));
        for (s, s2) in [(1, -1), (-1, 1), (1, 1)] {
            let base = omega_pair_closed_form(u, u2, v, v2, lam, lam2, s, s2, &p);
            for (d, d2) in [(0.07, -0.05), (-0.13, 0.02)] {
                let moved = omega_pair_closed_form(
                    u + d,
                    u2 + d2,
                    v,
                    v2,
                    lam + f64::from(s) * d,
                    lam2 - f64::from(s2) * d2,
                    s,
                    s2,
                    &p,
                );
                assert!(scalar_relative(base, moved) < 1e-12, "{base} vs {moved}");
            }
            // a generic move changes it
            let off = omega_pair_closed_form(u + 0.07, u2, v, v2, lam, lam2, s, s2, &p);
            assert!(scalar_relative(base, off) > 1e-3);
        }
    }

    #[test]
    fn q_family_relations_spin_half() {
        let (p, basis) = params(1, 0.15, 2);
        let rep = rep_matrices(&basis).unwrap();
        let g = gram(&basis);
        let chain = orthonormal_frame(&g).unwrap().tensor_power(2).gram();
        let fam = QFamily::new(&basis, 1, &SamplerOptions::default()).unwrap();
        let u = C64::new(0.23, 0.31);
        let u2 = C64::new(0.61, 0.12);
        let t = transfer_matrix(u, &rep, &p).unwrap();
        let r = q_relation_residuals(u, u2, &t, &fam, &basis, &chain).unwrap();
        assert!(r.identity_at_u0 < 1e-10);
        assert!(r.max_raw() < 1e-6 * fam.condition, "{r:?}");
        let umats = u_matrices(&basis).unwrap();
        let laws = q_u_law_residuals(u, &fam, &umats, &basis).unwrap();
        assert!(laws.iter().all(|x| *x < 1e-6), "{laws:?}");
    }

    #[test]
    fn two_site_spin_one_is_rank_deficient() {
        let (p, basis) = params(2, 0.11, 2);
        let opts = SamplerOptions {
            max_attempts: 3,
            ..Default::default()
        };
        match sample_column_specs(&basis, 1, &opts) {
            Err(QopError::RankDeficient {
                best_condition,
                attempts,
            }) => {
                assert!(best_condition > 1e10);
                assert_eq!(attempts, 3);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let specs: Vec<ColumnSpec> = (0..9)
            .map(|k| {
                spec(
                    0.05 + 0.04 * k as f64,
                    -0.3 + 0.07 * k as f64,
                    if k % 2 == 0 { &[1, -1] } else { &[-1, 1] },
                )
            })
            .collect();
        let q = build_qr(C64::new(0.3, 0.2), &specs, &basis).unwrap();
        assert_eq!(numerical_rank(&q, 1e-10), 4 * p.two_l as usize);
    }
}
