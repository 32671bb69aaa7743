//! Symmetry sectors, joint eigenvectors of `T(u)` and `Q(u)`, Bethe roots
//! and the identities they satisfy.
//!
//! The involutions `U_1^{⊗N}`, `U_3^{⊗N}` commute with `T` and `Q` and
//! split the chain space into four sectors `(ν_1, ν_3)`. On each joint
//! eigenvector `q(u)` has `Nl` zeros per period cell; they are the Bethe
//! roots.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{QopError, Result};
use crate::lattice::{tensor_power, transfer_matrix};
use crate::numerics::{
    column_space_absolute, eig_decompose, find_zeros_with_options, frobenius, DenseMatrix,
    Rectangle, ZeroSearchOptions,
};
use crate::qop::{h_pm, u_law_factors, QFamily};
use crate::representation::{RepMatrices, ThetaBasis, UMatrices};
use crate::sklyanin::OrthonormalFrame;
use crate::theta::{lattice_distance, ModelParams, C64, I};

/// Eigenvalues closer than this (relative) are treated as one cluster.
pub const DEGENERACY_GAP: f64 = 1e-6;
/// Offset of the root-search rectangle from the period cell, as a fraction
/// of the cell edges.
pub const CELL_OFFSET: f64 = 1e-3;
/// Grid points nearer than this to a root are skipped.
pub const ROOT_CLEARANCE: f64 = 1e-3;
const Q_CACHE_LIMIT: usize = 50_000;

/// Joint eigenspace of `U_1^{⊗N}`, `U_3^{⊗N}` with eigenvalues
/// `(−1)^{ν_1}`, `(−1)^{ν_3}`.
#[derive(Clone, Debug)]
pub struct Sector {
    pub nu1: u8,
    pub nu3: u8,
    pub projector: DenseMatrix,
    /// Orthonormal columns spanning the sector.
    pub basis: DenseMatrix,
    pub dimension: usize,
}

/// `U_1^{⊗N}` and `U_3^{⊗N}`.
pub fn chain_involutions(umats: &UMatrices, n_sites: usize) -> (DenseMatrix, DenseMatrix) {
    (
        tensor_power(&umats.u1, n_sites),
        tensor_power(&umats.u3, n_sites),
    )
}

fn sign(nu: u8) -> f64 {
    if nu == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Four spectral projectors `(1 ± U_1)(1 ± U_3)/4` and bases of their ranges.
pub fn sector_decomposition(u1n: &DenseMatrix, u3n: &DenseMatrix) -> Result<Vec<Sector>> {
    let dim = u1n.nrows();
    let id = DenseMatrix::identity(dim, dim);
    for (name, u) in [("U_1", u1n), ("U_3", u3n)] {
        let r = frobenius(&(u * u - &id)) / frobenius(u).powi(2).max(1.0);
        if r > 1e-9 {
            return Err(QopError::Degenerate(format!(
                "{name}^N squares to 1 only up to {r:.3e}; eigenvalues are not ±1"
            )));
        }
    }
    let comm = frobenius(&(u1n * u3n - u3n * u1n)) / (frobenius(u1n) * frobenius(u3n));
    if comm > 1e-10 {
        return Err(QopError::Degenerate(format!(
            "U_1^N and U_3^N fail to commute ({comm:.3e})"
        )));
    }
    let mut sectors = Vec::with_capacity(4);
    for nu1 in 0..2u8 {
        for nu3 in 0..2u8 {
            let p1 = (&id + u1n * C64::new(sign(nu1), 0.0)) * C64::new(0.5, 0.0);
            let p3 = (&id + u3n * C64::new(sign(nu3), 0.0)) * C64::new(0.5, 0.0);
            let projector = p1 * p3;
            // nonzero singular values of a projector are ≥ 1
            let basis = column_space_absolute(&projector, 0.5);
            sectors.push(Sector {
                nu1,
                nu3,
                projector,
                dimension: basis.ncols(),
                basis,
            });
        }
    }
    let total: usize = sectors.iter().map(|s| s.dimension).sum();
    if total != dim {
        return Err(QopError::Degenerate(format!(
            "sector dimensions sum to {total}, expected {dim}"
        )));
    }
    Ok(sectors)
}

/// `max_a ‖U_a B − (−1)^{ν_a} B‖ / ‖B‖` on the sector basis `B`.
pub fn sector_residual(sector: &Sector, u1n: &DenseMatrix, u3n: &DenseMatrix) -> f64 {
    if sector.dimension == 0 {
        return 0.0;
    }
    let b = &sector.basis;
    let nb = frobenius(b);
    let r1 = frobenius(&(u1n * b - b * C64::new(sign(sector.nu1), 0.0))) / nb;
    let r3 = frobenius(&(u3n * b - b * C64::new(sign(sector.nu3), 0.0))) / nb;
    r1.max(r3)
}

/// A joint eigenvector (frame coordinates, unit norm) and its sector.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub nu1: u8,
    pub nu3: u8,
    /// Index within the sector, in the order produced by the splitting.
    pub index: usize,
    pub vector: DVector<C64>,
    /// Size of the cluster left unsplit by every probe (1 when simple).
    pub multiplicity: usize,
}

impl EigenPair {
    /// `w^H A w / w^H w`.
    pub fn rayleigh(&self, a: &DenseMatrix) -> C64 {
        let w = &self.vector;
        (w.adjoint() * a * w)[(0, 0)] / w.norm_squared()
    }

    /// `‖A w − ρ w‖ / (‖A‖ ‖w‖)` with `ρ` the Rayleigh quotient.
    pub fn eigen_residual(&self, a: &DenseMatrix) -> f64 {
        let w = &self.vector;
        let r = self.rayleigh(a);
        (a * w - w * r).norm() / (frobenius(a) * w.norm()).max(f64::MIN_POSITIVE)
    }
}

fn orthonormalize(c: &DenseMatrix) -> DenseMatrix {
    c.clone().qr().q()
}

fn cluster(values: &[C64], gap: f64) -> Vec<Vec<usize>> {
    let scale = values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..i {
            if (values[i] - values[j]).norm() <= gap * scale {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = root(&mut label, i);
        let g = *index.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Recursively splits the span of `c` with the restricted probes.
fn split(
    c: DenseMatrix,
    ops: &[DenseMatrix],
    level: usize,
    gap: f64,
    out: &mut Vec<(DVector<C64>, usize)>,
) -> Result<()> {
    let k = c.ncols();
    if k == 1 {
        out.push((c.column(0).into_owned(), 1));
        return Ok(());
    }
    if level == ops.len() {
        // every probe must act as a scalar on an unsplit cluster
        for (i, a) in ops.iter().enumerate() {
            let x = c.adjoint() * a * &c;
            let mean = x.trace() / k as f64;
            let dev = frobenius(&(&x - DenseMatrix::identity(k, k) * mean));
            if dev > gap.sqrt() * frobenius(&x).max(f64::MIN_POSITIVE) {
                return Err(QopError::UnresolvedDegeneracy(format!(
                    "cluster of size {k} is not diagonalisable by probe {i} (deviation {dev:.3e})"
                )));
            }
        }
        for j in 0..k {
            out.push((c.column(j).into_owned(), k));
        }
        return Ok(());
    }
    let x = c.adjoint() * &ops[level] * &c;
    let e = eig_decompose(&x)?;
    for group in cluster(&e.values, gap) {
        let mut sub = DenseMatrix::zeros(k, group.len());
        for (col, &i) in group.iter().enumerate() {
            sub.set_column(col, &e.vectors.column(i));
        }
        let span = &c * sub;
        if group.len() == 1 {
            let v = span.column(0).into_owned();
            let n = v.norm();
            out.push((v / C64::new(n, 0.0), 1));
        } else {
            split(orthonormalize(&span), ops, level + 1, gap, out)?;
        }
    }
    Ok(())
}

/// Joint eigenvectors in every sector. `probes` are full chain operators,
/// typically `[T(u_1), T(u_2), Q(u_1)]`: the first diagonalises each sector,
/// the others split its degenerate clusters in turn.
pub fn joint_eigenbasis(
    sectors: &[Sector],
    probes: &[DenseMatrix],
    gap: f64,
) -> Result<Vec<EigenPair>> {
    if probes.is_empty() {
        return Err(QopError::InvalidParameter {
            field: "probes",
            reason: "at least one probe operator".into(),
        });
    }
    let per_sector = sectors
        .par_iter()
        .map(|s| {
            if s.dimension == 0 {
                return Ok(Vec::new());
            }
            let b = &s.basis;
            let ops: Vec<DenseMatrix> = probes.iter().map(|p| b.adjoint() * p * b).collect();
            let mut found = Vec::new();
            split(
                DenseMatrix::identity(s.dimension, s.dimension),
                &ops,
                0,
                gap,
                &mut found,
            )?;
            Ok(found
                .into_iter()
                .enumerate()
                .map(|(index, (c, multiplicity))| {
                    let w = b * c;
                    let n = w.norm();
                    EigenPair {
                        nu1: s.nu1,
                        nu3: s.nu3,
                        index,
                        vector: w / C64::new(n, 0.0),
                        multiplicity,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sector.into_iter().flatten().collect())
}

/// Evaluates `q(u) = w^H Q(u) w / w^H w` for joint eigenvectors given in
/// frame coordinates, caching `Q_R(u)` across eigenvectors.
pub struct QEvaluator<'a> {
    family: &'a QFamily,
    basis: &'a ThetaBasis,
    frame: &'a OrthonormalFrame,
    cache: Mutex<HashMap<(u64, u64), Arc<DenseMatrix>>>,
}

impl<'a> QEvaluator<'a> {
    /// `frame` is the chain frame (`G^{⊗N} = R^H R`).
    pub fn new(family: &'a QFamily, basis: &'a ThetaBasis, frame: &'a OrthonormalFrame) -> Self {
        QEvaluator {
            family,
            basis,
            frame,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// `Q(u)` in frame coordinates, `R Q_R(u) Q_R(u_0)⁻¹ R⁻¹`.
    pub fn q_matrix(&self, u: C64) -> Result<DenseMatrix> {
        Ok(&self.frame.r * &*self.qr(u)? * self.family.qr_u0_inverse() * &self.frame.r_inverse)
    }

    fn qr(&self, u: C64) -> Result<Arc<DenseMatrix>> {
        let key = (u.re.to_bits(), u.im.to_bits());
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(self.family.qr(u, self.basis)?);
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= Q_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&m));
        Ok(m)
    }

    /// Precomputes `w^H R / w^H w` and `Q_R(u_0)⁻¹ R⁻¹ w` for one eigenvector.
    pub fn prepare(&self, pair: &EigenPair) -> PreparedQ {
        PreparedQ {
            left: pair.vector.adjoint() * &self.frame.r / C64::new(pair.vector.norm_squared(), 0.0),
            right: self.family.qr_u0_inverse() * (&self.frame.r_inverse * &pair.vector),
        }
    }

    pub fn q(&self, prepared: &PreparedQ, u: C64) -> Result<C64> {
        let qr = self.qr(u)?;
        Ok((&prepared.left * (&*qr * &prepared.right))[(0, 0)])
    }
}

/// Row and column vectors such that `q(u) = left · Q_R(u) · right`.
#[derive(Clone, Debug)]
pub struct PreparedQ {
    left: nalgebra::RowDVector<C64>,
    right: DVector<C64>,
}

/// The period cell `[0,1] × [0,τ]` shifted inward by [`CELL_OFFSET`].
pub fn fundamental_rectangle(params: &ModelParams) -> Result<Rectangle> {
    let t = params.tau.im;
    Rectangle::new(C64::new(CELL_OFFSET, CELL_OFFSET * t), 1.0, t)
}

/// Zeros of `q` in the period cell.
#[derive(Clone, Debug)]
pub struct BetheRoots {
    /// Representatives in the search rectangle.
    pub roots: Vec<C64>,
    /// Lattice-shifted representatives with `q(u) = C e^{ν_1πiu} ∏[u − u_j]`.
    pub normalised: Vec<C64>,
    /// Measured exponent `m` in `q(u) ∝ e^{mπiu} ∏[u − u_j]` for the
    /// rectangle representatives.
    pub exponent: i64,
    pub winding: i64,
    /// `|q(u_j)|` relative to the local scale of `q`.
    pub root_residuals: Vec<f64>,
    /// Spread of `q(u) / (e^{ν_1πiu} ∏[u − u_j])` along the grid.
    pub explicit_form_residual: f64,
}

fn near_root(u: C64, roots: &[C64], tau: C64) -> bool {
    roots
        .iter()
        .any(|r| lattice_distance(u - r, tau) < ROOT_CLEARANCE)
}

fn root_product(u: C64, roots: &[C64], params: &ModelParams) -> C64 {
    roots.iter().map(|r| params.bracket(u - r)).product()
}

/// Extracts the `Nl` zeros of `q` in the period cell and normalises their
/// lattice representatives against the quasi-periodicity of `q`.
pub fn bethe_roots<F>(
    q: F,
    nu1: u8,
    params: &ModelParams,
    grid: &[C64],
    opts: &ZeroSearchOptions,
) -> Result<BetheRoots>
where
    F: Fn(C64) -> Result<C64>,
{
    let expected = params.total_spin();
    let failure: RefCell<Option<QopError>> = RefCell::new(None);
    let scalar = |u: C64| match q(u) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            C64::new(f64::NAN, f64::NAN)
        }
    };
    let found =
        find_zeros_with_options(scalar, fundamental_rectangle(params)?, Some(expected), opts);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let found = found?;
    let roots = found.zeros.clone();

    // r(u) = q(u)/∏[u−u_j] ∝ e^{mπiu}: |r(u + ih)/r(u)| = e^{−mπh}
    let tau = params.tau;
    let h = 0.25 * tau.im;
    let mut estimates = Vec::new();
    for &u in grid {
        let v = u + I * h;
        if near_root(u, &roots, tau) || near_root(v, &roots, tau) {
            continue;
        }
        let ru = q(u)? / root_product(u, &roots, params);
        let rv = q(v)? / root_product(v, &roots, params);
        estimates.push(-(rv.norm() / ru.norm()).ln() / (PI * h));
    }
    if estimates.is_empty() {
        return Err(QopError::ZeroSearch(
            "no grid point clear of the roots".into(),
        ));
    }
    let m_f = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let exponent = m_f.round() as i64;
    if (m_f - exponent as f64).abs() > 1e-3 || (exponent - i64::from(nu1)).rem_euclid(2) != 0 {
        return Err(QopError::ZeroSearch(format!(
            "q(u)/∏[u−u_j] grows like e^{{{m_f:.4}πiu}}, inconsistent with ν_1 = {nu1}"
        )));
    }
    // each +τ shift of a root lowers the exponent by 2
    let mut normalised = roots.clone();
    let shift = (exponent - i64::from(nu1)) / 2;
    normalised[0] += tau * shift as f64;

    let nu = f64::from(nu1);
    let mut ratios = Vec::new();
    for &u in grid {
        if near_root(u, &roots, tau) {
            continue;
        }
        ratios.push(q(u)? / ((PI * I * nu * u).exp() * root_product(u, &normalised, params)));
    }
    let r0 = ratios[0];
    let explicit_form_residual = ratios
        .iter()
        .map(|r| (r - r0).norm() / r0.norm())
        .fold(0.0, f64::max);

    Ok(BetheRoots {
        roots,
        normalised,
        exponent,
        winding: found.winding,
        root_residuals: found.residuals,
        explicit_form_residual,
    })
}

/// Lattice distance of `Σ u_j` from `−ν_1τ/2 + ν_3/2`.
pub fn sum_rule_residual(roots: &[C64], nu1: u8, nu3: u8, params: &ModelParams) -> f64 {
    let total: C64 = roots.iter().sum();
    let target = -params.tau * f64::from(nu1) / 2.0 + f64::from(nu3) / 2.0;
    lattice_distance(total - target, params.tau)
}

/// `max_j |LHS − RHS| / max(|LHS|, |RHS|)` for
/// `([u_j+2lη]/[u_j−2lη])^N = e^{4ν_1πiη} ∏_{k≠j} [u_j−u_k+2η]/[u_j−u_k−2η]`,
/// on the normalised representatives.
pub fn bethe_equation_residual(roots: &[C64], nu1: u8, params: &ModelParams) -> Result<f64> {
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[..i] {
            if lattice_distance(a - b, params.tau) < 1e-6 {
                return Err(QopError::Degenerate(format!(
                    "colliding Bethe roots {a} and {b}"
                )));
            }
        }
    }
    let two_l_eta = f64::from(params.two_l) * params.eta;
    let e2 = 2.0 * params.eta;
    // Roots sitting on a pole of either side (u_j ≡ ±2lη, or u_j − u_k ≡ ±2η)
    // make the ratio form ∞ = ∞; such singular solutions are reported, not scored.
    for (j, uj) in roots.iter().enumerate() {
        for s in [1.0, -1.0] {
            if lattice_distance(uj - s * two_l_eta, params.tau) < 1e-6 {
                return Err(QopError::Degenerate(format!(
                    "singular Bethe solution: root {uj} on ±2lη"
                )));
            }
        }
        for uk in &roots[j + 1..] {
            for s in [1.0, -1.0] {
                if lattice_distance(uj - uk - s * e2, params.tau) < 1e-6 {
                    return Err(QopError::Degenerate(format!(
                        "singular Bethe solution: roots {uj}, {uk} differ by ±2η"
                    )));
                }
            }
        }
    }
    let phase = (4.0 * PI * I * f64::from(nu1) * params.eta).exp();
    let mut worst: f64 = 0.0;
    for (j, uj) in roots.iter().enumerate() {
        let lhs = (params.bracket(uj + two_l_eta) / params.bracket(uj - two_l_eta))
            .powu(params.n_sites as u32);
        let mut rhs = phase;
        for (k, uk) in roots.iter().enumerate() {
            if k != j {
                rhs *= params.bracket(uj - uk + e2) / params.bracket(uj - uk - e2);
            }
        }
        worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()));
    }
    Ok(worst)
}

/// `Λ(u)` from the roots:
/// `(2[u+2lη])^N e^{−2ν_1πiη} ∏[u−u_j−2η]/[u−u_j] + (2[u−2lη])^N e^{2ν_1πiη} ∏[u−u_j+2η]/[u−u_j]`.
pub fn eigenvalue_formula(u: C64, roots: &[C64], nu1: u8, params: &ModelParams) -> C64 {
    let e2 = 2.0 * params.eta;
    let nu = f64::from(nu1);
    let base = root_product(u, roots, params);
    let lo = root_product(u - e2, roots, params) / base;
    let hi = root_product(u + e2, roots, params) / base;
    h_pm(u, -1, params) * (-2.0 * PI * I * nu * params.eta).exp() * lo
        + h_pm(u, 1, params) * (2.0 * PI * I * nu * params.eta).exp() * hi
}

/// `max |Λ(u) − Λ_formula(u)| / |Λ(u)|` over `(u, Λ(u))` samples clear of
/// the roots.
pub fn eigenvalue_reconstruction_residual(
    samples: &[(C64, C64)],
    roots: &[C64],
    nu1: u8,
    params: &ModelParams,
) -> f64 {
    samples
        .iter()
        .filter(|(u, _)| !near_root(*u, roots, params.tau))
        .map(|(u, lam)| {
            (lam - eigenvalue_formula(*u, roots, nu1, params)).norm()
                / lam.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// `Λ(u) q(u) = h₋ q(u−2η) + h₊ q(u+2η)` at one point.
pub fn tq_scalar_residual(
    u: C64,
    lambda: C64,
    q: &dyn Fn(C64) -> Result<C64>,
    params: &ModelParams,
) -> Result<f64> {
    let e2 = 2.0 * params.eta;
    let lhs = lambda * q(u)?;
    let a = h_pm(u, -1, params) * q(u - e2)?;
    let b = h_pm(u, 1, params) * q(u + e2)?;
    let scale = lhs
        .norm()
        .max(a.norm())
        .max(b.norm())
        .max(f64::MIN_POSITIVE);
    Ok((lhs - a - b).norm() / scale)
}

/// `(−1)^{ν_1} q(u) = e^{−Nlπi} q(u+1)` and
/// `(−1)^{ν_3} q(u) = e^{Nlπi(τ−1)+2Nlπiu} q(u+τ)` at one point.
pub fn nuq_residuals(
    u: C64,
    nu1: u8,
    nu3: u8,
    q: &dyn Fn(C64) -> Result<C64>,
    params: &ModelParams,
) -> Result<[f64; 2]> {
    let (f1, f3) = u_law_factors(u, params);
    let qu = q(u)?;
    let rel = |a: C64, b: C64| (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    Ok([
        rel(qu * sign(nu1), f1 * q(u + 1.0)?),
        rel(qu * sign(nu3), f3 * q(u + params.tau)?),
    ])
}

/// Sixteen points spread over the period cell.
pub fn default_u_grid(params: &ModelParams) -> Vec<C64> {
    let t = params.tau.im;
    (0..16)
        .map(|k| {
            let k = k as f64;
            C64::new(0.07 + 0.0571 * k, t * (0.09 + 0.0497 * k))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    pub probes: [C64; 2],
    pub gap: f64,
    pub grid: Vec<C64>,
    pub zero_search: ZeroSearchOptions,
}

impl SpectralOptions {
    pub fn for_params(params: &ModelParams) -> Self {
        let t = params.tau.im;
        SpectralOptions {
            probes: [C64::new(0.3137, 0.2113 * t), C64::new(0.6571, 0.4229 * t)],
            gap: DEGENERACY_GAP,
            grid: default_u_grid(params),
            zero_search: ZeroSearchOptions {
                points_per_edge: 256,
                ..Default::default()
            },
        }
    }
}

/// Per-eigenvector residuals.
#[derive(Clone, Debug)]
pub struct PairResiduals {
    /// Eigen-residuals of `T(u)` and `Q(u)` along the grid.
    pub t_eigen: f64,
    pub q_eigen: f64,
    pub tq: f64,
    pub nuq: [f64; 2],
    pub sum_rule: f64,
    /// `None` for colliding or singular root sets; see `bethe_skipped`.
    pub bethe_equation: Option<f64>,
    pub bethe_skipped: Option<String>,
    pub reconstruction: f64,
    /// Distance of `Λ(probe)` to the nearest eigenvalue of a direct
    /// eigen-decomposition of `T(probe)`, relative to the spectral radius.
    pub direct_eig: f64,
}

#[derive(Clone, Debug)]
pub struct PairAnalysis {
    pub pair: EigenPair,
    pub roots: Option<BetheRoots>,
    pub residuals: Option<PairResiduals>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SectorSummary {
    pub nu1: u8,
    pub nu3: u8,
    pub dimension: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct SpectrumAnalysis {
    pub sectors: Vec<SectorSummary>,
    pub pairs: Vec<PairAnalysis>,
    pub condition: f64,
}

fn analyse_pair(
    pair: &EigenPair,
    evaluator: &QEvaluator,
    grid_t: &[(C64, DenseMatrix)],
    direct: &[(DenseMatrix, Vec<C64>)],
    params: &ModelParams,
    opts: &SpectralOptions,
) -> Result<(BetheRoots, PairResiduals)> {
    let prepared = evaluator.prepare(pair);
    let q = |u: C64| evaluator.q(&prepared, u);
    let roots = bethe_roots(q, pair.nu1, params, &opts.grid, &opts.zero_search)?;

    let mut t_eigen: f64 = 0.0;
    let mut q_eigen: f64 = 0.0;
    let mut tq: f64 = 0.0;
    let mut nuq = [0.0_f64; 2];
    let mut samples = Vec::with_capacity(grid_t.len());
    for (u, t) in grid_t {
        t_eigen = t_eigen.max(pair.eigen_residual(t));
        let qm = evaluator.q_matrix(*u)?;
        q_eigen = q_eigen.max(pair.eigen_residual(&qm));
        let lam = pair.rayleigh(t);
        samples.push((*u, lam));
        tq = tq.max(tq_scalar_residual(*u, lam, &q, params)?);
        let r = nuq_residuals(*u, pair.nu1, pair.nu3, &q, params)?;
        nuq = [nuq[0].max(r[0]), nuq[1].max(r[1])];
    }
    let mut direct_eig: f64 = 0.0;
    for (t, values) in direct {
        let lam = pair.rayleigh(t);
        let radius = values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let nearest = values
            .iter()
            .map(|v| (v - lam).norm())
            .fold(f64::INFINITY, f64::min);
        direct_eig = direct_eig.max(nearest / radius);
    }
    let (bethe_equation, bethe_skipped) =
        match bethe_equation_residual(&roots.normalised, pair.nu1, params) {
            Ok(r) => (Some(r), None),
            Err(QopError::Degenerate(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        };
    let residuals = PairResiduals {
        t_eigen,
        q_eigen,
        tq,
        nuq,
        sum_rule: sum_rule_residual(&roots.normalised, pair.nu1, pair.nu3, params),
        bethe_equation,
        bethe_skipped,
        reconstruction: eigenvalue_reconstruction_residual(
            &samples,
            &roots.normalised,
            pair.nu1,
            params,
        ),
        direct_eig,
    };
    Ok((roots, residuals))
}

/// The generators and involutions in frame coordinates `R X R⁻¹`, site by
/// site, so that no large natural-basis chain operator is formed.
#[derive(Clone, Debug)]
pub struct FrameOperators {
    pub rep: RepMatrices,
    pub u1n: DenseMatrix,
    pub u3n: DenseMatrix,
}

pub fn frame_operators(
    rep: &RepMatrices,
    umats: &UMatrices,
    site_frame: &OrthonormalFrame,
    n_sites: usize,
) -> FrameOperators {
    let s = [0, 1, 2, 3].map(|a| site_frame.to_frame(&rep.s[a]));
    FrameOperators {
        rep: RepMatrices { s },
        u1n: tensor_power(&site_frame.to_frame(&umats.u1), n_sites),
        u3n: tensor_power(&site_frame.to_frame(&umats.u3), n_sites),
    }
}

/// Sectors, joint eigenvectors, Bethe roots and all per-eigenvector
/// residuals, computed in the Sklyanin frame (where `U_a` are unitary).
/// Failures of individual eigenvectors are recorded, not fatal.
pub fn analyse_spectrum(
    family: &QFamily,
    basis: &ThetaBasis,
    rep: &RepMatrices,
    umats: &UMatrices,
    site_frame: &OrthonormalFrame,
    opts: &SpectralOptions,
) -> Result<SpectrumAnalysis> {
    let params = basis.params();
    let ops = frame_operators(rep, umats, site_frame, params.n_sites);
    let sectors = sector_decomposition(&ops.u1n, &ops.u3n)?;
    let summaries = sectors
        .iter()
        .map(|s| SectorSummary {
            nu1: s.nu1,
            nu3: s.nu3,
            dimension: s.dimension,
            residual: sector_residual(s, &ops.u1n, &ops.u3n),
        })
        .collect();

    let chain_frame = site_frame.tensor_power(params.n_sites);
    let evaluator = QEvaluator::new(family, basis, &chain_frame);
    let [p1, p2] = opts.probes;
    let t1 = transfer_matrix(p1, &ops.rep, params)?;
    let t2 = transfer_matrix(p2, &ops.rep, params)?;
    let q1 = evaluator.q_matrix(p1)?;
    let pairs = joint_eigenbasis(&sectors, &[t1.clone(), t2.clone(), q1], opts.gap)?;

    let direct = [&t1, &t2]
        .into_iter()
        .map(|t| Ok((t.clone(), eig_decompose(t)?.values)))
        .collect::<Result<Vec<_>>>()?;
    let grid_t = opts
        .grid
        .iter()
        .map(|u| Ok((*u, transfer_matrix(*u, &ops.rep, params)?)))
        .collect::<Result<Vec<_>>>()?;

    let analyses = pairs
        .par_iter()
        .map(
            |pair| match analyse_pair(pair, &evaluator, &grid_t, &direct, params, opts) {
                Ok((roots, residuals)) => PairAnalysis {
                    pair: pair.clone(),
                    roots: Some(roots),
                    residuals: Some(residuals),
                    error: None,
                },
                Err(e) => PairAnalysis {
                    pair: pair.clone(),
                    roots: None,
                    residuals: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();
    Ok(SpectrumAnalysis {
        sectors: summaries,
        pairs: analyses,
        condition: family.condition,
    })
}
