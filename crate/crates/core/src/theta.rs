//! Jacobi theta functions with characteristics and the bracket products
//! `[z]_k = [z][z+2η]⋯[z+2(k−1)η]` built on `[z] = θ_11(z, τ)`.
//!
//! Series convention:
//!
//! ```text
//! θ_ab(z, τ) = Σ_n exp(πi(a/2+n)²τ + 2πi(a/2+n)(b/2+z))
//! ```
//!
//! so that `θ_11(z+1) = −θ_11(z)` and `θ_11(z+τ) = −e^{−πiτ−2πiz} θ_11(z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QopError, Result};

pub type C64 = Complex64;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Theta characteristic `(a, b)` with `a, b ∈ {0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ThetaChar {
    pub a: u8,
    pub b: u8,
}

impl ThetaChar {
    pub const T00: ThetaChar = ThetaChar { a: 0, b: 0 };
    pub const T01: ThetaChar = ThetaChar { a: 0, b: 1 };
    pub const T10: ThetaChar = ThetaChar { a: 1, b: 0 };
    pub const T11: ThetaChar = ThetaChar { a: 1, b: 1 };

    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a > 1 || b > 1 {
            return Err(QopError::InvalidParameter {
                field: "theta_char",
                reason: format!("characteristic ({a}, {b}) outside {{0,1}}²"),
            });
        }
        Ok(ThetaChar { a, b })
    }
}

/// Smallest `M ≥ 20` with `exp(−π Im(τ) (M−1)²) < 1e−18`.
pub fn default_truncation(tau_im: f64) -> usize {
    let needed = (18.0 * std::f64::consts::LN_10 / (PI * tau_im)).sqrt() + 1.0;
    (needed.ceil() as usize + 1).max(20)
}

/// Truncated theta series. The summation window is centred on the dominant
/// term so that `trunc` controls the relative tail for any `Im z`.
pub fn theta_ab(ch: ThetaChar, z: C64, tau: C64, trunc: usize) -> Result<C64> {
    if tau.im <= 0.0 || !tau.im.is_finite() {
        return Err(QopError::NonConvergentTheta(tau.im));
    }
    Ok(theta_series(ch, z, tau, trunc))
}

pub(crate) fn theta_series(ch: ThetaChar, z: C64, tau: C64, trunc: usize) -> C64 {
    let half_a = 0.5 * f64::from(ch.a);
    let w = z + 0.5 * f64::from(ch.b);
    // |term(k)| ∝ exp(−π Im(τ) k² − 2π k Im(w)), peaked at k = −Im(w)/Im(τ).
    let n_c = (-w.im / tau.im - half_a).round();
    let k0 = half_a + n_c;
    let center = (I * PI * (tau * k0 * k0 + 2.0 * k0 * w)).exp();

    let e_w = (2.0 * PI * I * w).exp();
    let e_w_inv = (-2.0 * PI * I * w).exp();
    let q2 = (2.0 * PI * I * tau).exp();

    let mut sum = center;
    let mut term = center;
    let mut ratio = (I * PI * tau * (2.0 * k0 + 1.0)).exp() * e_w;
    for _ in 0..trunc {
        term *= ratio;
        sum += term;
        ratio *= q2;
    }
    term = center;
    ratio = (I * PI * tau * (1.0 - 2.0 * k0)).exp() * e_w_inv;
    for _ in 0..trunc {
        term *= ratio;
        sum += term;
        ratio *= q2;
    }
    sum
}

/// Model parameters `(τ, η, l, N)` plus numerical settings.
///
/// The spin is stored as the integer `2l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub tau: C64,
    pub eta: f64,
    pub two_l: u32,
    pub n_sites: usize,
    pub series_truncation: usize,
    pub tol: f64,
}

impl ModelParams {
    pub fn new(tau_im: f64, eta: f64, two_l: u32, n_sites: usize) -> Result<Self> {
        let params = ModelParams {
            tau: C64::new(0.0, tau_im),
            eta,
            two_l,
            n_sites,
            series_truncation: if tau_im > 0.0 {
                default_truncation(tau_im)
            } else {
                20
            },
            tol: 1e-9,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.re != 0.0 || !(self.tau.im > 0.0) || !self.tau.im.is_finite() {
            return Err(QopError::InvalidParameter {
                field: "tau",
                reason: format!(
                    "tau must be purely imaginary with positive imaginary part, got {}",
                    self.tau
                ),
            });
        }
        if self.two_l == 0 {
            return Err(QopError::InvalidParameter {
                field: "l",
                reason: "spin must be a positive half-integer".into(),
            });
        }
        let bound = 1.0 / (2.0 * f64::from(self.two_l + 1));
        if !self.eta.is_finite() || self.eta.abs() > bound {
            return Err(QopError::InvalidParameter {
                field: "eta",
                reason: format!(
                    "|eta| must not exceed 1/(2(2l+1)) = {bound}, got {}",
                    self.eta
                ),
            });
        }
        if self.n_sites == 0 || self.n_sites % 2 != 0 {
            return Err(QopError::InvalidParameter {
                field: "n",
                reason: format!(
                    "the number of sites must be a positive even integer (odd lattices are not supported), got {}",
                    self.n_sites
                ),
            });
        }
        if (self.n_sites * self.two_l as usize) % 2 != 0 {
            return Err(QopError::InvalidParameter {
                field: "n",
                reason: "N·l must be an integer".into(),
            });
        }
        if self.series_truncation == 0 {
            return Err(QopError::InvalidParameter {
                field: "series_truncation",
                reason: "must be positive".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(QopError::InvalidParameter {
                field: "tol",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.two_l) / 2.0
    }

    /// `2l + 1`.
    pub fn site_dim(&self) -> usize {
        self.two_l as usize + 1
    }

    /// `(2l+1)^N`.
    pub fn chain_dim(&self) -> usize {
        self.site_dim().pow(self.n_sites as u32)
    }

    /// `N·l`, the number of Bethe roots.
    pub fn total_spin(&self) -> usize {
        self.n_sites * self.two_l as usize / 2
    }

    pub fn theta(&self, ch: ThetaChar, z: C64) -> C64 {
        theta_series(ch, z, self.tau, self.series_truncation)
    }

    /// Theta function at modulus `τ/2`, used by the gauge matrices.
    pub fn theta_half(&self, ch: ThetaChar, z: C64) -> C64 {
        let half = self.tau * 0.5;
        theta_series(
            ch,
            z,
            half,
            default_truncation(half.im).max(self.series_truncation),
        )
    }

    /// Theta function at modulus `2τ`.
    pub fn theta_double(&self, ch: ThetaChar, z: C64) -> C64 {
        theta_series(ch, z, self.tau * 2.0, self.series_truncation)
    }

    /// `[z] = θ_11(z, τ)`.
    pub fn bracket(&self, z: C64) -> C64 {
        self.theta(ThetaChar::T11, z)
    }

    pub fn eta_c(&self) -> C64 {
        C64::new(self.eta, 0.0)
    }
}

/// `[z]_k = ∏_{j<k} θ_11(z + 2jη)`; `[z]_0 = 1`.
pub fn bracket_k(z: C64, k: usize, params: &ModelParams) -> C64 {
    (0..k).fold(C64::new(1.0, 0.0), |acc, j| {
        acc * params.bracket(z + 2.0 * j as f64 * params.eta)
    })
}

/// `[z;a]_k = [z+a]_k [−z+a]_k`.
pub fn za_bracket_k(z: C64, a: C64, k: usize, params: &ModelParams) -> C64 {
    bracket_k(z + a, k, params) * bracket_k(-z + a, k, params)
}

/// Distance from `z` to the nearest point of `Z + τZ` (τ purely imaginary).
pub fn lattice_distance(z: C64, tau: C64) -> f64 {
    let m = (z.im / tau.im).round();
    let w = z - tau * m;
    (w - w.re.round()).norm()
}

/// Worst residuals of `[z+1] = −[z]`, `[z+τ] = −e^{−πiτ−2πiz}[z]` and
/// `[−z] = −[z]` over seeded points of the fundamental cell, each relative
/// to `max(1, |[z]|)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ThetaLawResiduals {
    pub unit_shift: f64,
    pub tau_shift: f64,
    pub oddness: f64,
}

pub fn theta_law_residuals(params: &ModelParams, seed: u64, points: usize) -> ThetaLawResiduals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = ThetaLawResiduals::default();
    for _ in 0..points {
        let z = C64::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..params.tau.im));
        let t = params.bracket(z);
        let scale = t.norm().max(1.0);
        r.unit_shift = r
            .unit_shift
            .max((params.bracket(z + 1.0) + t).norm() / scale);
        // multiplied through by e^{πiτ+2πiz}
        let shifted =
            (I * PI * params.tau + 2.0 * PI * I * z).exp() * params.bracket(z + params.tau) + t;
        r.tau_shift = r.tau_shift.max(shifted.norm() / scale);
        r.oddness = r.oddness.max((params.bracket(-z) + t).norm() / scale);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_sum(ch: ThetaChar, z: C64, tau: C64, trunc: i64) -> C64 {
        (-trunc..=trunc)
            .map(|n| {
                let k = 0.5 * f64::from(ch.a) + n as f64;
                (I * PI * (tau * k * k + 2.0 * k * (0.5 * f64::from(ch.b) + z))).exp()
            })
            .sum()
    }

    fn p1() -> ModelParams {
        ModelParams::new(1.0, 0.15, 1, 2).unwrap()
    }

    #[test]
    fn theta11_vanishes_at_origin() {
        let v = theta_ab(ThetaChar::T11, C64::new(0.0, 0.0), C64::new(0.0, 1.0), 20).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn theta11_antiperiodic_under_unit_shift() {
        let tau = C64::new(0.0, 0.9);
        let z = C64::new(0.13, 0.21);
        let a = theta_ab(ThetaChar::T11, z + 1.0, tau, 20).unwrap();
        let b = theta_ab(ThetaChar::T11, z, tau, 20).unwrap();
        assert!((a + b).norm() < 1e-14 * b.norm());
    }

    #[test]
    fn series_self_convergence() {
        let tau = C64::new(0.0, 0.9);
        let z = C64::new(0.13, 0.21);
        let a = theta_ab(ThetaChar::T11, z, tau, 20).unwrap();
        let b = theta_ab(ThetaChar::T11, z, tau, 40).unwrap();
        assert!((a - b).norm() < 1e-14 * b.norm());
    }

    #[test]
    fn recurrence_matches_direct_summation() {
        let tau = C64::new(0.0, 0.8);
        for ch in [
            ThetaChar::T00,
            ThetaChar::T01,
            ThetaChar::T10,
            ThetaChar::T11,
        ] {
            for z in [
                C64::new(0.3, -0.2),
                C64::new(-0.41, 0.7),
                C64::new(0.05, 0.0),
            ] {
                let a = theta_ab(ch, z, tau, 25).unwrap();
                let b = direct_sum(ch, z, tau, 40);
                assert!((a - b).norm() < 1e-13 * b.norm().max(1.0), "{ch:?} {z}");
            }
        }
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(matches!(
            theta_ab(ThetaChar::T00, C64::new(0.1, 0.0), C64::new(0.0, -1.0), 20),
            Err(QopError::NonConvergentTheta(_))
        ));
    }

    #[test]
    fn quasi_periodicity_and_oddness() {
        let p = p1();
        for seed in [11, 12] {
            let r = theta_law_residuals(&p, seed, 200);
            assert!(
                r.unit_shift < 1e-12 && r.tau_shift < 1e-12 && r.oddness < 1e-12,
                "{r:?}"
            );
        }
        let q = ModelParams::new(0.9, 0.07, 3, 2).unwrap();
        let r = theta_law_residuals(&q, 1, 200);
        assert!(
            r.unit_shift < 1e-12 && r.tau_shift < 1e-12 && r.oddness < 1e-12,
            "{r:?}"
        );
    }

    #[test]
    fn zero_lattice() {
        let p = p1();
        for m in -2..=2 {
            for n in -2..=2 {
                let z = C64::new(m as f64, 0.0) + p.tau * n as f64;
                let scale = p.bracket(z + 0.25).norm().max(1.0);
                assert!(p.bracket(z).norm() < 1e-13 * scale, "{m} {n}");
            }
        }
    }

    #[test]
    fn half_period_shift_identities() {
        let p = p1();
        let z = C64::new(0.17, 0.09);
        // b-shift: θ_a1(z) = θ_a0(z + 1/2)
        let lhs = p.theta(ThetaChar::T01, z);
        let rhs = p.theta(ThetaChar::T00, z + 0.5);
        assert!((lhs - rhs).norm() < 1e-13);
        // a-shift: θ_1b(z) = e^{πiτ/4 + πi(z + b/2)} θ_0b(z + τ/2)
        let lhs = p.theta(ThetaChar::T10, z);
        let rhs =
            (I * PI * p.tau / 4.0 + I * PI * z).exp() * p.theta(ThetaChar::T00, z + p.tau / 2.0);
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn bracket_products() {
        let p = p1();
        let z = C64::new(0.2, 0.1);
        assert_eq!(bracket_k(z, 0, &p), C64::new(1.0, 0.0));
        assert!((bracket_k(z, 1, &p) - p.bracket(z)).norm() < 1e-15);
        let explicit = theta_ab(ThetaChar::T11, z, p.tau, 30).unwrap()
            * theta_ab(ThetaChar::T11, z + 0.3, p.tau, 30).unwrap()
            * theta_ab(ThetaChar::T11, z + 0.6, p.tau, 30).unwrap();
        assert!((bracket_k(z, 3, &p) - explicit).norm() < 1e-14 * explicit.norm());
    }

    #[test]
    fn za_brackets() {
        let p = p1();
        let z = C64::new(0.3, 0.0);
        let a = C64::new(0.7, 0.0);
        let one = za_bracket_k(z, a, 1, &p);
        assert!((one - p.bracket(z + a) * p.bracket(-z + a)).norm() < 1e-15);
        assert!((za_bracket_k(-z, a, 2, &p) - za_bracket_k(z, a, 2, &p)).norm() < 1e-14);
        let four =
            p.bracket(z + a) * p.bracket(z + a + 0.3) * p.bracket(-z + a) * p.bracket(-z + a + 0.3);
        assert!((za_bracket_k(z, a, 2, &p) - four).norm() < 1e-14 * four.norm());
    }

    #[test]
    fn lattice_distance_reduces_modulo_periods() {
        let tau = C64::new(0.0, 0.9);
        let z = C64::new(0.1, 0.05);
        let shifted = z + 3.0 + tau * -2.0;
        assert!((lattice_distance(shifted, tau) - z.norm()).abs() < 1e-14);
        assert!(lattice_distance(tau * 4.0 - 1.0, tau) < 1e-14);
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(1.0, 0.15, 1, 3).is_err());
        assert!(ModelParams::new(-1.0, 0.15, 1, 2).is_err());
        assert!(ModelParams::new(1.0, 0.3, 1, 2).is_err());
        assert!(ModelParams::new(1.0, 0.15, 0, 2).is_err());
        let p = ModelParams::new(1.0, 0.11, 2, 2).unwrap();
        assert_eq!(p.site_dim(), 3);
        assert_eq!(p.chain_dim(), 9);
        assert_eq!(p.total_spin(), 2);
    }
}
