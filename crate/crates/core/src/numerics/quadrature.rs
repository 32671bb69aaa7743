use rayon::prelude::*;

use crate::error::{QopError, Result};
use crate::theta::C64;

/// Integrand values above this multiple of the grid median are treated as a
/// pole hit.
const DYNAMIC_RANGE_CAP: f64 = 1e12;

/// Uniform-grid trapezoid rule over `[0, x_period] × [0, y_period]` for a
/// doubly periodic integrand.
pub fn trapezoid_2d<F>(f: F, nx: usize, ny: usize, x_period: f64, y_period: f64) -> Result<C64>
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    trapezoid_2d_offset(f, nx, ny, x_period, y_period, (0.0, 0.0))
}

/// As [`trapezoid_2d`] with the grid shifted by `offset` (in units of the
/// grid step). Rows are summed in parallel and combined in order, so the
/// result does not depend on the worker count.
pub fn trapezoid_2d_offset<F>(
    f: F,
    nx: usize,
    ny: usize,
    x_period: f64,
    y_period: f64,
    offset: (f64, f64),
) -> Result<C64>
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    if nx == 0 || ny == 0 {
        return Err(QopError::InvalidParameter {
            field: "grid",
            reason: "grid sizes must be positive".into(),
        });
    }
    let hx = x_period / nx as f64;
    let hy = y_period / ny as f64;
    let rows: Vec<Vec<(f64, f64, C64)>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = (j as f64 + offset.1) * hy;
            (0..nx)
                .map(|i| {
                    let x = (i as f64 + offset.0) * hx;
                    (x, y, f(x, y))
                })
                .collect()
        })
        .collect();

    let mut mags: Vec<f64> = rows.iter().flatten().map(|(_, _, v)| v.norm()).collect();
    for (x, y, v) in rows.iter().flatten() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(QopError::SingularIntegrand { x: *x, y: *y });
        }
    }
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = mags[mags.len() / 2];
    if median > 0.0 {
        for (x, y, v) in rows.iter().flatten() {
            if v.norm() > DYNAMIC_RANGE_CAP * median {
                return Err(QopError::SingularIntegrand { x: *x, y: *y });
            }
        }
    }

    let mut total = C64::new(0.0, 0.0);
    for row in &rows {
        let mut acc = C64::new(0.0, 0.0);
        for (_, _, v) in row {
            acc += v;
        }
        total += acc;
    }
    Ok(total * hx * hy)
}

/// Vector-valued [`trapezoid_2d_offset`]: every grid point yields `len`
/// values, all integrated in one sweep. Integrand errors abort the sweep;
/// the pole check uses the Euclidean norm of each sample.
pub fn trapezoid_2d_vector<F>(
    f: F,
    len: usize,
    nx: usize,
    ny: usize,
    periods: (f64, f64),
    offset: (f64, f64),
) -> Result<Vec<C64>>
where
    F: Fn(f64, f64) -> Result<Vec<C64>> + Sync,
{
    if nx == 0 || ny == 0 {
        return Err(QopError::InvalidParameter {
            field: "grid",
            reason: "grid sizes must be positive".into(),
        });
    }
    let hx = periods.0 / nx as f64;
    let hy = periods.1 / ny as f64;
    let rows: Vec<(Vec<C64>, Vec<(f64, f64, f64)>)> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = (j as f64 + offset.1) * hy;
            let mut acc = vec![C64::new(0.0, 0.0); len];
            let mut mags = Vec::with_capacity(nx);
            for i in 0..nx {
                let x = (i as f64 + offset.0) * hx;
                let v = f(x, y)?;
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(QopError::SingularIntegrand { x, y });
                }
                mags.push((x, y, norm));
                for (a, c) in acc.iter_mut().zip(v) {
                    *a += c;
                }
            }
            Ok((acc, mags))
        })
        .collect::<Result<_>>()?;

    let mut norms: Vec<f64> = rows
        .iter()
        .flat_map(|(_, m)| m.iter().map(|t| t.2))
        .collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = norms[norms.len() / 2];
    if median > 0.0 {
        if let Some(&(x, y, _)) = rows
            .iter()
            .flat_map(|(_, m)| m.iter())
            .find(|t| t.2 > DYNAMIC_RANGE_CAP * median)
        {
            return Err(QopError::SingularIntegrand { x, y });
        }
    }
    let mut total = vec![C64::new(0.0, 0.0); len];
    for (acc, _) in &rows {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    Ok(total.into_iter().map(|t| t * hx * hy).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_gives_area() {
        let v = trapezoid_2d(|_, _| C64::new(1.0, 0.0), 16, 8, 1.0, 0.7).unwrap();
        assert!((v - C64::new(0.7, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn periodic_exponential_integrates_to_zero() {
        let v = trapezoid_2d(|x, _| C64::new(0.0, 2.0 * PI * x).exp(), 32, 32, 1.0, 1.0).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn spectral_accuracy_on_smooth_periodic() {
        // ∫∫ exp(cos 2πx + cos 2πy) = I0(1)², I0(1) = 1.2660658777520082
        let exact = 1.266_065_877_752_008_4_f64.powi(2);
        let v = trapezoid_2d(
            |x, y| C64::new(((2.0 * PI * x).cos() + (2.0 * PI * y).cos()).exp(), 0.0),
            32,
            32,
            1.0,
            1.0,
        )
        .unwrap();
        assert!((v.re - exact).abs() < 1e-14);
    }

    #[test]
    fn vector_rule_matches_scalar_rule() {
        let f = |x: f64, y: f64| C64::new(0.0, 2.0 * PI * (x + 2.0 * y)).exp() + x * y;
        let g = |x: f64, _y: f64| C64::new((2.0 * PI * x).cos().exp(), 0.0);
        let v = trapezoid_2d_vector(
            |x, y| Ok(vec![f(x, y), g(x, y)]),
            2,
            24,
            20,
            (1.0, 0.8),
            (0.5, 0.5),
        )
        .unwrap();
        let a = trapezoid_2d_offset(f, 24, 20, 1.0, 0.8, (0.5, 0.5)).unwrap();
        let b = trapezoid_2d_offset(g, 24, 20, 1.0, 0.8, (0.5, 0.5)).unwrap();
        assert!((v[0] - a).norm() < 1e-14 && (v[1] - b).norm() < 1e-14);
    }

    #[test]
    fn pole_is_reported() {
        let r = trapezoid_2d(
            |x, y| {
                if x == 0.5 && y == 0.5 {
                    C64::new(f64::INFINITY, 0.0)
                } else {
                    C64::new(1.0, 0.0)
                }
            },
            4,
            4,
            1.0,
            1.0,
        );
        assert!(matches!(r, Err(QopError::SingularIntegrand { .. })));
    }
}
