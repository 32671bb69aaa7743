//! Zeros of an analytic function inside a rectangle.
//!
//! The winding number of `f` along the boundary is accumulated from phase
//! increments between neighbouring samples; segments whose phase step
//! exceeds π/2 are bisected. The same pass accumulates the contour moments
//! `(1/2πi) ∮ (u−c)^k d log f`, whose power sums give starting points that
//! are then polished by damped Newton iteration.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{QopError, Result};
use crate::numerics::linalg::eig_decompose;
use crate::theta::{C64, I};

/// Axis-aligned rectangle `corner + [0,width] + i[0,height]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle {
    pub corner: C64,
    pub width: f64,
    pub height: f64,
}

impl Rectangle {
    pub fn new(corner: C64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) || !(height > 0.0) {
            return Err(QopError::InvalidParameter {
                field: "rectangle",
                reason: format!("width and height must be positive, got {width} x {height}"),
            });
        }
        Ok(Rectangle {
            corner,
            width,
            height,
        })
    }

    pub fn center(&self) -> C64 {
        self.corner + C64::new(0.5 * self.width, 0.5 * self.height)
    }

    pub fn contains(&self, z: C64) -> bool {
        let d = z - self.corner;
        d.re >= 0.0 && d.re <= self.width && d.im >= 0.0 && d.im <= self.height
    }

    /// Counter-clockwise vertices starting at the corner.
    pub fn vertices(&self) -> [C64; 4] {
        let c = self.corner;
        [
            c,
            c + self.width,
            c + C64::new(self.width, self.height),
            c + I * self.height,
        ]
    }

    fn shifted(&self, fraction: f64) -> Rectangle {
        Rectangle {
            corner: self.corner + C64::new(fraction * self.width, fraction * self.height),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ZeroSearchOptions {
    pub points_per_edge: usize,
    pub max_bisection_depth: usize,
    /// Relative bound on `|f(u_j)|` against the local scale of `f`.
    pub residual_tol: f64,
    pub newton_max_iter: usize,
    /// Rectangle shift (fraction of the edge lengths) used once when a zero
    /// sits on the boundary.
    pub boundary_shift: f64,
}

impl Default for ZeroSearchOptions {
    fn default() -> Self {
        ZeroSearchOptions {
            points_per_edge: 1024,
            max_bisection_depth: 24,
            residual_tol: 1e-8,
            newton_max_iter: 60,
            boundary_shift: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ZeroSearchResult {
    pub zeros: Vec<C64>,
    pub winding: i64,
    /// Rectangle actually used (after a possible boundary shift).
    pub rectangle: Rectangle,
    /// Largest phase step along the refined boundary discretisation.
    pub max_phase_step: f64,
    /// `|f(u_j)| / local scale` per zero.
    pub residuals: Vec<f64>,
}

struct BoundaryTrace {
    total_phase: f64,
    moments: Vec<C64>,
    max_phase_step: f64,
}

enum TraceOutcome {
    Done(BoundaryTrace),
    BoundaryZero(C64),
}

pub fn find_zeros_in_rectangle<F>(
    f: F,
    rect: Rectangle,
    expected_count: Option<usize>,
) -> Result<ZeroSearchResult>
where
    F: Fn(C64) -> C64,
{
    find_zeros_with_options(f, rect, expected_count, &ZeroSearchOptions::default())
}

pub fn find_zeros_with_options<F>(
    f: F,
    rect: Rectangle,
    expected_count: Option<usize>,
    opts: &ZeroSearchOptions,
) -> Result<ZeroSearchResult>
where
    F: Fn(C64) -> C64,
{
    let max_moment = expected_count.unwrap_or(8).max(1);
    let mut current = rect;
    let mut trace = None;
    for attempt in 0..2 {
        match trace_boundary(&f, &current, max_moment, opts) {
            TraceOutcome::Done(t) => {
                trace = Some(t);
                break;
            }
            TraceOutcome::BoundaryZero(z) => {
                if attempt == 0 {
                    current = current.shifted(opts.boundary_shift);
                } else {
                    return Err(QopError::ZeroSearch(format!(
                        "zero on the boundary near {z} persists after shifting the rectangle"
                    )));
                }
            }
        }
    }
    let mut trace = trace.expect("loop either traces or returns");

    let winding_f = trace.total_phase / (2.0 * PI);
    let winding = winding_f.round() as i64;
    if (winding_f - winding as f64).abs() > 0.05 || winding < 0 {
        return Err(QopError::ZeroSearch(format!(
            "non-integral winding number {winding_f:.6}"
        )));
    }
    if let Some(n) = expected_count {
        if winding as usize != n {
            return Err(QopError::ZeroSearch(format!(
                "winding number {winding} but {n} zeros expected"
            )));
        }
    }
    let count = winding as usize;
    if count > trace.moments.len() - 1 {
        trace = match trace_boundary(&f, &current, count, opts) {
            TraceOutcome::Done(t) => t,
            TraceOutcome::BoundaryZero(z) => {
                return Err(QopError::ZeroSearch(format!("boundary zero near {z}")));
            }
        };
    }

    let center = current.center();
    let power_sums: Vec<C64> = (1..=count)
        .map(|k| trace.moments[k] / (2.0 * PI * I))
        .collect();
    let starts: Vec<C64> = roots_from_power_sums(&power_sums)?
        .into_iter()
        .map(|r| r + center)
        .collect();

    let mut zeros = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for s in starts {
        let z = newton_polish(&f, s, opts.newton_max_iter);
        let scale = local_scale(&f, z, 0.05 * current.width.min(current.height));
        let res = if scale > 0.0 {
            f(z).norm() / scale
        } else {
            f(z).norm()
        };
        if !current.contains(z) {
            return Err(QopError::ZeroSearch(format!(
                "refined zero {z} left the rectangle (start {s}); winding {winding}"
            )));
        }
        if res > opts.residual_tol {
            return Err(QopError::ZeroSearch(format!(
                "zero {z} not resolved: relative residual {res:.3e}"
            )));
        }
        zeros.push(z);
        residuals.push(res);
    }
    for i in 0..zeros.len() {
        for j in 0..i {
            if (zeros[i] - zeros[j]).norm() < 1e-7 {
                return Err(QopError::ZeroSearch(format!(
                    "refined zeros {} and {} coincide; winding {winding}",
                    zeros[i], zeros[j]
                )));
            }
        }
    }
    Ok(ZeroSearchResult {
        zeros,
        winding,
        rectangle: current,
        max_phase_step: trace.max_phase_step,
        residuals,
    })
}

fn trace_boundary<F>(
    f: &F,
    rect: &Rectangle,
    max_moment: usize,
    opts: &ZeroSearchOptions,
) -> TraceOutcome
where
    F: Fn(C64) -> C64,
{
    let verts = rect.vertices();
    let center = rect.center();
    let n = opts.points_per_edge.max(4);

    let mut samples = Vec::with_capacity(4 * n + 1);
    for e in 0..4 {
        let a = verts[e];
        let b = verts[(e + 1) % 4];
        for i in 0..n {
            let z = a + (b - a) * (i as f64 / n as f64);
            samples.push((z, f(z)));
        }
    }
    samples.push(samples[0]);
    let scale = samples.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    if let Some((z, _)) = samples
        .iter()
        .find(|(_, v)| v.norm() <= 1e-12 * scale || !v.norm().is_finite())
    {
        return TraceOutcome::BoundaryZero(*z);
    }

    let mut trace = BoundaryTrace {
        total_phase: 0.0,
        moments: vec![C64::new(0.0, 0.0); max_moment + 1],
        max_phase_step: 0.0,
    };
    for w in samples.windows(2) {
        let (za, fa) = w[0];
        let (zb, fb) = w[1];
        if let Some(z) = accumulate_segment(
            f,
            za,
            fa,
            zb,
            fb,
            center,
            scale,
            0,
            opts.max_bisection_depth,
            &mut trace,
        ) {
            return TraceOutcome::BoundaryZero(z);
        }
    }
    TraceOutcome::Done(trace)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_segment<F>(
    f: &F,
    za: C64,
    fa: C64,
    zb: C64,
    fb: C64,
    center: C64,
    scale: f64,
    depth: usize,
    max_depth: usize,
    trace: &mut BoundaryTrace,
) -> Option<C64>
where
    F: Fn(C64) -> C64,
{
    let dlog = (fb / fa).ln();
    if dlog.im.abs() > PI / 2.0 {
        if depth >= max_depth {
            return Some(0.5 * (za + zb));
        }
        let zm = 0.5 * (za + zb);
        let fm = f(zm);
        if fm.norm() <= 1e-12 * scale {
            return Some(zm);
        }
        return accumulate_segment(
            f,
            za,
            fa,
            zm,
            fm,
            center,
            scale,
            depth + 1,
            max_depth,
            trace,
        )
        .or_else(|| {
            accumulate_segment(
                f,
                zm,
                fm,
                zb,
                fb,
                center,
                scale,
                depth + 1,
                max_depth,
                trace,
            )
        });
    }
    trace.total_phase += dlog.im;
    trace.max_phase_step = trace.max_phase_step.max(dlog.im.abs());
    let mid = 0.5 * (za + zb) - center;
    let mut p = C64::new(1.0, 0.0);
    for m in trace.moments.iter_mut() {
        *m += p * dlog;
        p *= mid;
    }
    None
}

/// Roots of the monic polynomial whose roots have the given power sums.
fn roots_from_power_sums(p: &[C64]) -> Result<Vec<C64>> {
    let n = p.len();
    if n == 0 {
        return Ok(vec![]);
    }
    // Newton's identities: k e_k = Σ_{i=1}^{k} (−1)^{i−1} e_{k−i} p_i.
    let mut e = vec![C64::new(1.0, 0.0); n + 1];
    for k in 1..=n {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * p[i - 1] * sign;
        }
        e[k] = acc / k as f64;
    }
    // z^n − e1 z^{n−1} + e2 z^{n−2} − … ; companion matrix.
    let mut comp = DMatrix::<C64>::zeros(n, n);
    for k in 1..=n {
        let coeff = if k % 2 == 1 { e[k] } else { -e[k] };
        comp[(0, k - 1)] = coeff;
    }
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    Ok(eig_decompose(&comp)?.values)
}

fn newton_polish<F>(f: &F, start: C64, max_iter: usize) -> C64
where
    F: Fn(C64) -> C64,
{
    let mut u = start;
    let mut fu = f(u);
    for _ in 0..max_iter {
        let h = 1e-6 * (1.0 + u.norm());
        let df = (f(u + h) - f(u - h)) / (2.0 * h);
        if df.norm() == 0.0 || !df.norm().is_finite() {
            break;
        }
        let step = fu / df;
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = u - step * damping;
            let fc = f(cand);
            if fc.norm() < fu.norm() || fc.norm() == 0.0 {
                u = cand;
                fu = fc;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted || (step * damping).norm() < 1e-15 * (1.0 + u.norm()) {
            break;
        }
    }
    u
}

fn local_scale<F>(f: &F, z: C64, radius: f64) -> f64
where
    F: Fn(C64) -> C64,
{
    (0..8)
        .map(|k| {
            let w = z + C64::from_polar(radius, 2.0 * PI * k as f64 / 8.0);
            f(w).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theta::ModelParams;

    #[test]
    fn theta_zero_in_shifted_cell() {
        let p = ModelParams::new(1.0, 0.15, 1, 2).unwrap();
        let rect = Rectangle::new(C64::new(-0.5, -0.5), 1.0, 1.0).unwrap();
        let r = find_zeros_in_rectangle(|u| p.bracket(u), rect, None).unwrap();
        assert_eq!(r.winding, 1);
        assert!(r.zeros[0].norm() < 1e-12);
    }

    #[test]
    fn planted_theta_zeros() {
        let p = ModelParams::new(1.0, 0.15, 1, 2).unwrap();
        let a = C64::new(0.3, 0.0) + 0.6 * p.tau;
        let b = C64::new(0.7, 0.0) + 0.2 * p.tau;
        let rect = Rectangle::new(C64::new(1e-3, 1e-3), 1.0, 1.0).unwrap();
        let r = find_zeros_in_rectangle(|u| p.bracket(u - a) * p.bracket(u - b), rect, Some(2))
            .unwrap();
        let mut found = r.zeros.clone();
        found.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((found[0] - a).norm() < 1e-10);
        assert!((found[1] - b).norm() < 1e-10);
        assert!(r.max_phase_step <= PI / 2.0);
    }

    #[test]
    fn polynomial_roots() {
        let roots = [C64::new(0.2, 0.3), C64::new(0.6, 0.1), C64::new(0.45, 0.8)];
        let rect = Rectangle::new(C64::new(0.0, 0.0), 1.0, 1.0).unwrap();
        let r =
            find_zeros_in_rectangle(|u| roots.iter().map(|c| u - c).product(), rect, None).unwrap();
        assert_eq!(r.winding, 3);
        for c in roots {
            assert!(r.zeros.iter().any(|z| (z - c).norm() < 1e-10));
        }
    }

    #[test]
    fn boundary_zero_is_dodged() {
        let c = C64::new(0.5, 0.0);
        let rect = Rectangle::new(C64::new(0.0, 0.0), 1.0, 1.0).unwrap();
        let r = find_zeros_in_rectangle(|u| u - c, rect, None).unwrap();
        // the shifted rectangle no longer contains the zero
        assert_eq!(r.winding, 0);
        assert_ne!(r.rectangle, rect);
    }

    #[test]
    fn expected_count_mismatch_is_an_error() {
        let rect = Rectangle::new(C64::new(0.0, 0.0), 1.0, 1.0).unwrap();
        let r = find_zeros_in_rectangle(|u| u - C64::new(0.5, 0.5), rect, Some(2));
        assert!(matches!(r, Err(QopError::ZeroSearch(_))));
    }
}
