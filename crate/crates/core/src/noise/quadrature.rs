//! One- and two-dimensional quadrature used by the Weyl integration formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    AdaptiveSimpson,
    /// Composite 20-point Gauss–Legendre with panel doubling.
    GaussLegendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::AdaptiveSimpson,
            abs_tol: 1e-10,
            max_subdivisions: 1 << 20,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    pub fn gauss_legendre(abs_tol: f64) -> Self {
        Self {
            rule: QuadratureRule::GaussLegendre,
            abs_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_subdivisions == 0 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs abs_tol > 0 and max_subdivisions > 0, got {} and {}",
                self.abs_tol, self.max_subdivisions
            )));
        }
        Ok(())
    }
}

const MAX_DEPTH: u32 = 60;
const INITIAL_PANELS: usize = 16;
const GL_ORDER: usize = 20;

/// `∫_a^b f`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    match spec.rule {
        QuadratureRule::AdaptiveSimpson => {
            let mut budget = spec.max_subdivisions;
            simpson(&|x| Ok(f(x)), a, b, spec.abs_tol, &mut budget)
        }
        QuadratureRule::GaussLegendre => gauss_legendre(&f, a, b, spec),
    }
}

/// `∫_{a0}^{b0} ∫_{a1}^{b1} f(x, y) dy dx`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    match spec.rule {
        QuadratureRule::AdaptiveSimpson => simpson_2d(&f, (a0, b0), (a1, b1), spec),
        QuadratureRule::GaussLegendre => gauss_legendre_2d(&f, (a0, b0), (a1, b1), spec),
    }
}

/// Tensor-product composite Simpson on a uniform grid, doubled per axis until
/// two successive estimates agree. Nested 1-D adaptivity costs the product
/// of both refinement depths and is far slower on smooth integrands.
fn simpson_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    spec: &QuadratureSpec,
) -> Result<f64> {
    let weight = |k: usize, m: usize| match k {
        0 => 1.0,
        k if k == m => 1.0,
        k if k % 2 == 1 => 4.0,
        _ => 2.0,
    };
    let grid = |m: usize| {
        let (h0, h1) = ((b0 - a0) / m as f64, (b1 - a1) / m as f64);
        let mut total = 0.0;
        for i in 0..=m {
            let x = a0 + i as f64 * h0;
            let wi = weight(i, m);
            let mut row = 0.0;
            for j in 0..=m {
                row += weight(j, m) * f(x, a1 + j as f64 * h1);
            }
            total += wi * row;
        }
        total * h0 * h1 / 9.0
    };
    let mut m = INITIAL_PANELS;
    let mut prev = grid(m);
    loop {
        m *= 2;
        if m * m > spec.max_subdivisions {
            return Err(Error::Quadrature(format!(
                "2-D Simpson did not reach {:e} within {} grid cells",
                spec.abs_tol, spec.max_subdivisions
            )));
        }
        let next = grid(m);
        if !next.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if (next - prev).abs() <= spec.abs_tol {
            return Ok(next);
        }
        prev = next;
    }
}

fn simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
    budget: &mut usize,
) -> Result<f64> {
    // A coarse initial partition keeps narrow peaks from being skipped.
    let h = (b - a) / INITIAL_PANELS as f64;
    let mut total = 0.0;
    let mut left = a;
    let mut fl = f(a)?;
    for k in 0..INITIAL_PANELS {
        let right = if k + 1 == INITIAL_PANELS {
            b
        } else {
            a + (k + 1) as f64 * h
        };
        let mid = 0.5 * (left + right);
        let fm = f(mid)?;
        let fr = f(right)?;
        let whole = (right - left) / 6.0 * (fl + 4.0 * fm + fr);
        total += simpson_step(
            f,
            left,
            right,
            fl,
            fm,
            fr,
            whole,
            tol / INITIAL_PANELS as f64,
            0,
            budget,
        )?;
        left = right;
        fl = fr;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if !diff.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integrand near x = {m}"
        )));
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "tolerance {tol:.1e} not reached at maximum depth near x = {m}"
        )));
    }
    if *budget == 0 {
        return Err(Error::Quadrature(
            "exceeded the maximum number of subdivisions".into(),
        ));
    }
    *budget -= 1;
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, budget)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, budget)?;
    Ok(l + r)
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on P_m.
fn gl_nodes(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn gl_composite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    panels: usize,
    x: &[f64],
    w: &[f64],
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(c + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    let (x, w) = gl_nodes(GL_ORDER);
    let mut panels = 2;
    let mut prev = gl_composite(f, a, b, panels, &x, &w);
    while panels * 2 <= spec.max_subdivisions {
        panels *= 2;
        let cur = gl_composite(f, a, b, panels, &x, &w);
        if !cur.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if (cur - prev).abs() <= spec.abs_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!(
        "Gauss–Legendre did not reach {:.1e} within {} panels",
        spec.abs_tol, spec.max_subdivisions
    )))
}

fn gauss_legendre_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    spec: &QuadratureSpec,
) -> Result<f64> {
    let (x, w) = gl_nodes(GL_ORDER);
    let eval = |panels: usize| {
        gl_composite(
            &|u| gl_composite(&|v| f(u, v), a1, b1, panels, &x, &w),
            a0,
            b0,
            panels,
            &x,
            &w,
        )
    };
    let mut panels = 2;
    let mut prev = eval(panels);
    // Panel count is per axis; the subdivision budget counts panels in the grid.
    while (panels * 2) * (panels * 2) <= spec.max_subdivisions {
        panels *= 2;
        let cur = eval(panels);
        if !cur.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if (cur - prev).abs() <= spec.abs_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!(
        "Gauss–Legendre did not reach {:.1e} within {} panels",
        spec.abs_tol, spec.max_subdivisions
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_trig_integrals() {
        for spec in [
            QuadratureSpec::default(),
            QuadratureSpec::gauss_legendre(1e-12),
        ] {
            let v = integrate(|x| x * x, 0.0, 3.0, &spec).unwrap();
            assert!((v - 9.0).abs() < 1e-10);
            let v = integrate(|x| x.sin(), 0.0, PI, &spec).unwrap();
            assert!((v - 2.0).abs() < 1e-10);
            let v = integrate(|x| (-50.0 * x * x).exp(), -3.0, 3.0, &spec).unwrap();
            assert!((v - (PI / 50.0).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn two_dimensional() {
        for spec in [
            QuadratureSpec::default(),
            QuadratureSpec::gauss_legendre(1e-12),
        ] {
            let v = integrate_2d(|x, y| x * y.cos(), (0.0, 1.0), (0.0, PI / 2.0), &spec).unwrap();
            assert!((v - 0.5).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn gauss_legendre_nodes_integrate_exactly() {
        let (x, w) = gl_nodes(GL_ORDER);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        let m38: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((m38 - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let spec = QuadratureSpec {
            rule: QuadratureRule::AdaptiveSimpson,
            abs_tol: 1e-14,
            max_subdivisions: 3,
        };
        let r = integrate(|x| (1.0 / (x + 1e-3)).sin(), 0.0, 1.0, &spec);
        assert!(matches!(r, Err(Error::Quadrature(_))));
        let bad = QuadratureSpec::with_tol(0.0);
        assert!(integrate(|x| x, 0.0, 1.0, &bad).is_err());
    }
}
