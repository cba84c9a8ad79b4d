//! Isotropic noise models on SO(n): densities with respect to the normalized
//! Haar measure, score maps, Fisher information weights and samplers.

mod bessel;
mod quadrature;
mod sampler;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::songeom::{Rotation, TangentVector};

pub use bessel::{bessel_i, bessel_i_scaled, ln_bessel_i};
pub use quadrature::{integrate, integrate_2d, QuadratureRule, QuadratureSpec};
pub use sampler::{sample, sample_uniform, Sampler, MAX_PROPOSALS};

/// Noise distribution family, as it appears in graph files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    Langevin { kappa: f64 },
    LangevinOutlier { kappa: f64, p: f64 },
}

/// A noise distribution on SO(n).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    n: usize,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(n));
        }
        match kind {
            NoiseKind::Uniform => {}
            NoiseKind::Langevin { kappa } => check_kappa(kappa)?,
            NoiseKind::LangevinOutlier { kappa, p } => {
                check_kappa(kappa)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!(
                        "inlier probability must lie in [0, 1], got {p}"
                    )));
                }
            }
        }
        Ok(Self { kind, n })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(NoiseKind::Uniform, n)
    }

    pub fn langevin(n: usize, kappa: f64) -> Result<Self> {
        Self::new(NoiseKind::Langevin { kappa }, n)
    }

    pub fn langevin_outlier(n: usize, kappa: f64, p: f64) -> Result<Self> {
        Self::new(NoiseKind::LangevinOutlier { kappa, p }, n)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Uniform => None,
            NoiseKind::Langevin { kappa } | NoiseKind::LangevinOutlier { kappa, .. } => Some(kappa),
        }
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidModel(format!(
            "concentration must be finite and >= 0, got {kappa}"
        )));
    }
    Ok(())
}

/// Integrates a class function given on the maximal torus. `g` receives the
/// `⌊n/2⌋` block angles.
pub fn weyl_integrate_angles<F: Fn(&[f64]) -> f64>(
    n: usize,
    g: F,
    spec: &QuadratureSpec,
) -> Result<f64> {
    match n {
        2 => Ok(integrate(|t| g(&[t]), -PI, PI, spec)? / (2.0 * PI)),
        3 => {
            // The integrand is even in θ for n = 3.
            let v = integrate(|t| (1.0 - t.cos()) * g(&[t]), 0.0, PI, spec)?;
            Ok(v / PI)
        }
        4 => {
            let v = integrate_2d(
                |a, b| 4.0 * (1.0 - (a - b).cos()) * (1.0 - (a + b).cos()) * g(&[a, b]),
                (-PI, PI),
                (-PI, PI),
                spec,
            )?;
            Ok(v / (16.0 * PI * PI))
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// `∫_{SO(n)} g dμ` for a class function `g`, via Weyl's integration formula
/// (n = 2, 3, 4).
pub fn weyl_integrate<F: Fn(&Rotation) -> f64>(
    n: usize,
    g: F,
    spec: &QuadratureSpec,
) -> Result<f64> {
    weyl_integrate_angles(n, |angles| g(&Rotation::torus(n, angles)), spec)
}

/// Trace and squared Frobenius norm of the skew part, on the torus.
fn torus_trace(n: usize, angles: &[f64]) -> f64 {
    let odd = if n % 2 == 1 { 1.0 } else { 0.0 };
    odd + angles.iter().map(|t| 2.0 * t.cos()).sum::<f64>()
}

fn torus_skew_sq(angles: &[f64]) -> f64 {
    angles.iter().map(|t| 2.0 * t.sin().powi(2)).sum()
}

/// `ln c_n(κ)` from the Bessel closed forms (n = 2, 3, 4).
pub fn log_normalizer_kappa(n: usize, kappa: f64) -> Result<f64> {
    let x = 2.0 * kappa;
    let i0 = bessel_i_scaled(0, x);
    match n {
        2 => Ok(x + i0.ln()),
        3 => Ok(3.0 * kappa + (i0 - bessel_i_scaled(1, x)).ln()),
        4 => {
            let i1 = bessel_i_scaled(1, x);
            let i2 = bessel_i_scaled(2, x);
            Ok(4.0 * kappa + (i0 * i0 - 2.0 * i1 * i1 + i0 * i2).ln())
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// `ln c_n(κ)` for a Langevin-type model.
pub fn log_normalizer(model: &NoiseModel) -> Result<f64> {
    match model.kappa() {
        Some(kappa) => log_normalizer_kappa(model.n, kappa),
        None => Err(Error::InvalidModel(
            "the uniform model has no concentration normalizer".into(),
        )),
    }
}

/// Normalizing constant `c_n(κ) = ∫ exp(κ tr Z) dμ(Z)`.
pub fn normalizer(model: &NoiseModel) -> Result<f64> {
    Ok(log_normalizer(model)?.exp())
}

/// Langevin density `exp(κ tr Z)/c_n(κ)` as a function of the trace.
fn langevin_density(kappa: f64, log_c: f64, trace: f64) -> f64 {
    (kappa * trace - log_c).exp()
}

/// Density and the inlier share `s = p·f_L/f` for a given trace.
fn density_parts(model: &NoiseModel, log_c: f64, trace: f64) -> (f64, f64) {
    match model.kind {
        NoiseKind::Uniform => (1.0, 0.0),
        NoiseKind::Langevin { kappa } => (langevin_density(kappa, log_c, trace), 1.0),
        NoiseKind::LangevinOutlier { kappa, p } => {
            let inlier = p * langevin_density(kappa, log_c, trace);
            let f = inlier + (1.0 - p);
            (f, inlier / f)
        }
    }
}

fn model_log_c(model: &NoiseModel) -> Result<f64> {
    match model.kind {
        NoiseKind::Uniform => Ok(0.0),
        _ => log_normalizer(model),
    }
}

fn check_n(model: &NoiseModel, z: &Rotation) -> Result<()> {
    if model.n != z.n() {
        return Err(Error::DimensionMismatch(format!(
            "model is on SO({}), rotation is {}x{}",
            model.n,
            z.n(),
            z.n()
        )));
    }
    Ok(())
}

/// Density of `model` at `z` with respect to the normalized Haar measure.
pub fn pdf(model: &NoiseModel, z: &Rotation) -> Result<f64> {
    check_n(model, z)?;
    let log_c = model_log_c(model)?;
    Ok(density_parts(model, log_c, z.trace()).0)
}

/// Score map `G(Z)`: the Riemannian gradient of `ln f` at `Z` is `Z·G(Z)ᵀ`.
pub fn score(model: &NoiseModel, z: &Rotation) -> Result<TangentVector> {
    check_n(model, z)?;
    let kappa = match model.kind {
        NoiseKind::Uniform => return Ok(TangentVector::zeros(model.n)),
        NoiseKind::Langevin { kappa } => {
            return Ok(TangentVector::skew_part(z.matrix()).scale(kappa))
        }
        NoiseKind::LangevinOutlier { kappa, .. } => kappa,
    };
    let log_c = model_log_c(model)?;
    let (_, share) = density_parts(model, log_c, z.trace());
    Ok(TangentVector::skew_part(z.matrix()).scale(share * kappa))
}

/// Information weight `E‖grad ln f(Z)‖²` under `f`.
pub fn info_weight(model: &NoiseModel, spec: &QuadratureSpec) -> Result<f64> {
    let n = model.n;
    match model.kind {
        NoiseKind::Uniform => Ok(0.0),
        NoiseKind::Langevin { kappa } | NoiseKind::LangevinOutlier { kappa, p: _ }
            if kappa == 0.0 =>
        {
            Ok(0.0)
        }
        NoiseKind::LangevinOutlier { p, .. } if p == 0.0 => Ok(0.0),
        NoiseKind::Langevin { kappa } if n == 2 || n == 3 => Ok(langevin_weight(n, kappa)),
        _ => {
            if n > 4 {
                return Err(Error::UnsupportedDimension(n));
            }
            let kappa = model.kappa().unwrap_or(0.0);
            let log_c = log_normalizer(model)?;
            let integrand = |angles: &[f64]| {
                let (f, share) = density_parts(model, log_c, torus_trace(n, angles));
                let g2 = (share * kappa).powi(2) * torus_skew_sq(angles);
                g2 * f
            };
            weyl_integrate_angles(n, integrand, spec)
        }
    }
}

/// Closed-form weights `α₂(κ)` and `α₃(κ)` of the pure Langevin model.
fn langevin_weight(n: usize, kappa: f64) -> f64 {
    let x = 2.0 * kappa;
    let i0 = bessel_i_scaled(0, x);
    let i1 = bessel_i_scaled(1, x);
    if n == 2 {
        kappa * i1 / i0
    } else {
        let i3 = bessel_i_scaled(3, x);
        0.5 * kappa * ((2.0 - kappa) * i1 + kappa * i3) / (i0 - i1)
    }
}

/// Coefficient `a_{n,κ}` in `w(p) = a_{n,κ}·p² + O(p³)` for the outlier
/// model at small inlier probability.
pub fn outlier_slope(n: usize, kappa: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidModel(format!(
            "outlier slope needs kappa > 0, got {kappa}"
        )));
    }
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let log_c = log_normalizer_kappa(n, kappa)?;
    weyl_integrate_angles(
        n,
        |angles| {
            let fl = langevin_density(kappa, log_c, torus_trace(n, angles));
            kappa * kappa * torus_skew_sq(angles) * fl * fl
        },
        spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn serde_shapes() {
        let k: NoiseKind = serde_json::from_str(r#"{"kind":"langevin","kappa":5.0}"#).unwrap();
        assert_eq!(k, NoiseKind::Langevin { kappa: 5.0 });
        let k: NoiseKind =
            serde_json::from_str(r#"{"kind":"langevin_outlier","kappa":5.0,"p":0.7}"#).unwrap();
        assert_eq!(k, NoiseKind::LangevinOutlier { kappa: 5.0, p: 0.7 });
        let k: NoiseKind = serde_json::from_str(r#"{"kind":"uniform"}"#).unwrap();
        assert_eq!(k, NoiseKind::Uniform);
        assert_eq!(
            serde_json::to_string(&NoiseKind::LangevinOutlier { kappa: 1.0, p: 0.5 }).unwrap(),
            r#"{"kind":"langevin_outlier","kappa":1.0,"p":0.5}"#
        );
    }

    #[test]
    fn model_validation() {
        assert!(NoiseModel::langevin(3, -1.0).is_err());
        assert!(NoiseModel::langevin_outlier(3, 1.0, 1.5).is_err());
        assert!(NoiseModel::uniform(1).is_err());
    }

    #[test]
    fn haar_measure_has_unit_mass() {
        let spec = QuadratureSpec::default();
        for n in 2..=4 {
            let v = weyl_integrate(n, |_| 1.0, &spec).unwrap();
            assert!((v - 1.0).abs() < 1e-10, "n={n}: {v}");
        }
        assert!(matches!(
            weyl_integrate(5, |_| 1.0, &spec),
            Err(Error::UnsupportedDimension(5))
        ));
    }

    #[test]
    fn normalizer_values() {
        for n in 2..=4 {
            let m = NoiseModel::langevin(n, 0.0).unwrap();
            assert!((normalizer(&m).unwrap() - 1.0).abs() < 1e-15);
        }
        let m = NoiseModel::langevin(4, 1.0).unwrap();
        let (i0, i1, i2) = (bessel_i(0, 2.0), bessel_i(1, 2.0), bessel_i(2, 2.0));
        let expected = i0 * i0 - 2.0 * i1 * i1 + i0 * i2;
        assert!(close(normalizer(&m).unwrap(), expected, 1e-13));
        let m3 = NoiseModel::langevin(3, 1.0).unwrap();
        let c3 = 1f64.exp() * (i0 - i1);
        assert!(close(normalizer(&m3).unwrap(), c3, 1e-13));
        assert!(normalizer(&NoiseModel::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn weyl_matches_normalizer_n3() {
        let spec = QuadratureSpec::default();
        let m = NoiseModel::langevin(3, 1.0).unwrap();
        let v = weyl_integrate(3, |z| z.trace().exp(), &spec).unwrap();
        assert!(close(v, normalizer(&m).unwrap(), 1e-9));
    }

    #[test]
    fn pdf_examples() {
        let z = Rotation::about_axis([1.0, 0.0, 0.0], 0.4);
        assert_eq!(pdf(&NoiseModel::uniform(3).unwrap(), &z).unwrap(), 1.0);
        assert_eq!(
            pdf(&NoiseModel::langevin_outlier(3, 2.0, 0.0).unwrap(), &z).unwrap(),
            1.0
        );
        let m = NoiseModel::langevin(3, 2.0).unwrap();
        let at_i = pdf(&m, &Rotation::identity(3)).unwrap();
        assert!(close(at_i, 6f64.exp() / normalizer(&m).unwrap(), 1e-13));
    }

    #[test]
    fn pdf_integrates_to_one() {
        let spec = QuadratureSpec::gauss_legendre(1e-11);
        for n in 2..=4 {
            for model in [
                NoiseModel::langevin(n, 3.0).unwrap(),
                NoiseModel::langevin_outlier(n, 3.0, 0.6).unwrap(),
            ] {
                let v = weyl_integrate(n, |z| pdf(&model, z).unwrap(), &spec).unwrap();
                assert!((v - 1.0).abs() < 1e-8, "n={n} {model:?}: {v}");
            }
        }
    }

    #[test]
    fn score_examples() {
        let m = NoiseModel::langevin(2, 1.5).unwrap();
        assert!(score(&m, &Rotation::identity(2)).unwrap().norm() < 1e-15);
        let theta = 0.8;
        let g = score(&m, &Rotation::planar(theta)).unwrap();
        assert!(close(
            g.norm(),
            1.5 * 2f64.sqrt() * theta.sin().abs(),
            1e-14
        ));
        let u = NoiseModel::uniform(3).unwrap();
        assert_eq!(
            score(&u, &Rotation::about_axis([0.0, 1.0, 0.0], 1.0))
                .unwrap()
                .norm(),
            0.0
        );
    }

    #[test]
    fn langevin_weight_closed_forms() {
        let spec = QuadratureSpec::default();
        let w = info_weight(&NoiseModel::langevin(2, 1.0).unwrap(), &spec).unwrap();
        assert!(close(w, bessel_i(1, 2.0) / bessel_i(0, 2.0), 1e-13));
        // Reference values from an independent evaluation.
        let cases = [
            (2, 1.0, 0.697_774_657_96),
            (2, 3.0, 2.737_077_913_06),
            (2, 7.0, 6.745_174_693_85),
            (3, 1.0, 1.308_789_373_07),
            (3, 3.0, 7.410_224_355_44),
            (3, 7.0, 19.469_799_235_8),
        ];
        for (n, kappa, expected) in cases {
            let w = info_weight(&NoiseModel::langevin(n, kappa).unwrap(), &spec).unwrap();
            assert!(close(w, expected, 1e-10), "n={n} kappa={kappa}: {w}");
        }
        assert_eq!(
            info_weight(&NoiseModel::langevin(3, 0.0).unwrap(), &spec).unwrap(),
            0.0
        );
        assert_eq!(
            info_weight(&NoiseModel::uniform(3).unwrap(), &spec).unwrap(),
            0.0
        );
    }

    #[test]
    fn outlier_weight_at_p_one_matches_langevin() {
        let spec = QuadratureSpec::default();
        for n in [2, 3] {
            for kappa in [1.0, 3.0, 7.0] {
                let a = info_weight(&NoiseModel::langevin(n, kappa).unwrap(), &spec).unwrap();
                let b = info_weight(&NoiseModel::langevin_outlier(n, kappa, 1.0).unwrap(), &spec)
                    .unwrap();
                assert!(close(b, a, 1e-8), "n={n} kappa={kappa}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn weight_quadrature_n3_agrees_with_closed_form() {
        let spec = QuadratureSpec::default();
        let kappa = 2.5;
        let m = NoiseModel::langevin(3, kappa).unwrap();
        let log_c = log_normalizer(&m).unwrap();
        let v = weyl_integrate_angles(
            3,
            |a| {
                kappa * kappa * torus_skew_sq(a) * langevin_density(kappa, log_c, torus_trace(3, a))
            },
            &spec,
        )
        .unwrap();
        assert!(close(v, info_weight(&m, &spec).unwrap(), 1e-9));
    }

    #[test]
    fn outlier_slope_is_the_small_p_limit() {
        let spec = QuadratureSpec::default();
        for n in [2, 3] {
            let a = outlier_slope(n, 7.0, &spec).unwrap();
            assert!(a > 0.0);
            // p·max f_L must be small for the quadratic term to dominate; at
            // κ = 7 and n = 3 the peak density is about 260.
            let p = 1e-5;
            let w = info_weight(&NoiseModel::langevin_outlier(n, 7.0, p).unwrap(), &spec).unwrap();
            assert!(close(w / (p * p), a, 0.01), "n={n}: {} vs {a}", w / (p * p));
        }
        for kappa in [1.0, 3.0, 7.0] {
            assert!(outlier_slope(3, kappa, &spec).unwrap() > 0.0);
        }
        assert!(outlier_slope(3, 0.0, &spec).is_err());
    }

    #[test]
    fn n4_weight_is_positive_and_grows() {
        let spec = QuadratureSpec::gauss_legendre(1e-10);
        let w1 = info_weight(&NoiseModel::langevin(4, 1.0).unwrap(), &spec).unwrap();
        let w3 = info_weight(&NoiseModel::langevin(4, 3.0).unwrap(), &spec).unwrap();
        assert!(w1 > 0.0 && w3 > w1);
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let models = [
            NoiseModel::langevin(3, 2.0).unwrap(),
            NoiseModel::langevin_outlier(3, 2.0, 0.4).unwrap(),
        ];
        for model in models {
            let z = sample_uniform(3, &mut rng).unwrap();
            let omega = TangentVector::from_coordinates(3, &[0.3, -0.7, 0.2]).unwrap();
            let h = 1e-6;
            let lp = |t: f64| {
                let zt = crate::songeom::exp_map(&z, &omega.scale(t)).unwrap();
                pdf(&model, &zt).unwrap().ln()
            };
            let fd = (lp(h) - lp(-h)) / (2.0 * h);
            let g = score(&model, &z).unwrap();
            let analytic = (g.matrix() * omega.matrix()).trace();
            assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3));
        }
    }
}
