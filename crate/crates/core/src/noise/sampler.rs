use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{NoiseKind, NoiseModel};
use crate::error::{Error, Result};
use crate::songeom::Rotation;

/// Cap on proposals for the rejection sampler.
pub const MAX_PROPOSALS: u64 = 10_000_000;

const TABLE_POINTS: usize = 4096;

/// Haar-uniform rotation: Gaussian matrix, QR, sign fix from `diag(R)`, and a
/// column swap when the result has determinant −1.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Rotation> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)] == 0.0) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.swap_columns(0, 1);
        }
        return Ok(Rotation::from_matrix_unchecked(q));
    }
}

/// Inverse-CDF table for the rotation angle on `[0, θ_max]`, built from a
/// piecewise-linear density.
#[derive(Clone, Debug)]
struct AngleTable {
    grid: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl AngleTable {
    fn new<F: Fn(f64) -> f64>(theta_max: f64, density: F) -> Self {
        let h = theta_max / (TABLE_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..TABLE_POINTS).map(|k| k as f64 * h).collect();
        let density: Vec<f64> = grid.iter().map(|&t| density(t)).collect();
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        cdf.push(0.0);
        for k in 1..TABLE_POINTS {
            let prev = cdf[k - 1];
            cdf.push(prev + 0.5 * h * (density[k - 1] + density[k]));
        }
        Self { grid, density, cdf }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().expect("table is not empty");
        let u = rng.random::<f64>() * total;
        let k = self
            .cdf
            .partition_point(|&c| c <= u)
            .clamp(1, TABLE_POINTS - 1);
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        let (f0, f1) = (self.density[k - 1], self.density[k]);
        let h = t1 - t0;
        let r = u - self.cdf[k - 1];
        // Solve f0·s + (f1 − f0)·s²/(2h) = r for s in [0, h].
        let a = 0.5 * (f1 - f0) / h;
        let s = if a.abs() < 1e-14 * f0.abs().max(1e-300) {
            r / f0
        } else {
            let disc = (f0 * f0 + 4.0 * a * r).max(0.0);
            2.0 * r / (f0 + disc.sqrt())
        };
        (t0 + s.clamp(0.0, h)).min(PI)
    }
}

#[derive(Clone, Debug)]
enum Strategy {
    Uniform,
    Planar(AngleTable),
    Spatial(AngleTable),
    Rejection(f64),
}

/// A sampler for one noise model, with any lookup tables prebuilt so that
/// repeated draws are cheap.
#[derive(Clone, Debug)]
pub struct Sampler {
    n: usize,
    inlier_p: f64,
    strategy: Strategy,
}

impl Sampler {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        let n = model.n();
        let (kappa, p) = match model.kind() {
            NoiseKind::Uniform => (0.0, 0.0),
            NoiseKind::Langevin { kappa } => (kappa, 1.0),
            NoiseKind::LangevinOutlier { kappa, p } => (kappa, p),
        };
        let strategy = if kappa == 0.0 || p == 0.0 {
            Strategy::Uniform
        } else {
            // The angle density decays like exp(−κθ²) away from 0.
            let theta_max = PI.min((50.0 / kappa).sqrt());
            match n {
                2 => Strategy::Planar(AngleTable::new(theta_max, |t| {
                    (2.0 * kappa * (t.cos() - 1.0)).exp()
                })),
                3 => Strategy::Spatial(AngleTable::new(theta_max, |t| {
                    (1.0 - t.cos()) * (2.0 * kappa * (t.cos() - 1.0)).exp()
                })),
                _ => Strategy::Rejection(kappa),
            }
        };
        Ok(Self {
            n,
            inlier_p: p,
            strategy,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Rotation> {
        if let Strategy::Uniform = self.strategy {
            return sample_uniform(self.n, rng);
        }
        if self.inlier_p < 1.0 && rng.random::<f64>() >= self.inlier_p {
            return sample_uniform(self.n, rng);
        }
        match &self.strategy {
            Strategy::Uniform => unreachable!(),
            Strategy::Planar(table) => {
                let theta = table.draw(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Ok(Rotation::planar(sign * theta))
            }
            Strategy::Spatial(table) => {
                let theta = table.draw(rng);
                let axis = loop {
                    let v: [f64; 3] = [
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ];
                    if v.iter().map(|x| x * x).sum::<f64>() > 1e-24 {
                        break v;
                    }
                };
                Ok(Rotation::about_axis(axis, theta))
            }
            Strategy::Rejection(kappa) => {
                let n = self.n as f64;
                for _ in 0..MAX_PROPOSALS {
                    let z = sample_uniform(self.n, rng)?;
                    if rng.random::<f64>() < (kappa * (z.trace() - n)).exp() {
                        return Ok(z);
                    }
                }
                Err(Error::SamplerStuck(MAX_PROPOSALS))
            }
        }
    }
}

/// Draws one rotation from `model`. Builds a fresh [`Sampler`]; keep one
/// around when drawing repeatedly.
pub fn sample<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> Result<Rotation> {
    Sampler::new(model)?.sample(rng)
}
