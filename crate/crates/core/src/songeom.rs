//! Riemannian geometry of SO(n) and of the product / quotient spaces built on
//! top of it.
//!
//! Tangent vectors at a rotation `Q` are always handled through their
//! Lie-algebra factor: the tangent vector `QΩ` is stored as the skew matrix
//! `Ω`. The metric is `<QΩ₁, QΩ₂> = trace(Ω₁ᵀΩ₂)`, so geodesic distances are
//! Frobenius norms of matrix logarithms and a planar rotation by `θ` sits at
//! distance `√2·θ` from the identity.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::Mul;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` for validated rotations.
pub const ROTATION_TOL: f64 = 1e-12;
/// Tolerance on `‖Ω + Ωᵀ‖_F` for validated tangent vectors.
pub const SKEW_TOL: f64 = 1e-12;
/// Angles closer than this to π are treated as lying on the cut locus.
pub const CUT_LOCUS_TOL: f64 = 1e-8;
/// Anchored estimates must match the reference within this Frobenius distance.
pub const ANCHOR_TOL: f64 = 1e-12;

const KARCHER_TOL: f64 = 1e-10;
const KARCHER_MAX_ITER: usize = 200;

/// Dimension `n(n−1)/2` of SO(n).
pub fn lie_dim(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    Ok(n * (n - 1) / 2)
}

/// An element of SO(n).
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    /// Validates orthogonality and orientation before wrapping `m`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(m, ROTATION_TOL)
    }

    /// Same as [`Rotation::new`] with a caller-chosen tolerance, for matrices
    /// that went through a lossy text format.
    pub fn with_tolerance(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = m.nrows();
        if n < 2 {
            return Err(Error::InvalidDimension(n));
        }
        if m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "rotation must be square, got {}x{}",
                n,
                m.ncols()
            )));
        }
        let ortho = (m.transpose() * &m - DMatrix::identity(n, n)).norm();
        if ortho > tol {
            return Err(Error::NotARotation(format!("‖RᵀR − I‖ = {ortho:.3e}")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::NotARotation(format!("det = {det}")));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Planar rotation by `theta` (counter-clockwise).
    pub fn planar(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    /// Rotation of R³ by `theta` about `axis` (normalized internally).
    pub fn about_axis(axis: [f64; 3], theta: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let w = [
            axis[0] / norm * theta,
            axis[1] / norm * theta,
            axis[2] / norm * theta,
        ];
        expm_so3(&hat3(w))
    }

    /// Block-diagonal element of the maximal torus: one planar block per angle,
    /// padded with a trailing 1 when `n` is odd.
    pub fn torus(n: usize, angles: &[f64]) -> Self {
        debug_assert!(angles.len() == n / 2);
        let mut m = DMatrix::identity(n, n);
        for (k, &theta) in angles.iter().enumerate() {
            let (s, c) = theta.sin_cos();
            let i = 2 * k;
            m[(i, i)] = c;
            m[(i, i + 1)] = -s;
            m[(i + 1, i)] = s;
            m[(i + 1, i + 1)] = c;
        }
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Conjugation `P·R·Pᵀ` by an orthogonal matrix.
    pub fn conjugate(&self, p: &DMatrix<f64>) -> Self {
        Self(p * &self.0 * p.transpose())
    }
}

impl Mul for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(&self.0 * &rhs.0)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// A skew-symmetric matrix, i.e. an element of the Lie algebra so(n).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector(DMatrix<f64>);

impl TangentVector {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "tangent vector must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = (&m + m.transpose()).norm();
        if asym > SKEW_TOL * m.norm().max(1.0) {
            return Err(Error::NotSkew(asym));
        }
        Ok(Self(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Skew-symmetric part `(A − Aᵀ)/2` of an arbitrary square matrix.
    pub fn skew_part(a: &DMatrix<f64>) -> Self {
        Self((a - a.transpose()) * 0.5)
    }

    /// `Σ c_k E_k` over the canonical basis of so(n).
    pub fn from_coordinates(n: usize, coords: &[f64]) -> Result<Self> {
        let basis = canonical_basis(n)?;
        if coords.len() != basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates, got {}",
                basis.len(),
                coords.len()
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        for (c, e) in coords.iter().zip(&basis) {
            m += e.matrix() * *c;
        }
        Ok(Self(m))
    }

    /// Coordinates in the canonical orthonormal basis.
    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.n();
        basis_pairs(n)
            .into_iter()
            .map(|(i, j, sign)| sign * 2.0 * FRAC_1_SQRT_2 * self.0[(i, j)])
            .collect()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }
}

/// An ordered tuple of rotations sharing the same `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationTuple(Vec<Rotation>);

impl RotationTuple {
    pub fn new(items: Vec<Rotation>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::InvalidArgument(
                "rotation tuple must not be empty".into(),
            ));
        };
        let n = first.n();
        if let Some(bad) = items.iter().find(|r| r.n() != n) {
            return Err(Error::DimensionMismatch(format!(
                "tuple mixes n = {n} and n = {}",
                bad.n()
            )));
        }
        Ok(Self(items))
    }

    pub fn identity(count: usize, n: usize) -> Self {
        Self(vec![Rotation::identity(n); count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n(&self) -> usize {
        self.0[0].n()
    }

    pub fn items(&self) -> &[Rotation] {
        &self.0
    }

    pub fn get(&self, i: usize) -> &Rotation {
        &self.0[i]
    }

    pub fn into_inner(self) -> Vec<Rotation> {
        self.0
    }

    /// Right-multiplies every element by `q` (a gauge shift).
    pub fn right_mul(&self, q: &Rotation) -> Self {
        Self(self.0.iter().map(|r| r * q).collect())
    }
}

/// Skew factor of the orthogonal projection of `h` onto the tangent space at
/// `q`: returns `skew(qᵀh)`, so the projected tangent vector is `q·skew(qᵀh)`.
pub fn project_tangent(q: &Rotation, h: &DMatrix<f64>) -> Result<TangentVector> {
    if h.nrows() != q.n() || h.ncols() != q.n() {
        return Err(Error::DimensionMismatch(format!(
            "cannot project a {}x{} matrix at a point of SO({})",
            h.nrows(),
            h.ncols(),
            q.n()
        )));
    }
    Ok(TangentVector::skew_part(&(q.matrix().transpose() * h)))
}

/// `Exp_Q(QΩ) = Q·expm(Ω)`.
pub fn exp_map(q: &Rotation, omega: &TangentVector) -> Result<Rotation> {
    if q.n() != omega.n() {
        return Err(Error::DimensionMismatch(format!(
            "rotation has n = {}, tangent vector has n = {}",
            q.n(),
            omega.n()
        )));
    }
    Ok(q * &expm(omega))
}

/// Matrix exponential of a skew-symmetric matrix.
pub fn expm(omega: &TangentVector) -> Rotation {
    let m = omega.matrix();
    match omega.n() {
        2 => Rotation::planar(m[(1, 0)]),
        3 => expm_so3(m),
        _ => expm_general(m),
    }
}

fn hat3(w: [f64; 3]) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
    )
}

// Rodrigues formula.
fn expm_so3(m: &DMatrix<f64>) -> Rotation {
    let w = [m[(2, 1)], m[(0, 2)], m[(1, 0)]];
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-6 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat3(w);
    let k2 = &k * &k;
    Rotation(DMatrix::identity(3, 3) + k * a + k2 * b)
}

// exp(Ω) = cos(√S) + sinc(√S)·Ω with S = −Ω² symmetric positive semidefinite.
fn expm_general(m: &DMatrix<f64>) -> Rotation {
    let n = m.nrows();
    let s = -(m * m);
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut cos_d = DVector::zeros(n);
    let mut sinc_d = DVector::zeros(n);
    for k in 0..n {
        let theta = eig.eigenvalues[k].max(0.0).sqrt();
        cos_d[k] = theta.cos();
        sinc_d[k] = if theta < 1e-6 {
            1.0 - theta * theta / 6.0
        } else {
            theta.sin() / theta
        };
    }
    let v = &eig.eigenvectors;
    let cos_part = v * DMatrix::from_diagonal(&cos_d) * v.transpose();
    let sinc_part = v * DMatrix::from_diagonal(&sinc_d) * v.transpose();
    Rotation(cos_part + sinc_part * m)
}

/// Principal logarithm of a rotation.
pub fn logm(z: &Rotation) -> Result<TangentVector> {
    let m = z.matrix();
    match z.n() {
        2 => {
            let theta = m[(1, 0)].atan2(m[(0, 0)]);
            check_cut_locus(theta.abs())?;
            Ok(TangentVector(DMatrix::from_row_slice(
                2,
                2,
                &[0.0, -theta, theta, 0.0],
            )))
        }
        3 => {
            let k = (m - m.transpose()) * 0.5;
            let s = (k[(2, 1)].powi(2) + k[(0, 2)].powi(2) + k[(1, 0)].powi(2)).sqrt();
            let c = 0.5 * (m.trace() - 1.0);
            let theta = s.atan2(c);
            check_cut_locus(theta)?;
            let factor = if theta < 1e-6 {
                1.0 + theta * theta / 6.0
            } else {
                theta / s
            };
            Ok(TangentVector(k * factor))
        }
        _ => logm_general(m),
    }
}

// Ω = g(S)·K with S, K the symmetric/skew parts of Z and g = θ/sin θ per
// eigenvector of S. K maps each eigenvector v to sin θ times a unit vector
// in the same invariant plane, so sin θ = ‖Kv‖; this stays accurate near
// θ = π, where √(1 − c²) loses digits.
fn logm_general(m: &DMatrix<f64>) -> Result<TangentVector> {
    let n = m.nrows();
    let s = (m + m.transpose()) * 0.5;
    let k = (m - m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let v = &eig.eigenvectors;
    let mut g = DVector::zeros(n);
    for idx in 0..n {
        let c = eig.eigenvalues[idx];
        let sin = (&k * v.column(idx)).norm();
        let theta = sin.atan2(c);
        check_cut_locus(theta)?;
        g[idx] = if theta < 1e-6 {
            1.0 + theta * theta / 6.0
        } else {
            theta / sin
        };
    }
    let gs = v * DMatrix::from_diagonal(&g) * v.transpose();
    Ok(TangentVector::skew_part(&(gs * k)))
}

fn check_cut_locus(theta: f64) -> Result<()> {
    if PI - theta < CUT_LOCUS_TOL {
        Err(Error::CutLocus { angle: theta })
    } else {
        Ok(())
    }
}

/// Skew factor `log(Q₁ᵀQ₂)` of `Log_{Q₁}(Q₂)`.
pub fn log_map(q1: &Rotation, q2: &Rotation) -> Result<TangentVector> {
    check_same_n(q1, q2)?;
    logm(&(&q1.transpose() * q2))
}

/// `‖log(Q₁ᵀQ₂)‖_F`.
pub fn geodesic_dist(q1: &Rotation, q2: &Rotation) -> Result<f64> {
    Ok(log_map(q1, q2)?.norm())
}

/// Rotation angles in `[0, π]` of the planar blocks of `z` (its canonical
/// form), one per invariant plane, largest first.
pub fn rotation_angles(z: &Rotation) -> Vec<f64> {
    let m = z.matrix();
    match z.n() {
        2 => vec![m[(1, 0)].atan2(m[(0, 0)]).abs()],
        3 => {
            let s = ((m[(2, 1)] - m[(1, 2)]).powi(2)
                + (m[(0, 2)] - m[(2, 0)]).powi(2)
                + (m[(1, 0)] - m[(0, 1)]).powi(2))
            .sqrt()
                * 0.5;
            let c = 0.5 * (m.trace() - 1.0);
            vec![s.atan2(c)]
        }
        n => {
            let s = (m + m.transpose()) * 0.5;
            let mut cs: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
            cs.sort_by(|a, b| a.total_cmp(b));
            // Each plane contributes a pair of equal eigenvalues cos θ.
            (0..n / 2)
                .map(|k| {
                    let c = 0.5 * (cs[2 * k] + cs[2 * k + 1]);
                    c.clamp(-1.0, 1.0).acos()
                })
                .collect()
        }
    }
}

/// Geodesic distance computed from rotation angles. Unlike
/// [`geodesic_dist`] it is defined on the cut locus; the flag reports whether
/// the pair was within [`CUT_LOCUS_TOL`] of it.
pub fn geodesic_dist_saturating(q1: &Rotation, q2: &Rotation) -> (f64, bool) {
    let angles = rotation_angles(&(&q1.transpose() * q2));
    let saturated = angles.iter().any(|&t| PI - t < CUT_LOCUS_TOL);
    let sq: f64 = angles.iter().map(|t| 2.0 * t * t).sum();
    (sq.sqrt(), saturated)
}

fn check_same_n(a: &Rotation, b: &Rotation) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "n = {} vs n = {}",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// `(i, j, sign)` for each basis element, `i < j`, with `E[i][j] = sign/√2`.
fn basis_pairs(n: usize) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sign = if (j - i) % 2 == 1 { 1.0 } else { -1.0 };
            pairs.push((i, j, sign));
        }
    }
    pairs
}

/// Orthonormal basis of so(n) under `<A, B> = trace(AᵀB)`. Each element has
/// a single pair of entries `±1/√2`; for n = 3 the elements correspond to
/// rotations about z, y and x respectively.
pub fn canonical_basis(n: usize) -> Result<Vec<TangentVector>> {
    lie_dim(n)?;
    Ok(basis_pairs(n)
        .into_iter()
        .map(|(i, j, sign)| {
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = sign * FRAC_1_SQRT_2;
            m[(j, i)] = -sign * FRAC_1_SQRT_2;
            TangentVector(m)
        })
        .collect())
}

/// Signed permutation `P ∈ O(n)` with `PᵀE_kP = E_l` and `PᵀE_lP = −E_k` for
/// two distinct canonical basis elements.
pub fn signed_permutation(n: usize, k: usize, l: usize) -> Result<DMatrix<f64>> {
    let pairs = basis_pairs(n);
    if k >= pairs.len() || l >= pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "basis index out of range for n = {n}"
        )));
    }
    if k == l {
        return Err(Error::InvalidArgument(
            "basis elements must be distinct".into(),
        ));
    }
    // E = c·(e_x e_yᵀ − e_y e_xᵀ)/√2 with an orientation chosen per pair.
    let (ki, kj, ks) = pairs[k];
    let (li, lj, ls) = pairs[l];
    // Pᵀ sends e_x to eps_x·e_{perm(x)}.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut eps = vec![1.0; n];
    let shared = [ki, kj].iter().find(|x| **x == li || **x == lj).copied();
    match shared {
        None => {
            // E_k on (x, y) = (ki, kj) with sign ks, E_l on (a, b) = (li, lj) with ls.
            perm[ki] = li;
            perm[li] = ki;
            perm[kj] = lj;
            perm[lj] = kj;
            eps[kj] = ks * ls;
            eps[lj] = -ks * ls;
        }
        Some(x) => {
            let y = if ki == x { kj } else { ki };
            let z = if li == x { lj } else { li };
            // Orientation relative to (x, y) / (x, z).
            let ck = if ki == x { ks } else { -ks };
            let cl = if li == x { ls } else { -ls };
            perm[y] = z;
            perm[z] = y;
            eps[y] = ck * cl;
            eps[z] = -ck * cl;
        }
    }
    let mut pt = DMatrix::zeros(n, n);
    for x in 0..n {
        pt[(perm[x], x)] = eps[x];
    }
    Ok(pt.transpose())
}

/// Geodesic distance on the anchored submanifold: rotations listed in
/// `anchors` must agree between the two tuples.
pub fn dist_anchored(
    reference: &RotationTuple,
    estimate: &RotationTuple,
    anchors: &[usize],
) -> Result<f64> {
    check_tuples(reference, estimate)?;
    for &a in anchors {
        if a >= reference.len() {
            return Err(Error::InvalidNode(a));
        }
        let dev = (reference.get(a).matrix() - estimate.get(a).matrix()).norm();
        if dev > ANCHOR_TOL {
            return Err(Error::AnchorMismatch {
                node: a,
                deviation: dev,
            });
        }
    }
    let mut sq = 0.0;
    for i in 0..reference.len() {
        if anchors.contains(&i) {
            continue;
        }
        sq += geodesic_dist(reference.get(i), estimate.get(i))?.powi(2);
    }
    Ok(sq.sqrt())
}

fn check_tuples(a: &RotationTuple, b: &RotationTuple) -> Result<()> {
    if a.len() != b.len() || a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "tuples of shape {}x SO({}) and {}x SO({})",
            a.len(),
            a.n(),
            b.len(),
            b.n()
        )));
    }
    Ok(())
}

/// Result of aligning an estimate with a reference in the quotient space.
#[derive(Clone, Debug)]
pub struct Alignment {
    /// Minimizer of `Σ‖log(R_iᵀR̂_iQ)‖²`.
    pub q: Rotation,
    /// Quotient distance (square root of the minimized sum).
    pub dist: f64,
    pub iterations: usize,
}

/// Aligns `estimate` to `reference` over the global gauge: `Q` is the
/// Karcher mean of `R̂_iᵀR_i`.
pub fn align_quotient(reference: &RotationTuple, estimate: &RotationTuple) -> Result<Alignment> {
    check_tuples(reference, estimate)?;
    let n = reference.n();
    let count = reference.len() as f64;
    let targets: Vec<Rotation> = reference
        .items()
        .iter()
        .zip(estimate.items())
        .map(|(r, rh)| &rh.transpose() * r)
        .collect();

    let mut sum = DMatrix::zeros(n, n);
    for b in &targets {
        sum += b.matrix();
    }
    let mut q = project_to_so(&sum).0;
    let mut best: Option<(f64, Rotation)> = None;

    for iter in 0..=KARCHER_MAX_ITER {
        let mut mean = DMatrix::zeros(n, n);
        let mut objective = 0.0;
        let qt = q.transpose();
        for b in &targets {
            let l = match logm(&(&qt * b)) {
                Ok(l) => l,
                Err(Error::CutLocus { .. }) => {
                    let best = best.map(|(_, r)| r).unwrap_or_else(|| q.clone());
                    return Err(Error::Convergence {
                        iterations: iter,
                        residual: f64::INFINITY,
                        best: Box::new(best),
                    });
                }
                Err(e) => return Err(e),
            };
            objective += l.norm().powi(2);
            mean += l.matrix();
        }
        mean /= count;
        if best.as_ref().is_none_or(|(obj, _)| objective < *obj) {
            best = Some((objective, q.clone()));
        }
        let residual = mean.norm();
        if residual < KARCHER_TOL {
            return Ok(Alignment {
                q,
                dist: objective.sqrt(),
                iterations: iter,
            });
        }
        if iter == KARCHER_MAX_ITER {
            return Err(Error::Convergence {
                iterations: iter,
                residual,
                best: Box::new(best.map(|(_, r)| r).unwrap_or(q)),
            });
        }
        q = &q * &expm(&TangentVector(mean));
    }
    unreachable!()
}

/// Nearest rotation to `m` in Frobenius norm. The determinant correction is
/// applied along the smallest singular direction (the last one on ties). The
/// flag reports a degenerate projection: a near-zero or repeated smallest
/// singular value when a correction was needed.
pub fn project_to_so(m: &DMatrix<f64>) -> (Rotation, bool) {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let sv = &svd.singular_values;
    let smax = sv.max();
    // Last index attaining the minimum singular value (within tolerance).
    let smin = sv.min();
    let tie_tol = 1e-12 * smax.max(1.0);
    let idx = (0..n)
        .rev()
        .find(|&i| sv[i] - smin <= tie_tol)
        .unwrap_or(n - 1);
    let mut d = DVector::from_element(n, 1.0);
    let det = (&u * &vt).determinant();
    let mut ambiguous = smin <= tie_tol;
    if det < 0.0 {
        d[idx] = -1.0;
        let ties = (0..n).filter(|&i| sv[i] - smin <= tie_tol).count();
        ambiguous |= ties > 1;
    }
    let r = &u * DMatrix::from_diagonal(&d) * &vt;
    (Rotation(r), ambiguous)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_uniform;
    use approx_eq::assert_close;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn lie_dim_values() {
        assert_eq!(lie_dim(2).unwrap(), 1);
        assert_eq!(lie_dim(3).unwrap(), 3);
        assert_eq!(lie_dim(4).unwrap(), 6);
        assert!(matches!(lie_dim(1), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn projection_of_symmetric_and_skew() {
        let q = Rotation::identity(3);
        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0]);
        assert!(project_tangent(&q, &sym).unwrap().norm() < 1e-15);
        let skew = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -2.0, -1.0, 0.0, 3.0, 2.0, -3.0, 0.0]);
        let p = project_tangent(&q, &skew).unwrap();
        assert!((p.matrix() - &skew).norm() < 1e-15);
        assert!(project_tangent(&q, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn projection_matches_formula() {
        let mut r = rng(1);
        let q = sample_uniform(3, &mut r).unwrap();
        let h = DMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let qth = q.matrix().transpose() * &h;
        let expected = (&qth - qth.transpose()) / 2.0;
        let p = project_tangent(&q, &h).unwrap();
        assert!((p.matrix() - expected).norm() < 1e-14);
        // idempotent on tangent inputs
        let again = project_tangent(&q, &(q.matrix() * p.matrix())).unwrap();
        assert!((again.matrix() - p.matrix()).norm() < 1e-14);
    }

    #[test]
    fn planar_exp_and_log() {
        let theta = 0.7;
        let omega =
            TangentVector::new(DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0])).unwrap();
        let r = exp_map(&Rotation::identity(2), &omega).unwrap();
        assert!((r.matrix() - Rotation::planar(theta).matrix()).norm() < 1e-15);
        let l = log_map(&Rotation::identity(2), &Rotation::planar(-2.5)).unwrap();
        assert_close!(l.matrix()[(1, 0)], -2.5, 1e-14);
        assert!(exp_map(&Rotation::identity(3), &TangentVector::zeros(3))
            .unwrap()
            .matrix()
            .is_identity(0.0));
    }

    #[test]
    fn log_at_cut_locus_is_rejected() {
        assert!(matches!(
            logm(&Rotation::planar(PI)),
            Err(Error::CutLocus { .. })
        ));
        assert!(matches!(
            logm(&Rotation::about_axis([1.0, 2.0, 0.5], PI - 1e-10)),
            Err(Error::CutLocus { .. })
        ));
        assert!(logm(&Rotation::about_axis([1.0, 2.0, 0.5], PI - 1e-6)).is_ok());
        let z4 = Rotation::torus(4, &[0.3, PI]);
        assert!(matches!(logm(&z4), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn geodesic_distance_examples() {
        let d = geodesic_dist(&Rotation::identity(2), &Rotation::planar(PI / 2.0)).unwrap();
        assert_close!(d, 2f64.sqrt() * PI / 2.0, 1e-14);
        let d = geodesic_dist(
            &Rotation::identity(3),
            &Rotation::about_axis([0.0, 0.0, 1.0], 1.0),
        )
        .unwrap();
        assert_close!(d, 2f64.sqrt(), 1e-14);
        let q = Rotation::about_axis([0.3, -1.0, 2.0], 0.4);
        assert_close!(geodesic_dist(&q, &q).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn roundtrip_n3_and_n5() {
        let mut r = rng(7);
        for n in [3, 4, 5] {
            for _ in 0..50 {
                let q1 = sample_uniform(n, &mut r).unwrap();
                let q2 = sample_uniform(n, &mut r).unwrap();
                let l = log_map(&q1, &q2).unwrap();
                let back = expm(&l);
                let z = q1.matrix().transpose() * q2.matrix();
                assert!((back.matrix() - z).norm() < 1e-10, "n = {n}");
            }
        }
    }

    #[test]
    fn general_exp_agrees_with_rodrigues() {
        let omega = TangentVector::skew_part(&DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.4, -1.1, 0.2, 0.0, 0.9, 1.3, -0.5, 0.0],
        ));
        let a = expm_so3(omega.matrix());
        let b = expm_general(omega.matrix());
        assert!((a.matrix() - b.matrix()).norm() < 1e-13);
        let la = logm(&a).unwrap();
        let lb = logm_general(a.matrix()).unwrap();
        assert!((la.matrix() - lb.matrix()).norm() < 1e-12);
    }

    #[test]
    fn angles_match_distance() {
        let mut r = rng(9);
        for n in [2, 3, 4, 5] {
            let a = sample_uniform(n, &mut r).unwrap();
            let b = sample_uniform(n, &mut r).unwrap();
            let (d, sat) = geodesic_dist_saturating(&a, &b);
            assert!(!sat);
            assert_close!(d, geodesic_dist(&a, &b).unwrap(), 1e-9);
        }
        let (d, sat) = geodesic_dist_saturating(&Rotation::identity(2), &Rotation::planar(PI));
        assert!(sat);
        assert_close!(d, 2f64.sqrt() * PI, 1e-12);
    }

    #[test]
    fn canonical_basis_n3_matches_reference() {
        let b = canonical_basis(3).unwrap();
        let s = FRAC_1_SQRT_2;
        let e1 = DMatrix::from_row_slice(3, 3, &[0.0, s, 0.0, -s, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e2 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -s, 0.0, 0.0, 0.0, s, 0.0, 0.0]);
        let e3 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, s, 0.0, -s, 0.0]);
        assert_eq!(b[0].matrix(), &e1);
        assert_eq!(b[1].matrix(), &e2);
        assert_eq!(b[2].matrix(), &e3);
        let b2 = canonical_basis(2).unwrap();
        assert_eq!(b2.len(), 1);
        assert_eq!(
            b2[0].matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, s, -s, 0.0])
        );
    }

    #[test]
    fn canonical_basis_gram_is_identity() {
        for n in 2..=6 {
            let b = canonical_basis(n).unwrap();
            assert_eq!(b.len(), lie_dim(n).unwrap());
            for (i, x) in b.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_close!(x.inner(y), expected, 1e-12);
                }
            }
        }
        assert!(canonical_basis(1).is_err());
    }

    #[test]
    fn coordinates_roundtrip() {
        let coords = [0.3, -1.2, 0.5, 2.0, 0.1, -0.4];
        let t = TangentVector::from_coordinates(4, &coords).unwrap();
        let back = t.coordinates();
        for (a, b) in coords.iter().zip(&back) {
            assert_close!(*a, *b, 1e-14);
        }
    }

    #[test]
    fn signed_permutations_for_all_pairs() {
        for n in 2..=5 {
            let basis = canonical_basis(n).unwrap();
            let d = basis.len();
            for k in 0..d {
                for l in 0..d {
                    if k == l {
                        assert!(signed_permutation(n, k, l).is_err());
                        continue;
                    }
                    let p = signed_permutation(n, k, l).unwrap();
                    assert_eq!(p.transpose() * &p, DMatrix::identity(n, n));
                    let ek = basis[k].matrix();
                    let el = basis[l].matrix();
                    assert_eq!(&(p.transpose() * ek * &p), el, "n={n} k={k} l={l}");
                    assert_eq!(p.transpose() * el * &p, -ek, "n={n} k={k} l={l}");
                }
            }
        }
    }

    #[test]
    fn anchored_distance_examples() {
        let theta = 0.3;
        let reference = RotationTuple::identity(2, 2);
        let est = RotationTuple::new(vec![Rotation::identity(2), Rotation::planar(theta)]).unwrap();
        assert_close!(
            dist_anchored(&reference, &est, &[0]).unwrap(),
            2f64.sqrt() * theta,
            1e-14
        );
        assert_close!(
            dist_anchored(&reference, &reference, &[0]).unwrap(),
            0.0,
            0.0
        );
        assert!(matches!(
            dist_anchored(&reference, &est, &[1]),
            Err(Error::AnchorMismatch { node: 1, .. })
        ));
    }

    #[test]
    fn anchored_distance_is_termwise_sum() {
        let mut r = rng(11);
        let reference =
            RotationTuple::new((0..4).map(|_| sample_uniform(3, &mut r).unwrap()).collect())
                .unwrap();
        let mut est: Vec<Rotation> = (0..4)
            .map(|i| {
                let omega =
                    TangentVector::from_coordinates(3, &[0.1 * i as f64, -0.2, 0.15]).unwrap();
                exp_map(reference.get(i), &omega).unwrap()
            })
            .collect();
        est[2] = reference.get(2).clone();
        let est = RotationTuple::new(est).unwrap();
        let mut sq = 0.0;
        for i in [0, 1, 3] {
            let z = reference.get(i).matrix().transpose() * est.get(i).matrix();
            let angle = ((z.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            sq += 2.0 * angle * angle;
        }
        assert_close!(
            dist_anchored(&reference, &est, &[2]).unwrap(),
            sq.sqrt(),
            1e-10
        );
    }

    #[test]
    fn quotient_alignment_of_pure_gauge_shift() {
        let mut r = rng(3);
        let reference =
            RotationTuple::new((0..5).map(|_| sample_uniform(3, &mut r).unwrap()).collect())
                .unwrap();
        let q0 = sample_uniform(3, &mut r).unwrap();
        let est = reference.right_mul(&q0);
        let a = align_quotient(&reference, &est).unwrap();
        assert!(a.dist < 1e-8);
        for (ri, rh) in reference.items().iter().zip(est.items()) {
            let m = ri.matrix().transpose() * rh.matrix() * a.q.matrix();
            assert!((m - DMatrix::identity(3, 3)).norm() < 1e-8);
        }
        let same = align_quotient(&reference, &reference).unwrap();
        assert!(same.dist < 1e-12);
        assert!((same.q.matrix() - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn quotient_alignment_planar_offsets() {
        // Oracle: brute-force minimization over the circle.
        let offsets = [0.1, -0.1, 0.0];
        let reference = RotationTuple::identity(3, 2);
        let est =
            RotationTuple::new(offsets.iter().map(|&t| Rotation::planar(t)).collect()).unwrap();
        let objective = |phi: f64| -> f64 {
            offsets
                .iter()
                .map(|t| {
                    let a = (t + phi + PI).rem_euclid(2.0 * PI) - PI;
                    2.0 * a * a
                })
                .sum()
        };
        let mut best = (0.0, f64::INFINITY);
        for k in 0..20000 {
            let phi = -PI + 2.0 * PI * k as f64 / 20000.0;
            let v = objective(phi);
            if v < best.1 {
                best = (phi, v);
            }
        }
        let (mut lo, mut hi) = (best.0 - 1e-3, best.0 + 1e-3);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if objective(m1) < objective(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let oracle = objective(0.5 * (lo + hi)).sqrt();
        let a = align_quotient(&reference, &est).unwrap();
        assert_close!(a.dist, oracle, 1e-9);
        assert_close!(a.dist, (2.0f64 * 0.02).sqrt(), 1e-9);
        assert!(rotation_angles(&a.q)[0] < 1e-9);
    }

    #[test]
    fn projection_to_so_fixes_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -0.5]);
        let (r, amb) = project_to_so(&m);
        assert!(!amb);
        assert!((r.matrix() - DMatrix::identity(3, 3)).norm() < 1e-12);
        let (r, amb) = project_to_so(&DMatrix::zeros(3, 3));
        assert!(amb);
        assert!(Rotation::new(r.into_matrix()).is_ok());
    }
}
