//! Fisher information and Cramér–Rao bounds for synchronization.
//!
//! Bounds are expressed in squared geodesic units (squared Frobenius norm of
//! the matrix logarithm), so a planar error of `θ` radians counts as `2θ²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphcore::{
    build_laplacian, mask_anchors, MeasurementGraph, SpectralKernel, Spectrum, WeightedLaplacian,
};
use crate::noise::{info_weight, outlier_slope, weyl_integrate_angles, NoiseModel, QuadratureSpec};
use crate::songeom::lie_dim;

/// Materialization limit on `dN` for [`FisherMatrix::materialize`].
pub const MAX_MATERIALIZED: usize = 3000;

/// Implicit `F = (1/d)(L ⊗ I_d)` over a plain or masked Laplacian.
#[derive(Clone, Debug)]
pub struct FisherMatrix {
    d: usize,
    laplacian: DMatrix<f64>,
    anchored: bool,
}

impl FisherMatrix {
    pub fn from_laplacian(d: usize, laplacian: DMatrix<f64>, anchored: bool) -> Self {
        Self {
            d,
            laplacian,
            anchored,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn is_anchored(&self) -> bool {
        self.anchored
    }

    /// `F·x` without forming the Kronecker product. Coordinates are ordered
    /// node-major: entry `i·d + a` is coordinate `a` of node `i`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, d) = (self.nodes(), self.d);
        if x.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a Fisher matrix of size {}",
                x.len(),
                n * d
            )));
        }
        // Reshape to N×d, multiply by L, reshape back.
        let xm = DMatrix::from_row_slice(n, d, x.as_slice());
        let y = &self.laplacian * xm / d as f64;
        Ok(DVector::from_iterator(
            n * d,
            (0..n)
                .flat_map(|i| (0..d).map(move |a| (i, a)))
                .map(|(i, a)| y[(i, a)]),
        ))
    }

    pub fn materialize(&self) -> Result<DMatrix<f64>> {
        let size = self.nodes() * self.d;
        if size > MAX_MATERIALIZED {
            return Err(Error::TooLarge(size, MAX_MATERIALIZED));
        }
        Ok(self.laplacian.kronecker(&DMatrix::identity(self.d, self.d)) / self.d as f64)
    }
}

fn check_anchored_posed(l: &WeightedLaplacian, anchors: &[usize]) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::IllPosed(
            "anchored bounds need at least one anchor".into(),
        ));
    }
    let free = l.unanchored_components(anchors);
    if free > 0 {
        return Err(Error::IllPosed(format!(
            "{free} connected component(s) contain no anchor"
        )));
    }
    Ok(())
}

fn check_connected(l: &WeightedLaplacian) -> Result<()> {
    if !l.is_connected() {
        return Err(Error::IllPosed(
            "anchor-free bounds need a connected measurement graph (with positive weights)".into(),
        ));
    }
    Ok(())
}

pub fn fisher_matrix(
    g: &MeasurementGraph,
    anchored: bool,
    spec: &QuadratureSpec,
) -> Result<FisherMatrix> {
    let l = build_laplacian(g, spec)?;
    let matrix = if anchored {
        check_anchored_posed(&l, g.anchors())?;
        mask_anchors(&l, g.anchors())?.matrix().clone()
    } else {
        check_connected(&l)?;
        l.matrix().clone()
    };
    Ok(FisherMatrix::from_laplacian(g.d(), matrix, anchored))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrbMode {
    Anchored,
    AnchorFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairBound {
    pub i: usize,
    pub j: usize,
    pub bound: f64,
}

/// Scalar functionals of the Cramér–Rao bound for one graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrbReport {
    pub mode: CrbMode,
    pub n: usize,
    pub nodes: usize,
    pub d: usize,
    pub anchors: Vec<usize>,
    /// Lower bound on the expected total squared distance.
    pub total: f64,
    /// Per-node lower bounds: `d²(L_A†)_ii` when anchored, `d²(L†)_ii`
    /// otherwise.
    pub per_node: Vec<f64>,
    /// `√(bound/2)`, the equivalent RMS rotation angle (n = 2, 3 only).
    pub per_node_rms_angle: Option<Vec<f64>>,
    pub pairs: Vec<PairBound>,
    /// Whether a curvature correction was applied.
    pub corrected: bool,
    /// Set when a correction was requested but none exists for this `n`.
    pub correction_unavailable: bool,
    pub snr: Option<f64>,
    /// Expected total squared error of a random estimator, `N'·V_n`.
    pub baseline: Option<f64>,
    /// The bound exceeds what any estimator achieves on the compact
    /// manifold, so the small-error regime assumed by the bound is violated.
    pub outside_validity: bool,
}

impl CrbReport {
    /// Count of non-anchored nodes (anchored) or `N − 1` (anchor-free).
    pub fn effective_nodes(&self) -> usize {
        match self.mode {
            CrbMode::Anchored => self.nodes - self.anchors.len(),
            CrbMode::AnchorFree => self.nodes - 1,
        }
    }
}

/// Variance `V_n = E dist²(Z, I)` of a Haar-uniform rotation.
pub fn baseline_variance(n: usize, spec: &QuadratureSpec) -> Result<f64> {
    match n {
        2 => Ok(2.0 * PI * PI / 3.0),
        3 => Ok(2.0 * PI * PI / 3.0 + 4.0),
        4 => weyl_integrate_angles(4, |a| 2.0 * (a[0] * a[0] + a[1] * a[1]), spec),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Per-node bound on the diagonal `x = (L_A†)_ii`.
fn node_bound(n: usize, d: usize, x: f64, corrected: bool) -> f64 {
    let d2 = (d * d) as f64;
    if corrected && n == 3 {
        d2 * (x - 0.5 * x * x)
    } else {
        d2 * x
    }
}

struct Finish<'a> {
    mode: CrbMode,
    g: &'a MeasurementGraph,
    diag: Vec<f64>,
    uncorrected_total: f64,
    pairs: Vec<PairBound>,
    corrected: bool,
}

fn finish(f: Finish<'_>, spec: &QuadratureSpec) -> Result<CrbReport> {
    let n = f.g.n();
    let d = lie_dim(n)?;
    let apply_correction = f.corrected && n == 3;
    let per_node: Vec<f64> = f
        .diag
        .iter()
        .map(|&x| node_bound(n, d, x, apply_correction))
        .collect();
    let total = if apply_correction {
        per_node.iter().sum()
    } else {
        f.uncorrected_total
    };
    let effective = match f.mode {
        CrbMode::Anchored => f.g.nodes() - f.g.anchors().len(),
        CrbMode::AnchorFree => f.g.nodes() - 1,
    } as f64;
    let baseline = match baseline_variance(n, spec) {
        Ok(v) => Some(effective * v),
        Err(Error::UnsupportedDimension(_)) => None,
        Err(e) => return Err(e),
    };
    let snr = baseline.map(|b| b / f.uncorrected_total);
    let rms = (n <= 3).then(|| per_node.iter().map(|b| (b.max(0.0) / 2.0).sqrt()).collect());
    Ok(CrbReport {
        mode: f.mode,
        n,
        nodes: f.g.nodes(),
        d,
        anchors: f.g.anchors().to_vec(),
        total,
        per_node,
        per_node_rms_angle: rms,
        pairs: f.pairs,
        corrected: f.corrected && n <= 3,
        correction_unavailable: f.corrected && n >= 4,
        snr,
        baseline,
        outside_validity: baseline.is_some_and(|b| total > b),
    })
}

/// Anchored bound. Per-node bounds are `d²(L_A†)_ii`; with `corrected` and
/// n = 3 they become `9(x − x²/2)` with `x = (L_A†)_ii`. For n = 2 the
/// correction is exactly zero.
pub fn crb_anchored(
    g: &MeasurementGraph,
    corrected: bool,
    spec: &QuadratureSpec,
) -> Result<CrbReport> {
    let l = build_laplacian(g, spec)?;
    check_anchored_posed(&l, g.anchors())?;
    let kernel = SpectralKernel::from_masked(&mask_anchors(&l, g.anchors())?)?;
    let diag = (0..g.nodes())
        .map(|i| kernel.anchored_diag(i))
        .collect::<Result<Vec<f64>>>()?;
    let d2 = (g.d() * g.d()) as f64;
    let uncorrected_total = d2 * diag.iter().sum::<f64>();
    finish(
        Finish {
            mode: CrbMode::Anchored,
            g,
            diag,
            uncorrected_total,
            pairs: Vec::new(),
            corrected,
        },
        spec,
    )
}

/// Anchor-free bound: total `d²·trace(L†)`, pair bounds `d²·ECTD(i, j)`.
/// Pair bounds are always uncorrected.
pub fn crb_anchorfree(
    g: &MeasurementGraph,
    corrected: bool,
    pairs: &[(usize, usize)],
    spec: &QuadratureSpec,
) -> Result<CrbReport> {
    let free = g.with_anchors(Vec::new())?;
    let l = build_laplacian(&free, spec)?;
    check_connected(&l)?;
    let kernel = SpectralKernel::from_laplacian(&l)?;
    let d2 = (g.d() * g.d()) as f64;
    let diag = (0..g.nodes())
        .map(|i| kernel.pinv_diag(i))
        .collect::<Result<Vec<f64>>>()?;
    let pairs = pairs
        .iter()
        .map(|&(i, j)| {
            Ok(PairBound {
                i,
                j,
                bound: d2 * kernel.ectd_quad(i, j)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(
        Finish {
            mode: CrbMode::AnchorFree,
            g: &free,
            uncorrected_total: d2 * kernel.trace_pinv(),
            diag,
            pairs,
            corrected,
        },
        spec,
    )
}

/// `SNR = N'·V_n / (d²·trace L†)` (anchor-free) or with `L_A` and
/// `N' = N − |A|` when `anchored`.
pub fn snr(g: &MeasurementGraph, anchored: bool, spec: &QuadratureSpec) -> Result<f64> {
    let l = build_laplacian(g, spec)?;
    let (trace, effective) = if anchored {
        check_anchored_posed(&l, g.anchors())?;
        let s = Spectrum::of_masked(&mask_anchors(&l, g.anchors())?)?;
        (s.trace_pinv(), g.nodes() - g.anchors().len())
    } else {
        check_connected(&l)?;
        (Spectrum::of_laplacian(&l)?.trace_pinv(), g.nodes() - 1)
    };
    let d2 = (g.d() * g.d()) as f64;
    Ok(effective as f64 * baseline_variance(g.n(), spec)? / (d2 * trace))
}

/// Minimum inlier probability `p_ε = d/(√a_{n,κ}·ε)·√(N/(2M))` for an
/// Erdős–Rényi-like graph with `N` nodes and `M` edges.
pub fn outlier_threshold(
    n: usize,
    kappa: f64,
    eps: f64,
    nodes: usize,
    edges: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(eps > 0.0) || edges == 0 {
        return Err(Error::InvalidArgument(
            "outlier threshold needs eps > 0 and at least one edge".into(),
        ));
    }
    let d = lie_dim(n)? as f64;
    let a = outlier_slope(n, kappa, spec)?;
    Ok(d / (a.sqrt() * eps) * (nodes as f64 / (2.0 * edges as f64)).sqrt())
}

/// Smallest inlier probability `p` for which the anchor-free bound on the
/// mean squared error `d²·trace(L†)/(N − 1)` reaches `eps²`, when every edge
/// of the given topology carries `LangevinOutlier(κ, p)`.
///
/// `unit_trace` is `trace(L†)` of the unit-weight Laplacian of the graph.
pub fn trace_based_threshold(
    n: usize,
    kappa: f64,
    eps: f64,
    nodes: usize,
    unit_trace: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(eps > 0.0) || nodes < 2 {
        return Err(Error::InvalidArgument(
            "trace-based threshold needs eps > 0 and two nodes".into(),
        ));
    }
    let d = lie_dim(n)? as f64;
    let needed = d * d * unit_trace / ((nodes - 1) as f64 * eps * eps);
    let weight = |p: f64| info_weight(&NoiseModel::langevin_outlier(n, kappa, p)?, spec);
    if weight(1.0)? < needed {
        return Err(Error::IllPosed(format!(
            "even outlier-free measurements (p = 1) do not reach eps = {eps}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if weight(mid)? >= needed {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
