//! Commute-time (ECTD) embeddings of measurement graphs for plotting.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::crb::{CrbMode, CrbReport};
use crate::error::{Error, Result};
use crate::graphcore::{KernelSource, SpectralKernel};

/// Node coordinates `X = (Λ†)^{1/2}Vᵀ`, truncated to the leading `dim` axes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Embedding {
    /// `N × dim`, one row per node.
    #[serde(serialize_with = "rows")]
    pub coords: DMatrix<f64>,
    pub dim: usize,
    /// Share of `trace(L†)` captured by the kept axes.
    pub explained_ratio: f64,
    pub anchors: Vec<usize>,
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl Embedding {
    pub fn nodes(&self) -> usize {
        self.coords.nrows()
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        (self.coords.row(i) - self.coords.row(j)).norm_squared()
    }
}

const TIE_TOL: f64 = 1e-9;

fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best.0
}

/// Embeds the nodes so that squared Euclidean distances in full dimension
/// equal the commute-time quadratic forms of the kernel.
///
/// Axes are ordered by decreasing `1/λ`; among numerically equal eigenvalues
/// by the index of each eigenvector's largest-magnitude entry. Each axis is
/// signed so that its largest-magnitude entry is positive.
pub fn ectd_embed(kernel: &SpectralKernel, dim: usize) -> Result<Embedding> {
    let inv = kernel.pinv_eigenvalues();
    let rank = kernel.rank();
    if dim == 0 || dim > rank {
        return Err(Error::EmbeddingDimension {
            requested: dim,
            rank,
        });
    }
    let v = kernel.eigenvectors();
    let mut axes: Vec<(usize, f64, usize)> = (0..kernel.nodes())
        .filter(|&k| inv[k] > 0.0)
        .map(|k| (k, inv[k], argmax_abs(v.column(k).iter().copied())))
        .collect();
    axes.sort_by(|a, b| {
        let close = (a.1 - b.1).abs() <= TIE_TOL * a.1.max(b.1);
        if close {
            a.2.cmp(&b.2)
        } else {
            b.1.total_cmp(&a.1)
        }
    });
    let total: f64 = axes.iter().map(|a| a.1).sum();
    let kept = &axes[..dim];
    let mut coords = DMatrix::zeros(kernel.nodes(), dim);
    for (c, &(k, li, peak)) in kept.iter().enumerate() {
        let sign = if v[(peak, k)] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * li.sqrt();
        for r in 0..kernel.nodes() {
            coords[(r, c)] = scale * v[(r, k)];
        }
    }
    let anchors = match kernel.source() {
        KernelSource::Plain => Vec::new(),
        KernelSource::Masked { anchors } => anchors.clone(),
    };
    for &a in &anchors {
        coords.row_mut(a).fill(0.0);
    }
    Ok(Embedding {
        coords,
        dim,
        explained_ratio: kept.iter().map(|a| a.1).sum::<f64>() / total,
        anchors,
    })
}

/// Marker areas proportional to each node's anchored lower bound.
pub fn node_marker_sizes(report: &CrbReport) -> Result<Vec<f64>> {
    match report.mode {
        CrbMode::Anchored => Ok(report.per_node.clone()),
        CrbMode::AnchorFree => Err(Error::InvalidArgument(
            "marker sizes need an anchored report; use pair bounds for anchor-free graphs".into(),
        )),
    }
}
