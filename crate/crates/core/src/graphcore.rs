//! Measurement graphs, information-weighted Laplacians and their spectral
//! kernels.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::noise::{info_weight, NoiseModel, QuadratureSpec};
use crate::songeom::lie_dim;

/// Largest node count handled by the dense eigensolver.
pub const MAX_DENSE_NODES: usize = 5000;

/// One measurement edge, stored with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub model: NoiseModel,
}

/// Undirected measurement graph with per-edge noise models and anchors.
/// Nodes are indexed from 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGraph {
    nodes: usize,
    n: usize,
    edges: Vec<Edge>,
    anchors: Vec<usize>,
}

impl MeasurementGraph {
    pub fn new(
        nodes: usize,
        n: usize,
        edges: Vec<(usize, usize, NoiseModel)>,
        anchors: Vec<usize>,
    ) -> Result<Self> {
        lie_dim(n)?;
        if nodes == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut stored = Vec::with_capacity(edges.len());
        for (i, j, model) in edges {
            if i >= nodes {
                return Err(Error::InvalidNode(i));
            }
            if j >= nodes {
                return Err(Error::InvalidNode(j));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if model.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({i}, {j}) carries a model on SO({}) in a graph on SO({n})",
                    model.n()
                )));
            }
            let (i, j) = (i.min(j), i.max(j));
            if !seen.insert((i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(Edge { i, j, model });
        }
        let mut g = Self {
            nodes,
            n,
            edges: stored,
            anchors: Vec::new(),
        };
        g.set_anchors(anchors)?;
        Ok(g)
    }

    /// Same graph with a different anchor set.
    pub fn with_anchors(&self, anchors: Vec<usize>) -> Result<Self> {
        let mut g = self.clone();
        g.set_anchors(anchors)?;
        Ok(g)
    }

    fn set_anchors(&mut self, mut anchors: Vec<usize>) -> Result<()> {
        if let Some(&bad) = anchors.iter().find(|&&a| a >= self.nodes) {
            return Err(Error::InvalidNode(bad));
        }
        anchors.sort_unstable();
        anchors.dedup();
        self.anchors = anchors;
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Rotation dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Manifold dimension `n(n−1)/2` of each node.
    pub fn d(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn is_anchor(&self, i: usize) -> bool {
        self.anchors.binary_search(&i).is_ok()
    }

    /// Laplacian of the topology alone, with every edge at weight 1.
    pub fn unit_laplacian(&self) -> WeightedLaplacian {
        let edges: Vec<(usize, usize, f64)> = self.edges.iter().map(|e| (e.i, e.j, 1.0)).collect();
        WeightedLaplacian::from_weights(self.nodes, &edges).expect("edges were validated")
    }

    /// Distinct noise models, in order of first appearance.
    pub fn distinct_models(&self) -> Vec<NoiseModel> {
        let mut models: Vec<NoiseModel> = Vec::new();
        for e in &self.edges {
            if !models.contains(&e.model) {
                models.push(e.model);
            }
        }
        models
    }
}

/// Dense weighted Laplacian `L = D − A`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedLaplacian {
    matrix: DMatrix<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedLaplacian {
    /// Laplacian of explicitly weighted edges (0-based, any orientation).
    pub fn from_weights(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut matrix = DMatrix::zeros(nodes, nodes);
        let mut stored = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i >= nodes || j >= nodes {
                return Err(Error::InvalidNode(i.max(j)));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has invalid weight {w}"
                )));
            }
            matrix[(i, j)] -= w;
            matrix[(j, i)] -= w;
            matrix[(i, i)] += w;
            matrix[(j, j)] += w;
            stored.push((i.min(j), i.max(j), w));
        }
        Ok(Self {
            matrix,
            edges: stored,
        })
    }

    pub fn nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Edge weights in the order the edges were given.
    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.2).collect()
    }

    pub fn weighted_edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Connected-component label of every node, counting only edges with
    /// positive weight.
    pub fn components(&self) -> Vec<usize> {
        let n = self.nodes();
        let mut uf = UnionFind::<usize>::new(n);
        for &(i, j, w) in &self.edges {
            if w > 0.0 {
                uf.union(i, j);
            }
        }
        uf.into_labeling()
    }

    pub fn is_connected(&self) -> bool {
        let labels = self.components();
        labels.iter().all(|&l| l == labels[0])
    }

    /// Number of connected components that contain no anchor.
    pub fn unanchored_components(&self, anchors: &[usize]) -> usize {
        let labels = self.components();
        let anchored: HashSet<usize> = anchors.iter().map(|&a| labels[a]).collect();
        let all: HashSet<usize> = labels.iter().copied().collect();
        all.difference(&anchored).count()
    }
}

/// Builds the Laplacian of `g` with information weights from each edge's
/// noise model. Weights are computed once per distinct model.
pub fn build_laplacian(g: &MeasurementGraph, spec: &QuadratureSpec) -> Result<WeightedLaplacian> {
    let models = g.distinct_models();
    let weights = models
        .iter()
        .map(|m| info_weight(m, spec))
        .collect::<Result<Vec<f64>>>()?;
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .map(|e| {
            let k = models
                .iter()
                .position(|m| *m == e.model)
                .expect("model listed");
            (e.i, e.j, weights[k])
        })
        .collect();
    WeightedLaplacian::from_weights(g.nodes(), &edges)
}

/// Laplacian with anchor rows and columns set to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedLaplacian {
    matrix: DMatrix<f64>,
    anchors: Vec<usize>,
}

impl MaskedLaplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn nodes(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn mask_anchors(l: &WeightedLaplacian, anchors: &[usize]) -> Result<MaskedLaplacian> {
    let n = l.nodes();
    if let Some(&bad) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::InvalidNode(bad));
    }
    let mut anchors = anchors.to_vec();
    anchors.sort_unstable();
    anchors.dedup();
    let mut matrix = l.matrix.clone();
    for &a in &anchors {
        matrix.row_mut(a).fill(0.0);
        matrix.column_mut(a).fill(0.0);
    }
    Ok(MaskedLaplacian { matrix, anchors })
}

/// Which matrix a kernel was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelSource {
    Plain,
    Masked { anchors: Vec<usize> },
}

/// Eigendecomposition `L = V·diag(λ)·Vᵀ` with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct SpectralKernel {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    cutoff: f64,
    source: KernelSource,
}

fn check_size(nodes: usize) -> Result<()> {
    if nodes > MAX_DENSE_NODES {
        return Err(Error::TooLarge(nodes, MAX_DENSE_NODES));
    }
    Ok(())
}

fn sorted_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    if m.is_empty() {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn rank_cutoff(nodes: usize, values: &DVector<f64>) -> f64 {
    let lmax = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    nodes as f64 * f64::EPSILON * lmax
}

impl SpectralKernel {
    pub fn from_laplacian(l: &WeightedLaplacian) -> Result<Self> {
        check_size(l.nodes())?;
        let (eigenvalues, eigenvectors) = sorted_eigen(l.matrix.clone());
        let cutoff = rank_cutoff(l.nodes(), &eigenvalues);
        Ok(Self {
            eigenvalues,
            eigenvectors,
            cutoff,
            source: KernelSource::Plain,
        })
    }

    /// Decomposes only the free block so that anchor rows of every derived
    /// quantity are exactly zero.
    pub fn from_masked(l: &MaskedLaplacian) -> Result<Self> {
        let nodes = l.nodes();
        check_size(nodes)?;
        let free: Vec<usize> = (0..nodes)
            .filter(|i| l.anchors.binary_search(i).is_err())
            .collect();
        let block = DMatrix::from_fn(free.len(), free.len(), |r, c| l.matrix[(free[r], free[c])]);
        let (bvals, bvecs) = sorted_eigen(block);
        let mut values = Vec::with_capacity(nodes);
        let mut vectors = DMatrix::zeros(nodes, nodes);
        for (col, &a) in l.anchors.iter().enumerate() {
            values.push(0.0);
            vectors[(a, col)] = 1.0;
        }
        let offset = l.anchors.len();
        for k in 0..free.len() {
            values.push(bvals[k]);
            for (r, &i) in free.iter().enumerate() {
                vectors[(i, offset + k)] = bvecs[(r, k)];
            }
        }
        // Anchor columns carry eigenvalue 0; merge them into ascending order.
        let mut order: Vec<usize> = (0..nodes).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = DVector::from_iterator(nodes, order.iter().map(|&k| values[k]));
        let eigenvectors = DMatrix::from_fn(nodes, nodes, |r, c| vectors[(r, order[c])]);
        let cutoff = rank_cutoff(nodes, &eigenvalues);
        Ok(Self {
            eigenvalues,
            eigenvectors,
            cutoff,
            source: KernelSource::Masked {
                anchors: l.anchors.clone(),
            },
        })
    }

    pub fn nodes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn source(&self) -> &KernelSource {
        &self.source
    }

    fn is_nonzero(&self, k: usize) -> bool {
        self.eigenvalues[k] > self.cutoff
    }

    pub fn rank(&self) -> usize {
        (0..self.nodes()).filter(|&k| self.is_nonzero(k)).count()
    }

    pub fn nullity(&self) -> usize {
        self.nodes() - self.rank()
    }

    /// Pseudoinverse eigenvalues `1/λ` (0 below the cutoff).
    pub fn pinv_eigenvalues(&self) -> DVector<f64> {
        DVector::from_fn(self.nodes(), |k, _| {
            if self.is_nonzero(k) {
                1.0 / self.eigenvalues[k]
            } else {
                0.0
            }
        })
    }

    /// Dense Moore–Penrose pseudoinverse.
    pub fn pinv(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        let inv = self.pinv_eigenvalues();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= inv[k];
        }
        scaled * v.transpose()
    }

    /// Reconstruction `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    pub fn trace_pinv(&self) -> f64 {
        self.pinv_eigenvalues().sum()
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.nodes() {
            return Err(Error::InvalidNode(i));
        }
        Ok(())
    }

    /// `(L†)_ii`.
    pub fn pinv_diag(&self, i: usize) -> Result<f64> {
        self.check_node(i)?;
        let inv = self.pinv_eigenvalues();
        Ok((0..self.nodes())
            .map(|k| inv[k] * self.eigenvectors[(i, k)].powi(2))
            .sum())
    }

    /// `(L_A†)_ii` on a masked kernel; anchors give exactly 0.
    pub fn anchored_diag(&self, i: usize) -> Result<f64> {
        let KernelSource::Masked { anchors } = &self.source else {
            return Err(Error::InvalidSource("expected a masked Laplacian kernel"));
        };
        self.check_node(i)?;
        if anchors.binary_search(&i).is_ok() {
            return Ok(0.0);
        }
        self.pinv_diag(i)
    }

    /// `(e_i − e_j)ᵀ L† (e_i − e_j)`.
    pub fn ectd_quad(&self, i: usize, j: usize) -> Result<f64> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "commute-time distance needs distinct nodes, got {i} twice"
            )));
        }
        let inv = self.pinv_eigenvalues();
        Ok((0..self.nodes())
            .map(|k| inv[k] * (self.eigenvectors[(i, k)] - self.eigenvectors[(j, k)]).powi(2))
            .sum())
    }

    /// Second-smallest eigenvalue of a plain Laplacian (0 when disconnected).
    pub fn fiedler_value(&self) -> Result<f64> {
        self.require_plain()?;
        if self.nodes() < 2 {
            return Err(Error::InvalidGraph("Fiedler value needs two nodes".into()));
        }
        Ok(if self.is_nonzero(1) {
            self.eigenvalues[1]
        } else {
            0.0
        })
    }

    /// Unit eigenvector of the Fiedler value.
    pub fn fiedler_vector(&self) -> Result<DVector<f64>> {
        self.require_plain()?;
        if self.nodes() < 2 {
            return Err(Error::InvalidGraph("Fiedler vector needs two nodes".into()));
        }
        Ok(self.eigenvectors.column(1).into_owned())
    }

    fn require_plain(&self) -> Result<()> {
        match self.source {
            KernelSource::Plain => Ok(()),
            KernelSource::Masked { .. } => {
                Err(Error::InvalidSource("expected a plain Laplacian kernel"))
            }
        }
    }
}

/// Eigenvalues only, for trace queries on large graphs where eigenvectors
/// are not needed.
#[derive(Clone, Debug)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    cutoff: f64,
}

impl Spectrum {
    pub fn of_laplacian(l: &WeightedLaplacian) -> Result<Self> {
        Self::of_matrix(l.matrix.clone())
    }

    pub fn of_masked(l: &MaskedLaplacian) -> Result<Self> {
        let free: Vec<usize> = (0..l.nodes())
            .filter(|i| l.anchors.binary_search(i).is_err())
            .collect();
        let block = DMatrix::from_fn(free.len(), free.len(), |r, c| l.matrix[(free[r], free[c])]);
        let mut s = Self::of_matrix(block)?;
        s.cutoff = rank_cutoff(l.nodes(), &s.eigenvalues);
        Ok(s)
    }

    fn of_matrix(m: DMatrix<f64>) -> Result<Self> {
        check_size(m.nrows())?;
        let nodes = m.nrows();
        if nodes == 0 {
            return Ok(Self {
                eigenvalues: DVector::zeros(0),
                cutoff: 0.0,
            });
        }
        let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(|a, b| a.total_cmp(b));
        let eigenvalues = DVector::from_vec(values);
        let cutoff = rank_cutoff(nodes, &eigenvalues);
        Ok(Self {
            eigenvalues,
            cutoff,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn trace_pinv(&self) -> f64 {
        self.eigenvalues
            .iter()
            .filter(|&&l| l > self.cutoff)
            .map(|l| 1.0 / l)
            .sum()
    }
}
