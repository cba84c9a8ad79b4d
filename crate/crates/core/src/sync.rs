//! Monte Carlo validation: synthetic problems, the spectral (eigenvector)
//! estimator, error evaluation and experiment aggregation.
//!
//! Trial `t` of an experiment seeded with `s` draws everything from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `t`, so results do not depend
//! on scheduling. Aggregation sums in trial order.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crb::{crb_anchored, crb_anchorfree, CrbReport};
use crate::error::{Error, Result};
use crate::graphcore::MeasurementGraph;
use crate::noise::{sample_uniform, NoiseModel, QuadratureSpec, Sampler};
use crate::par::{map_indexed, Parallelism};
use crate::songeom::{
    align_quotient, geodesic_dist_saturating, project_to_so, Rotation, RotationTuple,
};

/// Random stream for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// How measurements are generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Draw `Z_ij` from each edge's noise model.
    #[default]
    Sampled,
    /// `Z_ij = I` on every edge.
    Noiseless,
}

/// Ground truth for synthesized problems.
#[derive(Clone, Debug, PartialEq)]
pub enum TruthSource {
    /// Haar-uniform rotations, drawn per instance.
    Random,
    Given(RotationTuple),
}

/// A measurement graph together with ground truth and one draw of
/// measurements `H_ij = Z_ij·R_i·R_jᵀ`, stored for `i < j` in edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub graph: MeasurementGraph,
    pub truth: RotationTuple,
    pub measurements: Vec<Rotation>,
    pub seed: u64,
}

impl ProblemInstance {
    /// `H_ij`, with `H_ji = H_ijᵀ` derived on demand.
    pub fn measurement(&self, i: usize, j: usize) -> Option<Rotation> {
        let (a, b) = (i.min(j), i.max(j));
        let k = self
            .graph
            .edges()
            .iter()
            .position(|e| e.i == a && e.j == b)?;
        let h = &self.measurements[k];
        Some(if i < j { h.clone() } else { h.transpose() })
    }
}

/// Samplers for each distinct model of a graph, reusable across trials.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    graph: MeasurementGraph,
    models: Vec<NoiseModel>,
    samplers: Vec<Sampler>,
}

impl Synthesizer {
    pub fn new(graph: &MeasurementGraph) -> Result<Self> {
        let models = graph.distinct_models();
        let samplers = models
            .iter()
            .map(Sampler::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph: graph.clone(),
            models,
            samplers,
        })
    }

    pub fn instance<R: Rng + ?Sized>(
        &self,
        truth: &TruthSource,
        mode: MeasurementMode,
        rng: &mut R,
        seed: u64,
    ) -> Result<ProblemInstance> {
        let g = &self.graph;
        let truth = match truth {
            TruthSource::Random => RotationTuple::new(
                (0..g.nodes())
                    .map(|_| sample_uniform(g.n(), rng))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            TruthSource::Given(t) => {
                if t.len() != g.nodes() || t.n() != g.n() {
                    return Err(Error::DimensionMismatch(format!(
                        "truth has {} rotations in SO({}), graph has {} nodes in SO({})",
                        t.len(),
                        t.n(),
                        g.nodes(),
                        g.n()
                    )));
                }
                t.clone()
            }
        };
        let mut measurements = Vec::with_capacity(g.edges().len());
        for e in g.edges() {
            let rel = truth.get(e.i) * &truth.get(e.j).transpose();
            let h = match mode {
                MeasurementMode::Noiseless => rel,
                MeasurementMode::Sampled => {
                    let k = self
                        .models
                        .iter()
                        .position(|m| *m == e.model)
                        .expect("model listed");
                    &self.samplers[k].sample(rng)? * &rel
                }
            };
            measurements.push(h);
        }
        Ok(ProblemInstance {
            graph: g.clone(),
            truth,
            measurements,
            seed,
        })
    }
}

/// Synthesizes one problem instance from `seed`.
pub fn synthesize(
    g: &MeasurementGraph,
    truth: &TruthSource,
    mode: MeasurementMode,
    seed: u64,
) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Synthesizer::new(g)?.instance(truth, mode, &mut rng, seed)
}

/// Output of the spectral estimator.
#[derive(Clone, Debug)]
pub struct SpectralEstimate {
    pub rotations: RotationTuple,
    /// Blocks whose projection onto SO(n) was degenerate and resolved by
    /// the fixed tie-break.
    pub ambiguous_blocks: usize,
}

fn topology_connected(g: &MeasurementGraph) -> bool {
    g.unit_laplacian().is_connected()
}

/// Eigenvector method: top-`n` eigenvectors of the `nN × nN` measurement
/// matrix, one block per node, each projected onto SO(n). In anchored mode
/// the estimate is rotated to best fit the anchors, which are then reset to
/// their true values.
pub fn eig_sync(inst: &ProblemInstance, anchored: bool) -> Result<SpectralEstimate> {
    let g = &inst.graph;
    let (n, nodes) = (g.n(), g.nodes());
    if !topology_connected(g) {
        return Err(Error::IllPosed(
            "the measurement graph is disconnected".into(),
        ));
    }
    if anchored && g.anchors().is_empty() {
        return Err(Error::IllPosed(
            "anchored estimation needs an anchor".into(),
        ));
    }
    let mut m = DMatrix::zeros(n * nodes, n * nodes);
    for (e, h) in g.edges().iter().zip(&inst.measurements) {
        m.view_mut((e.i * n, e.j * n), (n, n)).copy_from(h.matrix());
        m.view_mut((e.j * n, e.i * n), (n, n))
            .copy_from(&h.matrix().transpose());
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n * nodes).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut v = DMatrix::from_fn(n * nodes, n, |r, c| eig.eigenvectors[(r, order[c])]);

    // The eigenvectors recover the truth up to O(n); flip one column when
    // most blocks are reflections.
    let negative = (0..nodes)
        .filter(|&i| v.view((i * n, 0), (n, n)).determinant() < 0.0)
        .count();
    if 2 * negative > nodes {
        v.column_mut(n - 1).neg_mut();
    }

    let mut ambiguous_blocks = 0;
    let mut blocks = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let (r, amb) = project_to_so(&v.view((i * n, 0), (n, n)).into_owned());
        ambiguous_blocks += amb as usize;
        blocks.push(r);
    }
    if anchored {
        let mut sum = DMatrix::zeros(n, n);
        for &a in g.anchors() {
            sum += blocks[a].matrix().transpose() * inst.truth.get(a).matrix();
        }
        let (q, amb) = project_to_so(&sum);
        ambiguous_blocks += amb as usize;
        for b in blocks.iter_mut() {
            *b = &*b * &q;
        }
        for &a in g.anchors() {
            blocks[a] = inst.truth.get(a).clone();
        }
    }
    Ok(SpectralEstimate {
        rotations: RotationTuple::new(blocks)?,
        ambiguous_blocks,
    })
}

/// Errors of one estimate against the truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub estimator: String,
    /// Squared distance per node (after alignment when anchor-free).
    pub per_node: Vec<f64>,
    pub total: f64,
    /// Squared relative errors `dist²(R_iR_jᵀ, R̂_iR̂_jᵀ)` on requested pairs.
    pub pairs: Vec<f64>,
    /// Number of distances evaluated within the cut-locus tolerance.
    pub saturated: usize,
    /// Anchor-free alignment did not converge and its best iterate was used.
    pub alignment_unconverged: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub fn evaluate(
    inst: &ProblemInstance,
    est: &RotationTuple,
    anchored: bool,
    pairs: &[(usize, usize)],
) -> Result<TrialResult> {
    let truth = &inst.truth;
    if est.len() != truth.len() || est.n() != truth.n() {
        return Err(Error::DimensionMismatch(
            "estimate and truth have different shapes".into(),
        ));
    }
    for &(i, j) in pairs {
        if i >= truth.len() || j >= truth.len() {
            return Err(Error::InvalidNode(i.max(j)));
        }
    }
    let mut alignment_unconverged = false;
    let aligned = if anchored {
        est.clone()
    } else {
        let q = match align_quotient(truth, est) {
            Ok(a) => a.q,
            Err(Error::Convergence { best, .. }) => {
                alignment_unconverged = true;
                *best
            }
            Err(e) => return Err(e),
        };
        est.right_mul(&q)
    };
    let mut saturated = 0;
    let per_node: Vec<f64> = truth
        .items()
        .iter()
        .zip(aligned.items())
        .enumerate()
        .map(|(k, (r, rh))| {
            // anchors are pinned to the truth, so their error is exactly zero
            if anchored && inst.graph.is_anchor(k) {
                return 0.0;
            }
            let (d, sat) = geodesic_dist_saturating(r, rh);
            saturated += sat as usize;
            d * d
        })
        .collect();
    let pair_errors: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            let rel = truth.get(i) * &truth.get(j).transpose();
            let rel_hat = est.get(i) * &est.get(j).transpose();
            let (d, sat) = geodesic_dist_saturating(&rel, &rel_hat);
            saturated += sat as usize;
            d * d
        })
        .collect();
    Ok(TrialResult {
        estimator: "eig".into(),
        total: per_node.iter().sum(),
        per_node,
        pairs: pair_errors,
        saturated,
        alignment_unconverged,
        wall_time_s: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed: u64,
    pub anchored: bool,
    pub corrected: bool,
    pub pairs: Vec<(usize, usize)>,
    pub mode: MeasurementMode,
    pub truth: TruthSource,
    pub parallelism: Parallelism,
    pub quadrature: QuadratureSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            anchored: false,
            corrected: false,
            pairs: Vec::new(),
            mode: MeasurementMode::Sampled,
            truth: TruthSource::Random,
            parallelism: Parallelism::default(),
            quadrature: QuadratureSpec::default(),
        }
    }
}

/// Averages over trials next to the Cramér–Rao bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub trials: usize,
    pub seed: u64,
    pub estimator: String,
    /// Mean total squared error `E dist²(R, R̂)`.
    pub mean_total: f64,
    pub stderr_total: f64,
    /// Mean total squared error divided by the effective node count.
    pub mse: f64,
    pub mean_per_node: Vec<f64>,
    pub stderr_per_node: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub mean_pairs: Vec<f64>,
    pub stderr_pairs: Vec<f64>,
    pub crb: CrbReport,
    /// Random-estimator total `N'·V_n`.
    pub baseline: Option<f64>,
    pub outside_validity: bool,
    pub saturated: usize,
    pub unconverged_alignments: usize,
    pub ambiguous_projections: usize,
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, f64) {
    let c = count as f64;
    let mean = values.clone().sum::<f64>() / c;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (c - 1.0);
    (mean, (var / c).sqrt())
}

/// Runs `config.trials` independent trials of synthesize → eig_sync →
/// evaluate and aggregates them against the bound.
pub fn run_experiment(g: &MeasurementGraph, config: &ExperimentConfig) -> Result<Aggregate> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument(
            "at least one trial is required".into(),
        ));
    }
    let crb = if config.anchored {
        crb_anchored(g, config.corrected, &config.quadrature)?
    } else {
        crb_anchorfree(g, config.corrected, &config.pairs, &config.quadrature)?
    };
    let synth = Synthesizer::new(g)?;
    let results = map_indexed(config.trials, config.parallelism, |t| {
        let start = Instant::now();
        let mut rng = trial_rng(config.seed, t as u64);
        let inst = synth.instance(&config.truth, config.mode, &mut rng, config.seed)?;
        let est = eig_sync(&inst, config.anchored)?;
        let mut r = evaluate(&inst, &est.rotations, config.anchored, &config.pairs)?;
        r.wall_time_s = start.elapsed().as_secs_f64();
        Ok((r, est.ambiguous_blocks))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let count = results.len();
    let (mean_total, stderr_total) = mean_and_stderr(results.iter().map(|r| r.0.total), count);
    let (mean_per_node, stderr_per_node) = (0..g.nodes())
        .map(|i| mean_and_stderr(results.iter().map(move |r| r.0.per_node[i]), count))
        .unzip();
    let (mean_pairs, stderr_pairs) = (0..config.pairs.len())
        .map(|k| mean_and_stderr(results.iter().map(move |r| r.0.pairs[k]), count))
        .unzip();
    let effective = crb.effective_nodes().max(1) as f64;
    Ok(Aggregate {
        trials: count,
        seed: config.seed,
        estimator: "eig".into(),
        mean_total,
        stderr_total,
        mse: mean_total / effective,
        mean_per_node,
        stderr_per_node,
        pairs: config.pairs.clone(),
        mean_pairs,
        stderr_pairs,
        baseline: crb.baseline,
        outside_validity: crb.outside_validity,
        crb,
        saturated: results.iter().map(|r| r.0.saturated).sum(),
        unconverged_alignments: results.iter().filter(|r| r.0.alignment_unconverged).count(),
        ambiguous_projections: results.iter().map(|r| r.1).sum(),
    })
}

/// Random graph families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphModel {
    Complete,
    ErdosRenyi {
        q: f64,
    },
    /// `k` near-equal clusters of consecutive nodes; edges appear with
    /// probability `p_in` inside a cluster and `p_out` across.
    Clustered {
        k: usize,
        p_in: f64,
        p_out: f64,
    },
}

const MAX_RESAMPLES: usize = 100;

/// Draws a graph whose every edge carries `noise`. With `require_connected`
/// the draw is repeated (up to 100 times) until the topology is connected.
pub fn random_graph(
    model: GraphModel,
    nodes: usize,
    noise: NoiseModel,
    seed: u64,
    require_connected: bool,
) -> Result<MeasurementGraph> {
    let check_prob = |p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "edge probability {p} outside [0, 1]"
            )))
        }
    };
    match model {
        GraphModel::Complete => {}
        GraphModel::ErdosRenyi { q } => check_prob(q)?,
        GraphModel::Clustered { k, p_in, p_out } => {
            check_prob(p_in)?;
            check_prob(p_out)?;
            if k == 0 || k > nodes {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {nodes} nodes into {k} clusters"
                )));
            }
        }
    }
    let cluster = |i: usize, k: usize| i * k / nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let mut edges = Vec::new();
        for i in 0..nodes {
            for j in (i + 1)..nodes {
                let keep = match model {
                    GraphModel::Complete => true,
                    GraphModel::ErdosRenyi { q } => rng.random::<f64>() < q,
                    GraphModel::Clustered { k, p_in, p_out } => {
                        let p = if cluster(i, k) == cluster(j, k) {
                            p_in
                        } else {
                            p_out
                        };
                        rng.random::<f64>() < p
                    }
                };
                if keep {
                    edges.push((i, j, noise));
                }
            }
        }
        let g = MeasurementGraph::new(nodes, noise.n(), edges, Vec::new())?;
        if !require_connected || topology_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::IllPosed(format!(
        "no connected sample in {MAX_RESAMPLES} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::songeom::exp_map;
    use crate::TangentVector;

    fn k_graph(nodes: usize, model: NoiseModel) -> MeasurementGraph {
        random_graph(GraphModel::Complete, nodes, model, 0, false).unwrap()
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let g = k_graph(5, NoiseModel::langevin(3, 2.0).unwrap());
        let inst = synthesize(&g, &TruthSource::Random, MeasurementMode::Noiseless, 3).unwrap();
        for (e, h) in g.edges().iter().zip(&inst.measurements) {
            let expected = inst.truth.get(e.i) * &inst.truth.get(e.j).transpose();
            assert_eq!(h, &expected);
        }
        let h10 = inst.measurement(1, 0).unwrap();
        assert_eq!(h10, inst.measurement(0, 1).unwrap().transpose());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let g = k_graph(6, NoiseModel::langevin_outlier(3, 2.0, 0.5).unwrap());
        let a = synthesize(&g, &TruthSource::Random, MeasurementMode::Sampled, 11).unwrap();
        let b = synthesize(&g, &TruthSource::Random, MeasurementMode::Sampled, 11).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&g, &TruthSource::Random, MeasurementMode::Sampled, 12).unwrap();
        assert_ne!(a.measurements, c.measurements);
    }

    #[test]
    fn eig_recovers_noiseless_truth() {
        for n in [2, 3, 4] {
            let g = k_graph(8, NoiseModel::langevin(n, 2.0).unwrap());
            let inst = synthesize(&g, &TruthSource::Random, MeasurementMode::Noiseless, 5).unwrap();
            let est = eig_sync(&inst, false).unwrap();
            let a = align_quotient(&inst.truth, &est.rotations).unwrap();
            assert!(a.dist < 1e-6, "n={n}: {}", a.dist);
            let anchored = g.with_anchors(vec![2]).unwrap();
            let inst = ProblemInstance {
                graph: anchored,
                ..inst
            };
            let est = eig_sync(&inst, true).unwrap();
            let r = evaluate(&inst, &est.rotations, true, &[]).unwrap();
            assert!(r.total < 1e-10);
            assert_eq!(r.per_node[2], 0.0);
        }
    }

    #[test]
    fn evaluate_examples() {
        let truth = RotationTuple::identity(3, 2);
        let g = MeasurementGraph::new(
            3,
            2,
            vec![
                (0, 1, NoiseModel::uniform(2).unwrap()),
                (1, 2, NoiseModel::uniform(2).unwrap()),
            ],
            vec![0],
        )
        .unwrap();
        let inst = ProblemInstance {
            graph: g,
            measurements: vec![Rotation::identity(2); 2],
            truth: truth.clone(),
            seed: 0,
        };
        let r = evaluate(&inst, &truth, true, &[(0, 2)]).unwrap();
        assert_eq!(r.total, 0.0);
        let theta = 0.4;
        let est = RotationTuple::new(vec![
            Rotation::identity(2),
            Rotation::planar(theta),
            Rotation::identity(2),
        ])
        .unwrap();
        let r = evaluate(&inst, &est, true, &[]).unwrap();
        assert!((r.per_node[1] - 2.0 * theta * theta).abs() < 1e-14);
    }

    #[test]
    fn pair_errors_are_gauge_invariant() {
        let g = k_graph(5, NoiseModel::langevin(3, 3.0).unwrap());
        let inst = synthesize(&g, &TruthSource::Random, MeasurementMode::Sampled, 1).unwrap();
        let est = eig_sync(&inst, false).unwrap().rotations;
        let q = exp_map(
            &Rotation::identity(3),
            &TangentVector::from_coordinates(3, &[0.4, -1.0, 0.3]).unwrap(),
        )
        .unwrap();
        let pairs = [(0, 1), (2, 4)];
        let a = evaluate(&inst, &est, false, &pairs).unwrap();
        let b = evaluate(&inst, &est.right_mul(&q), false, &pairs).unwrap();
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.total - b.total).abs() < 1e-8);
    }

    #[test]
    fn single_trial_matches_direct_evaluation() {
        let g = k_graph(6, NoiseModel::langevin(2, 4.0).unwrap());
        let config = ExperimentConfig {
            trials: 1,
            seed: 9,
            ..ExperimentConfig::default()
        };
        let agg = run_experiment(&g, &config).unwrap();
        let synth = Synthesizer::new(&g).unwrap();
        let mut rng = trial_rng(9, 0);
        let inst = synth
            .instance(&TruthSource::Random, MeasurementMode::Sampled, &mut rng, 9)
            .unwrap();
        let est = eig_sync(&inst, false).unwrap();
        let r = evaluate(&inst, &est.rotations, false, &[]).unwrap();
        assert_eq!(agg.mean_total, r.total);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let g = k_graph(10, NoiseModel::langevin_outlier(3, 4.0, 0.8).unwrap());
        let base = ExperimentConfig {
            trials: 12,
            seed: 4,
            pairs: vec![(0, 3)],
            ..ExperimentConfig::default()
        };
        let seq = run_experiment(
            &g,
            &ExperimentConfig {
                parallelism: Parallelism::Sequential,
                ..base.clone()
            },
        )
        .unwrap();
        let par = run_experiment(&g, &base).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn noiseless_experiment_is_zero() {
        let g = k_graph(6, NoiseModel::langevin(3, 4.0).unwrap());
        let agg = run_experiment(
            &g.with_anchors(vec![0]).unwrap(),
            &ExperimentConfig {
                trials: 3,
                anchored: true,
                mode: MeasurementMode::Noiseless,
                ..ExperimentConfig::default()
            },
        )
        .unwrap();
        assert!(agg.mean_total < 1e-12);
        assert!(agg.crb.total > 0.0);
    }

    #[test]
    fn random_graph_shapes() {
        let m = NoiseModel::langevin(2, 1.0).unwrap();
        assert_eq!(
            random_graph(GraphModel::Complete, 4, m, 0, true)
                .unwrap()
                .edges()
                .len(),
            6
        );
        let er1 = random_graph(GraphModel::ErdosRenyi { q: 1.0 }, 7, m, 3, true).unwrap();
        assert_eq!(er1.edges().len(), 21);
        let c = random_graph(
            GraphModel::Clustered {
                k: 2,
                p_in: 1.0,
                p_out: 0.0,
            },
            6,
            m,
            0,
            false,
        )
        .unwrap();
        assert_eq!(c.edges().len(), 6);
        assert!(random_graph(
            GraphModel::Clustered {
                k: 2,
                p_in: 1.0,
                p_out: 0.0
            },
            6,
            m,
            0,
            true
        )
        .is_err());
        let a = random_graph(GraphModel::ErdosRenyi { q: 0.3 }, 30, m, 8, true).unwrap();
        let b = random_graph(GraphModel::ErdosRenyi { q: 0.3 }, 30, m, 8, true).unwrap();
        assert_eq!(a, b);
    }
}
