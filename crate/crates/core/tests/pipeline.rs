use rotsync::crb::crb_anchored;
use rotsync::graphcore::MeasurementGraph;
use rotsync::sync::{
    eig_sync, evaluate, random_graph, run_experiment, synthesize, ExperimentConfig, GraphModel,
    MeasurementMode, TruthSource,
};
use rotsync::{NoiseModel, Parallelism, QuadratureSpec};

fn complete(nodes: usize, model: NoiseModel, anchors: Vec<usize>) -> MeasurementGraph {
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            edges.push((i, j, model));
        }
    }
    MeasurementGraph::new(nodes, model.n(), edges, anchors).unwrap()
}

#[test]
fn eig_error_sits_above_the_bound() {
    let g = complete(20, NoiseModel::langevin(3, 8.0).unwrap(), vec![0]);
    let config = ExperimentConfig {
        trials: 40,
        seed: 3,
        anchored: true,
        ..Default::default()
    };
    let agg = run_experiment(&g, &config).unwrap();
    assert!(agg.mean_total + 2.0 * agg.stderr_total >= agg.crb.total);
    assert!(agg.mean_total < 3.0 * agg.crb.total);
    assert_eq!(agg.mean_per_node[0], 0.0);
}

#[test]
fn experiments_are_reproducible_across_modes() {
    let g = random_graph(
        GraphModel::ErdosRenyi { q: 0.5 },
        15,
        NoiseModel::langevin_outlier(2, 5.0, 0.8).unwrap(),
        4,
        true,
    )
    .unwrap();
    let base = ExperimentConfig {
        trials: 16,
        seed: 99,
        pairs: vec![(0, 1), (3, 7)],
        ..Default::default()
    };
    let par = run_experiment(&g, &base).unwrap();
    let seq = run_experiment(
        &g,
        &ExperimentConfig {
            parallelism: Parallelism::Sequential,
            ..base.clone()
        },
    )
    .unwrap();
    assert_eq!(par, seq);
    assert_eq!(par.mean_pairs.len(), 2);
}

#[test]
fn noiseless_measurements_give_zero_error() {
    let g = complete(6, NoiseModel::langevin(4, 1.0).unwrap(), vec![1]);
    let inst = synthesize(&g, &TruthSource::Random, MeasurementMode::Noiseless, 1).unwrap();
    for anchored in [false, true] {
        let est = eig_sync(&inst, anchored).unwrap();
        let r = evaluate(&inst, &est.rotations, anchored, &[(0, 5)]).unwrap();
        assert!(r.total < 1e-12, "{anchored}: {}", r.total);
        assert!(r.pairs[0] < 1e-12);
    }
}

#[test]
fn disconnected_anchored_problem_is_rejected() {
    let m = NoiseModel::langevin(2, 1.0).unwrap();
    let g = MeasurementGraph::new(4, 2, vec![(0, 1, m), (2, 3, m)], vec![0]).unwrap();
    assert!(crb_anchored(&g, false, &QuadratureSpec::default()).is_err());
    let inst = synthesize(&g, &TruthSource::Random, MeasurementMode::Sampled, 0).unwrap();
    assert!(eig_sync(&inst, true).is_err());
}
