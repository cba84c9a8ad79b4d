use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use rotsync::crb::{
    crb_anchored, crb_anchorfree, outlier_threshold, trace_based_threshold, CrbReport,
};
use rotsync::embed::{ectd_embed, node_marker_sizes};
use rotsync::graphcore::{
    build_laplacian, mask_anchors, MeasurementGraph, SpectralKernel, Spectrum, WeightedLaplacian,
};
use rotsync::noise::{info_weight, pdf, weyl_integrate, Sampler};
use rotsync::sync::{
    random_graph, run_experiment, Aggregate, ExperimentConfig, GraphModel, MeasurementMode,
    TruthSource,
};
use rotsync::{NoiseKind, NoiseModel, Parallelism, QuadratureRule, QuadratureSpec};

use crate::graphfile::{self, GraphFile};
use crate::output::{matrix_json, one_based, sink, write_json};
use crate::{CliError, Format, ModeOpts, OutOpts, QuadOpts, RandomKind, RandomOpts, Rule};

fn spec(q: &QuadOpts) -> Result<QuadratureSpec, CliError> {
    if !(q.tol > 0.0) {
        return Err(CliError::Parse(format!(
            "--tol must be positive, got {}",
            q.tol
        )));
    }
    let rule = match q.rule {
        Rule::Simpson => QuadratureRule::AdaptiveSimpson,
        Rule::GaussLegendre => QuadratureRule::GaussLegendre,
    };
    Ok(QuadratureSpec {
        rule,
        abs_tol: q.tol,
        ..QuadratureSpec::default()
    })
}

fn load(path: &Path) -> Result<GraphFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    graphfile::parse(&text)
}

fn parse_pairs(raw: &[String], nodes: usize) -> Result<Vec<(usize, usize)>, CliError> {
    raw.iter()
        .map(|s| {
            let bad = || CliError::Parse(format!("pair {s:?} is not of the form i:j"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b == 0 || a > nodes || b > nodes || a == b {
                return Err(CliError::Parse(format!(
                    "pair {s:?} needs two distinct nodes in 1..={nodes}"
                )));
            }
            Ok((a - 1, b - 1))
        })
        .collect()
}

fn parse_kind(text: &str) -> Result<NoiseKind, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse(format!("noise model {text:?}: {e}")))
}

fn anchored_mode(mode: ModeOpts, g: &MeasurementGraph) -> bool {
    if mode.anchored {
        true
    } else if mode.anchor_free {
        false
    } else {
        !g.anchors().is_empty()
    }
}

#[derive(Serialize)]
struct WeightRow {
    i: usize,
    j: usize,
    kind: &'static str,
    kappa: Option<f64>,
    p: Option<f64>,
    weight: f64,
}

fn kind_fields(kind: NoiseKind) -> (&'static str, Option<f64>, Option<f64>) {
    match kind {
        NoiseKind::Uniform => ("uniform", None, None),
        NoiseKind::Langevin { kappa } => ("langevin", Some(kappa), None),
        NoiseKind::LangevinOutlier { kappa, p } => ("langevin_outlier", Some(kappa), Some(p)),
    }
}

pub fn weights(path: &Path, quad: &QuadOpts, out: &OutOpts) -> Result<(), CliError> {
    let spec = spec(quad)?;
    let g = load(path)?.graph;
    let mut cache: Vec<(NoiseModel, f64)> = Vec::new();
    let mut rows = Vec::with_capacity(g.edges().len());
    for e in g.edges() {
        let w = match cache.iter().find(|(m, _)| *m == e.model) {
            Some(&(_, w)) => w,
            None => {
                let w = info_weight(&e.model, &spec)?;
                cache.push((e.model, w));
                w
            }
        };
        let (kind, kappa, p) = kind_fields(e.model.kind());
        rows.push(WeightRow {
            i: e.i + 1,
            j: e.j + 1,
            kind,
            kappa,
            p,
            weight: w,
        });
    }
    match out.format {
        Format::Json => write_json(out.out.as_deref(), &serde_json::to_value(&rows).unwrap()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(out.out.as_deref())?);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()
        }
    }?;
    Ok(())
}

fn report(
    g: &MeasurementGraph,
    anchored: bool,
    corrected: bool,
    pairs: &[(usize, usize)],
    spec: &QuadratureSpec,
) -> Result<CrbReport, CliError> {
    Ok(if anchored {
        crb_anchored(g, corrected, spec)?
    } else {
        crb_anchorfree(g, corrected, pairs, spec)?
    })
}

pub fn crb(
    path: &Path,
    mode: ModeOpts,
    corrected: bool,
    pairs: &[String],
    quad: &QuadOpts,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let spec = spec(quad)?;
    let g = load(path)?.graph;
    let pairs = parse_pairs(pairs, g.nodes())?;
    let anchored = anchored_mode(mode, &g);
    if anchored && !pairs.is_empty() {
        return Err(CliError::Parse("--pairs needs the anchor-free mode".into()));
    }
    let r = report(&g, anchored, corrected, &pairs, &spec)?;
    if r.correction_unavailable {
        eprintln!(
            "rotsync: warning: no curvature correction for n = {}; bound is uncorrected",
            r.n
        );
    }
    let mut v = serde_json::to_value(&r).unwrap();
    one_based(&mut v);
    write_json(out, &v)?;
    Ok(())
}

pub struct SimulateArgs {
    pub graph: Option<PathBuf>,
    pub random: RandomOpts,
    pub mode: ModeOpts,
    pub trials: usize,
    pub seed: u64,
    pub corrected: bool,
    pub pairs: Vec<String>,
    pub noiseless: bool,
    pub kappa_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub sequential: bool,
    pub quad: QuadOpts,
    pub out: OutOpts,
}

fn random_source(r: &RandomOpts) -> Result<MeasurementGraph, CliError> {
    let kind = r.random.expect("caller checked");
    let model = NoiseModel::new(parse_kind(&r.noise)?, r.n)?;
    let gm = match kind {
        RandomKind::Complete => GraphModel::Complete,
        RandomKind::ErdosRenyi => GraphModel::ErdosRenyi { q: r.q },
        RandomKind::Clustered => GraphModel::Clustered {
            k: r.clusters,
            p_in: r.p_in,
            p_out: r.p_out,
        },
    };
    let g = random_graph(gm, r.nodes, model, r.graph_seed, true)?;
    let mut anchors = Vec::with_capacity(r.anchors.len());
    for &a in &r.anchors {
        if a == 0 || a > r.nodes {
            return Err(CliError::Parse(format!(
                "anchor {a} outside 1..={}",
                r.nodes
            )));
        }
        anchors.push(a - 1);
    }
    Ok(g.with_anchors(anchors)?)
}

/// The same graph with every edge model's kappa or p replaced.
fn with_parameter(
    g: &MeasurementGraph,
    name: &str,
    value: f64,
) -> Result<MeasurementGraph, CliError> {
    let mut edges = Vec::with_capacity(g.edges().len());
    for e in g.edges() {
        let kind = match (e.model.kind(), name) {
            (NoiseKind::Langevin { .. }, "kappa") => NoiseKind::Langevin { kappa: value },
            (NoiseKind::LangevinOutlier { p, .. }, "kappa") => {
                NoiseKind::LangevinOutlier { kappa: value, p }
            }
            (NoiseKind::LangevinOutlier { kappa, .. }, "p") => {
                NoiseKind::LangevinOutlier { kappa, p: value }
            }
            (other, _) => {
                return Err(CliError::Parse(format!(
                    "cannot sweep {name} on edge {}-{} with model {other:?}",
                    e.i + 1,
                    e.j + 1
                )))
            }
        };
        edges.push((e.i, e.j, NoiseModel::new(kind, g.n())?));
    }
    Ok(MeasurementGraph::new(
        g.nodes(),
        g.n(),
        edges,
        g.anchors().to_vec(),
    )?)
}

fn common_parameter(g: &MeasurementGraph, name: &str) -> Option<f64> {
    let models = g.distinct_models();
    if models.len() != 1 {
        return None;
    }
    match (models[0].kind(), name) {
        (NoiseKind::Langevin { kappa } | NoiseKind::LangevinOutlier { kappa, .. }, "kappa") => {
            Some(kappa)
        }
        (NoiseKind::LangevinOutlier { p, .. }, "p") => Some(p),
        _ => None,
    }
}

#[derive(Serialize)]
struct CsvRow {
    value: Option<f64>,
    crb_total: f64,
    emp_mse: f64,
    emp_stderr: f64,
    baseline: Option<f64>,
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let spec = spec(&a.quad)?;
    let (g, truth) = match (&a.graph, a.random.random) {
        (Some(_), Some(_)) => {
            return Err(CliError::Parse(
                "give either a graph file or --random, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Parse(
                "a graph file or --random is required".into(),
            ))
        }
        (Some(path), None) => {
            let f = load(path)?;
            (f.graph, f.truth)
        }
        (None, Some(_)) => (random_source(&a.random)?, None),
    };
    let pairs = parse_pairs(&a.pairs, g.nodes())?;
    let anchored = anchored_mode(a.mode, &g);
    if anchored && !pairs.is_empty() {
        return Err(CliError::Parse("--pairs needs the anchor-free mode".into()));
    }
    let config = ExperimentConfig {
        trials: a.trials,
        seed: a.seed,
        anchored,
        corrected: a.corrected,
        pairs,
        mode: if a.noiseless {
            MeasurementMode::Noiseless
        } else {
            MeasurementMode::Sampled
        },
        truth: truth.map_or(TruthSource::Random, TruthSource::Given),
        parallelism: if a.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        },
        quadrature: spec,
    };

    let (name, grid) = if !a.p_grid.is_empty() {
        ("p", a.p_grid.iter().map(|&v| Some(v)).collect::<Vec<_>>())
    } else if !a.kappa_grid.is_empty() {
        ("kappa", a.kappa_grid.iter().map(|&v| Some(v)).collect())
    } else {
        ("kappa", vec![None])
    };
    let mut results: Vec<(Option<f64>, Aggregate)> = Vec::with_capacity(grid.len());
    for value in grid {
        let (graph, shown) = match value {
            Some(v) => (with_parameter(&g, name, v)?, Some(v)),
            None => (g.clone(), common_parameter(&g, name)),
        };
        results.push((shown, run_experiment(&graph, &config)?));
    }

    match a.out.format {
        Format::Json => {
            let rows: Vec<Value> = results
                .iter()
                .map(|(v, agg)| {
                    let mut agg = serde_json::to_value(agg).unwrap();
                    one_based(&mut agg);
                    json!({ name: v, "aggregate": agg })
                })
                .collect();
            write_json(a.out.out.as_deref(), &Value::Array(rows))?;
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(sink(a.out.out.as_deref())?);
            w.write_record([name, "crb_total", "emp_mse", "emp_stderr", "baseline"])?;
            for (v, agg) in &results {
                w.serialize(CsvRow {
                    value: *v,
                    crb_total: agg.crb.total,
                    emp_mse: agg.mean_total,
                    emp_stderr: agg.stderr_total,
                    baseline: agg.baseline,
                })?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn embed(
    path: &Path,
    dim: usize,
    anchored: bool,
    quad: &QuadOpts,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let spec = spec(quad)?;
    let g = load(path)?.graph;
    let l = build_laplacian(&g, &spec)?;
    let plain = SpectralKernel::from_laplacian(&l)?;
    let (kernel, markers) = if anchored {
        let k = SpectralKernel::from_masked(&mask_anchors(&l, g.anchors())?)?;
        let r = crb_anchored(&g, false, &spec)?;
        (k, Some(node_marker_sizes(&r)?))
    } else {
        (plain.clone(), None)
    };
    let e = ectd_embed(&kernel, dim)?;
    let fiedler = if l.is_connected() && g.nodes() > 1 {
        Some(plain.fiedler_vector()?)
    } else {
        None
    };

    match format {
        Format::Json => {
            let mut v = serde_json::to_value(&e).unwrap();
            one_based(&mut v);
            let obj = v
                .as_object_mut()
                .expect("embedding serializes to an object");
            obj.insert("marker_size".into(), json!(markers));
            obj.insert(
                "fiedler".into(),
                json!(fiedler.map(|f| f.as_slice().to_vec())),
            );
            write_json(out, &v)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(out)?);
            let mut header = vec!["node_id".to_string()];
            header.extend((1..=dim).map(|k| format!("x{k}")));
            header.extend(
                ["marker_size", "is_anchor", "fiedler", "explained_ratio"].map(String::from),
            );
            w.write_record(&header)?;
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            for i in 0..g.nodes() {
                let mut rec = vec![(i + 1).to_string()];
                rec.extend((0..dim).map(|k| e.coords[(i, k)].to_string()));
                rec.push(opt(markers.as_ref().map(|m| m[i])));
                rec.push(g.is_anchor(i).to_string());
                rec.push(opt(fiedler.as_ref().map(|f| f[i])));
                rec.push(e.explained_ratio.to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn sample(
    model: &str,
    n: usize,
    count: usize,
    seed: u64,
    out: Option<&Path>,
    quad: &QuadOpts,
) -> Result<(), CliError> {
    let spec = spec(quad)?;
    let model = NoiseModel::new(parse_kind(model)?, n)?;
    let sampler = Sampler::new(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..count)
        .map(|_| sampler.sample(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;

    let traces: Vec<f64> = draws.iter().map(|r| r.trace()).collect();
    let (mean, stderr) = match count {
        0 => (None, None),
        c => {
            let m = traces.iter().sum::<f64>() / c as f64;
            let se = if c > 1 {
                let var = traces.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (c - 1) as f64;
                Some((var / c as f64).sqrt())
            } else {
                None
            };
            (Some(m), se)
        }
    };
    let predicted =
        match weyl_integrate(n, |z| z.trace() * pdf(&model, z).unwrap_or(f64::NAN), &spec) {
            Ok(v) => Some(v),
            Err(rotsync::Error::UnsupportedDimension(_)) => None,
            Err(e) => return Err(e.into()),
        };
    let z_score = match (mean, stderr, predicted) {
        (Some(m), Some(se), Some(p)) if se > 0.0 => Some((m - p) / se),
        _ => None,
    };
    let summary = json!({
        "count": count,
        "seed": seed,
        "mean_trace": mean,
        "stderr_trace": stderr,
        "predicted_mean_trace": predicted,
        "z_score": z_score,
    });

    let list = format!(
        "[{}]",
        draws
            .iter()
            .map(matrix_json)
            .collect::<Vec<_>>()
            .join(",\n ")
    );
    match out {
        Some(path) => {
            let mut w = sink(Some(path))?;
            writeln!(w, "{list}")?;
            w.flush()?;
            write_json(None, &summary)?;
        }
        None => {
            let mut w = sink(None)?;
            let summary = serde_json::to_string_pretty(&summary).unwrap();
            writeln!(w, "{{\"rotations\": {list},\n\"summary\": {summary}}}")?;
            w.flush()?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn outliers(
    n: usize,
    kappa: f64,
    eps: f64,
    nodes: usize,
    density: f64,
    seed: u64,
    formula_only: bool,
    quad: &QuadOpts,
) -> Result<(), CliError> {
    let spec = spec(quad)?;
    if !(0.0..=1.0).contains(&density) || density == 0.0 {
        return Err(CliError::Parse(format!(
            "--density must lie in (0, 1], got {density}"
        )));
    }
    if nodes < 2 {
        return Err(CliError::Parse("--nodes must be at least 2".into()));
    }
    let expected_edges = density * (nodes * (nodes - 1)) as f64 / 2.0;
    let mut v = json!({
        "n": n,
        "kappa": kappa,
        "eps": eps,
        "nodes": nodes,
        "density": density,
    });
    if formula_only {
        let edges = expected_edges.round().max(1.0) as usize;
        v["edges"] = json!(edges);
        v["formula_p"] = json!(outlier_threshold(n, kappa, eps, nodes, edges, &spec)?);
    } else {
        let rg = random_graph(
            GraphModel::ErdosRenyi { q: density },
            nodes,
            NoiseModel::uniform(n)?,
            seed,
            true,
        )?;
        let l: WeightedLaplacian = rg.unit_laplacian();
        let edges = rg.edges().len();
        let unit_trace = Spectrum::of_laplacian(&l)?.trace_pinv();
        v["seed"] = json!(seed);
        v["edges"] = json!(edges);
        v["unit_trace"] = json!(unit_trace);
        v["formula_p"] = json!(outlier_threshold(n, kappa, eps, nodes, edges, &spec)?);
        v["trace_based_p"] = json!(trace_based_threshold(
            n, kappa, eps, nodes, unit_trace, &spec
        )?);
    }
    write_json(None, &v)?;
    Ok(())
}
