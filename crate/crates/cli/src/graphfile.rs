//! JSON graph files. Node indices are 1-based on disk and 0-based in memory.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::value::RawValue;

use rotsync::graphcore::MeasurementGraph;
use rotsync::{NoiseKind, NoiseModel, Rotation, RotationTuple};

use crate::CliError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile<'a> {
    n: usize,
    nodes: usize,
    #[serde(default)]
    anchors: Vec<usize>,
    #[serde(borrow)]
    edges: Vec<&'a RawValue>,
    #[serde(default)]
    truth: Option<Vec<MatrixRows>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSpec {
    i: usize,
    j: usize,
    noise: NoiseKind,
}

/// Either nested rows or a flat row-major list.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixRows {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixRows {
    fn into_matrix(self, n: usize) -> Option<DMatrix<f64>> {
        let flat: Vec<f64> = match self {
            MatrixRows::Nested(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return None;
                }
                rows.into_iter().flatten().collect()
            }
            MatrixRows::Flat(v) => v,
        };
        (flat.len() == n * n).then(|| DMatrix::from_row_slice(n, n, &flat))
    }
}

pub struct GraphFile {
    pub graph: MeasurementGraph,
    pub truth: Option<RotationTuple>,
}

fn line_of(text: &str, raw: &RawValue) -> usize {
    let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
    text[..offset].matches('\n').count() + 1
}

fn parse_err(msg: impl Into<String>) -> CliError {
    CliError::Parse(msg.into())
}

pub fn parse(text: &str) -> Result<GraphFile, CliError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let (n, nodes) = (raw.n, raw.nodes);
    if n < 2 {
        return Err(parse_err(format!("n must be at least 2, got {n}")));
    }
    if nodes == 0 {
        return Err(parse_err("graph must have at least one node"));
    }
    let index = |k: usize, what: &str, line: Option<usize>| {
        let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
        if k == 0 || k > nodes {
            Err(parse_err(format!("{at}{what} {k} outside 1..={nodes}")))
        } else {
            Ok(k - 1)
        }
    };

    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::with_capacity(raw.edges.len());
    for edge in &raw.edges {
        let line = line_of(text, edge);
        let spec: EdgeSpec = serde_json::from_str(edge.get())
            .map_err(|e| parse_err(format!("line {line}: bad edge: {e}")))?;
        let i = index(spec.i, "node", Some(line))?;
        let j = index(spec.j, "node", Some(line))?;
        if i == j {
            return Err(parse_err(format!(
                "line {line}: self-loop at node {}",
                spec.i
            )));
        }
        let key = (i.min(j), i.max(j));
        if let Some(first) = seen.insert(key, line) {
            return Err(parse_err(format!(
                "line {line}: duplicate edge {}-{} (first given on line {first})",
                key.0 + 1,
                key.1 + 1
            )));
        }
        let model =
            NoiseModel::new(spec.noise, n).map_err(|e| parse_err(format!("line {line}: {e}")))?;
        edges.push((i, j, model));
    }

    let mut anchors = Vec::with_capacity(raw.anchors.len());
    for &a in &raw.anchors {
        anchors.push(index(a, "anchor", None)?);
    }
    let graph = MeasurementGraph::new(nodes, n, edges, anchors)?;

    let truth = match raw.truth {
        None => None,
        Some(list) => {
            if list.len() != nodes {
                return Err(parse_err(format!(
                    "truth lists {} rotations for {nodes} nodes",
                    list.len()
                )));
            }
            let mut items = Vec::with_capacity(nodes);
            for (k, m) in list.into_iter().enumerate() {
                let m = m
                    .into_matrix(n)
                    .ok_or_else(|| parse_err(format!("truth {} is not {n}x{n}", k + 1)))?;
                items.push(
                    Rotation::new(m).map_err(|e| parse_err(format!("truth {}: {e}", k + 1)))?,
                );
            }
            Some(RotationTuple::new(items)?)
        }
    };
    Ok(GraphFile { graph, truth })
}
