use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use rotsync::Rotation;

pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json(path: Option<&Path>, value: &Value) -> io::Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

/// Row-major nested rows, each entry with 17 significant digits.
pub fn matrix_json(r: &Rotation) -> String {
    let m = r.matrix();
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols())
                .map(|j| format!("{:.16e}", m[(i, j)]))
                .collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn bump(v: &mut Value) {
    if let Some(k) = v.as_u64() {
        *v = Value::from(k + 1);
    }
}

/// Rewrites node indices under `anchors` and `pairs` keys to 1-based.
pub fn one_based(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (key, child) in map.iter_mut() {
                match (key.as_str(), child) {
                    ("anchors", Value::Array(items)) => items.iter_mut().for_each(bump),
                    ("pairs", Value::Array(items)) => {
                        for item in items {
                            match item {
                                Value::Array(ij) => ij.iter_mut().for_each(bump),
                                Value::Object(o) => {
                                    o.get_mut("i").map(bump);
                                    o.get_mut("j").map(bump);
                                }
                                _ => {}
                            }
                        }
                    }
                    (_, child) => one_based(child),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(one_based),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_roundtrip() {
        let r = Rotation::planar(0.1);
        let text = matrix_json(&r);
        let parsed: Vec<Vec<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed[1][0], r.matrix()[(1, 0)]);
        assert!(text.contains("9.9500416527802582e-1"));
    }

    #[test]
    fn indices_shift() {
        let mut v = serde_json::json!({
            "anchors": [0, 2],
            "pairs": [{"i": 0, "j": 1, "bound": 0.5}],
            "crb": {"pairs": [[1, 3]]},
            "per_node": [0, 1]
        });
        one_based(&mut v);
        assert_eq!(v["anchors"], serde_json::json!([1, 3]));
        assert_eq!(v["pairs"][0]["j"], 2);
        assert_eq!(v["crb"]["pairs"][0], serde_json::json!([2, 4]));
        assert_eq!(v["per_node"], serde_json::json!([0, 1]));
    }
}
