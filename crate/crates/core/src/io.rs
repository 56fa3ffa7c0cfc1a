//! CSV formats for edge lists and node tables.
//!
//! Edge list: header `src,dst,weight`, 0-based node ids.
//! Node table: header `node_id,f_0..f_{d-1},tau_0..tau_{c-1}`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::segregation::TAU_SUM_TOLERANCE;

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn write_edge_list<W: Write>(g: &Graph, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "src,dst,weight")?;
    for (u, v, wt) in g.edges() {
        writeln!(w, "{u},{v},{wt}")?;
    }
    w.flush()?;
    Ok(())
}

/// Raw edge rows, validated for shape and numeric content only.
pub fn read_edge_rows<R: Read>(input: R, name: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "src" || cols[1] != "dst" {
        return Err(parse_err(name, 1, "expected header `src,dst,weight`"));
    }
    let has_weight = cols.get(2) == Some(&"weight");
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(name, line, e.to_string()))?;
        let field = |k: usize| {
            rec.get(k)
                .ok_or_else(|| parse_err(name, line, format!("missing column {k}")))
        };
        let u: usize = field(0)?
            .parse()
            .map_err(|_| parse_err(name, line, "bad src"))?;
        let v: usize = field(1)?
            .parse()
            .map_err(|_| parse_err(name, line, "bad dst"))?;
        let w: f64 = if has_weight {
            field(2)?
                .parse()
                .map_err(|_| parse_err(name, line, "bad weight"))?
        } else {
            1.0
        };
        if !(w.is_finite() && w >= 0.0) {
            return Err(parse_err(
                name,
                line,
                format!("weight {w} must be finite and nonnegative"),
            ));
        }
        if u == v {
            return Err(parse_err(name, line, format!("self-loop on node {u}")));
        }
        rows.push((u, v, w));
    }
    Ok(rows)
}

/// Reads an edge list into a graph on `node_count` nodes. Returns the graph
/// and the number of duplicate rows dropped.
pub fn read_edge_list<R: Read>(input: R, name: &str, node_count: usize) -> Result<(Graph, usize)> {
    let rows = read_edge_rows(input, name)?;
    for (i, &(u, v, _)) in rows.iter().enumerate() {
        if u >= node_count || v >= node_count {
            return Err(parse_err(
                name,
                i + 2,
                format!("node id out of range for {node_count} nodes"),
            ));
        }
    }
    Graph::from_weighted_edges(node_count, rows)
}

pub fn write_node_table<W: Write>(
    features: &Array2<f64>,
    socio: &Array2<f64>,
    out: W,
) -> Result<()> {
    let mut w = BufWriter::new(out);
    let mut header = vec!["node_id".to_string()];
    header.extend((0..features.ncols()).map(|k| format!("f_{k}")));
    header.extend((0..socio.ncols()).map(|k| format!("tau_{k}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..features.nrows() {
        let mut line = i.to_string();
        for x in features.row(i).iter().chain(socio.row(i).iter()) {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a node table, returning `(features, socio)` ordered by node id.
pub fn read_node_table<R: Read>(input: R, name: &str) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut rdr = reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.first().map(String::as_str) != Some("node_id") {
        return Err(parse_err(name, 1, "first column must be `node_id`"));
    }
    let d = headers.iter().filter(|h| h.starts_with("f_")).count();
    let c = headers.iter().filter(|h| h.starts_with("tau_")).count();
    let expected: Vec<String> = std::iter::once("node_id".to_string())
        .chain((0..d).map(|k| format!("f_{k}")))
        .chain((0..c).map(|k| format!("tau_{k}")))
        .collect();
    if headers != expected {
        return Err(parse_err(
            name,
            1,
            "header must be node_id,f_0..f_{d-1},tau_0..tau_{c-1}",
        ));
    }
    if c < 2 {
        return Err(parse_err(name, 1, "need at least two tau columns"));
    }
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(name, line, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(parse_err(
                name,
                line,
                format!("expected {} columns, found {}", expected.len(), rec.len()),
            ));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(name, line, "bad node_id"))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(name, line, format!("bad number `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(name, line, "non-finite value"));
        }
        rows.push((id, line, vals));
    }
    let n = rows.len();
    let mut seen = vec![false; n];
    let mut features = Array2::zeros((n, d));
    let mut socio = Array2::zeros((n, c));
    for (id, line, vals) in rows {
        if id >= n || seen[id] {
            return Err(parse_err(
                name,
                line,
                format!("node ids must be 0..{n} without repeats, got {id}"),
            ));
        }
        seen[id] = true;
        let tau = &vals[d..];
        let sum: f64 = tau.iter().sum();
        if tau.iter().any(|&t| t < 0.0) || (sum - 1.0).abs() > TAU_SUM_TOLERANCE {
            return Err(parse_err(
                name,
                line,
                format!("node {id}: tau must be a probability vector (sums to {sum})"),
            ));
        }
        for k in 0..d {
            features[[id, k]] = vals[k];
        }
        for k in 0..c {
            socio[[id, k]] = tau[k];
        }
    }
    Ok((features, socio))
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let (g, _) = Graph::from_weighted_edges(4, [(0, 1, 0.25), (2, 3, 1.0 / 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let (back, dups) = read_edge_list(buf.as_slice(), "e.csv", 4).unwrap();
        assert_eq!(back, g);
        assert_eq!(dups, 0);
    }

    #[test]
    fn duplicates_and_errors() {
        let text = "src,dst,weight\n0,1,1\n1,0,1\n1,2,2\n";
        let (g, dups) = read_edge_list(text.as_bytes(), "e.csv", 3).unwrap();
        assert_eq!((g.edge_count(), dups), (2, 1));
        let err =
            read_edge_list("src,dst,weight\n0,1,1\n0,x,1\n".as_bytes(), "e.csv", 3).unwrap_err();
        assert!(err.to_string().contains("e.csv:3"), "{err}");
        assert!(read_edge_list("src,dst,weight\n2,2,1\n".as_bytes(), "e.csv", 3).is_err());
        assert!(read_edge_list("src,dst,weight\n0,7,1\n".as_bytes(), "e.csv", 3).is_err());
    }

    #[test]
    fn node_table_rejects_bad_tau() {
        let text = "node_id,f_0,tau_0,tau_1\n0,1.5,0.5,0.5\n1,2.0,0.4,0.4\n";
        let err = read_node_table(text.as_bytes(), "n.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("node 1"), "{err}");
        assert!(err.contains("n.csv:3"), "{err}");
    }

    #[test]
    fn node_table_round_trip() {
        let f = ndarray::arr2(&[[0.1, -2.0], [1e-17, 3.5]]);
        let s = ndarray::arr2(&[[0.2, 0.8], [1.0 / 3.0, 2.0 / 3.0]]);
        let mut buf = Vec::new();
        write_node_table(&f, &s, &mut buf).unwrap();
        let (f2, s2) = read_node_table(buf.as_slice(), "n.csv").unwrap();
        assert_eq!(f, f2);
        assert_eq!(s, s2);
    }
}
