//! Plain-text and JSON graph files.
//!
//! Text layout: the edge file holds one `source,target` pair per line, the
//! feature file one comma-separated row of reals per node and the label file
//! one `0`/`1` per line. Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Edge, Graph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Whether the edge list is directed. Undirected inputs are symmetrized.
    pub directed: bool,
    pub allow_self_loops: bool,
    /// Map the distinct ids seen in the edge file onto `0..N` in ascending
    /// order. Requires the number of distinct ids to equal the feature rows.
    pub remap_ids: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            directed: true,
            allow_self_loops: false,
            remap_ids: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadDiagnostics {
    pub duplicate_edges: usize,
    /// Original id of each node, when ids were remapped.
    pub id_map: Option<Vec<i64>>,
}

pub fn load_graph(edge_file: &Path, feature_file: &Path, label_file: &Path) -> Result<Graph> {
    load_graph_with(edge_file, feature_file, label_file, LoadOptions::default()).map(|(g, _)| g)
}

pub fn load_graph_with(
    edge_file: &Path,
    feature_file: &Path,
    label_file: &Path,
    opts: LoadOptions,
) -> Result<(Graph, LoadDiagnostics)> {
    let raw_edges = read_edges(edge_file)?;
    let features = read_features(feature_file)?;
    let labels = read_labels(label_file)?;
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{} has {} rows but {} has {} rows",
            feature_file.display(),
            n,
            label_file.display(),
            labels.len()
        )));
    }

    let mut diag = LoadDiagnostics::default();
    let edges: Vec<(i64, i64)> = raw_edges.iter().map(|&(_, s, t)| (s, t)).collect();
    let mapped: Vec<Edge> = if opts.remap_ids {
        let ids: BTreeSet<i64> = edges.iter().flat_map(|&(s, t)| [s, t]).collect();
        if ids.len() != n {
            return Err(Error::Validation(format!(
                "edge file names {} distinct nodes but the feature file has {n} rows",
                ids.len()
            )));
        }
        let index: HashMap<i64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        diag.id_map = Some(ids.into_iter().collect());
        edges.iter().map(|(s, t)| (index[s], index[t])).collect()
    } else {
        let mut out = Vec::with_capacity(edges.len());
        for (&(line, s, t), _) in raw_edges.iter().zip(&edges) {
            let in_range = |v: i64| v >= 0 && (v as usize) < n;
            if !in_range(s) || !in_range(t) {
                return Err(Error::Validation(format!(
                    "{}:{line}: edge ({s},{t}) references a node outside 0..{n}",
                    edge_file.display()
                )));
            }
            out.push((s as usize, t as usize));
        }
        out
    };

    let mut seen = HashSet::with_capacity(mapped.len());
    let mut unique = Vec::with_capacity(mapped.len());
    for e in mapped {
        if seen.insert(e) {
            unique.push(e);
        } else {
            diag.duplicate_edges += 1;
        }
    }
    if diag.duplicate_edges > 0 {
        warn!(
            "{}: dropped {} duplicate edge(s)",
            edge_file.display(),
            diag.duplicate_edges
        );
    }

    let build = if opts.allow_self_loops {
        Graph::with_self_loops
    } else {
        Graph::new
    };
    let g = build(n, unique, features, labels, opts.directed)?;
    let g = if opts.directed { g } else { g.symmetrize() };
    Ok((g, diag))
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

fn read_edges(path: &Path) -> Result<Vec<(usize, i64, i64)>> {
    data_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let cols: Vec<&str> = text.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(parse_err(path, line, format!("expected `source,target`, got `{text}`")));
            }
            let parse = |c: &str| {
                c.parse::<i64>()
                    .map_err(|_| parse_err(path, line, format!("`{c}` is not an integer node id")))
            };
            Ok((line, parse(cols[0])?, parse(cols[1])?))
        })
        .collect()
}

fn read_features(path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in data_lines(path)? {
        let row = text
            .split(',')
            .map(|c| {
                let c = c.trim();
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("`{c}` is not a finite real")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("row has {} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let dim = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    data_lines(path)?
        .into_iter()
        .map(|(line, text)| match text.as_str() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(parse_err(path, line, format!("label must be 0 or 1, got `{other}`"))),
        })
        .collect()
}

/// Writes the three text files that [`load_graph`] reads back.
pub fn write_graph_files(g: &Graph, edge_file: &Path, feature_file: &Path, label_file: &Path) -> Result<()> {
    let mut edges = String::new();
    for &(s, t) in g.edges() {
        edges.push_str(&format!("{s},{t}\n"));
    }
    let mut feats = String::new();
    for row in g.features().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        feats.push_str(&cells.join(","));
        feats.push('\n');
    }
    let mut labels = String::new();
    for l in g.labels() {
        labels.push_str(&format!("{l}\n"));
    }
    for (path, body) in [(edge_file, edges), (feature_file, feats), (label_file, labels)] {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Self-contained JSON form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphContainer {
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    #[serde(default = "default_directed")]
    pub directed: bool,
    #[serde(default)]
    pub allow_self_loops: bool,
}

fn default_directed() -> bool {
    true
}

impl GraphContainer {
    pub fn from_graph(g: &Graph) -> Self {
        GraphContainer {
            num_nodes: g.num_nodes(),
            edges: g.edges().iter().map(|&(s, t)| [s, t]).collect(),
            features: g
                .features()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            labels: g.labels().to_vec(),
            directed: g.directed(),
            allow_self_loops: g.allows_self_loops(),
        }
    }

    pub fn into_graph(self) -> Result<Graph> {
        let dim = self.features.first().map_or(0, Vec::len);
        if let Some(i) = self.features.iter().position(|r| r.len() != dim) {
            return Err(Error::Validation(format!("feature row {i} has the wrong length")));
        }
        let n_rows = self.features.len();
        let features = DMatrix::from_fn(n_rows, dim, |i, j| self.features[i][j]);
        let edges = self.edges.iter().map(|&[s, t]| (s, t)).collect();
        let build = if self.allow_self_loops {
            Graph::with_self_loops
        } else {
            Graph::new
        };
        build(self.num_nodes, edges, features, self.labels, self.directed)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
