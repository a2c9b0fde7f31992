//! Synthetic generators, plain-text dataset I/O and the principal connected
//! component restriction.
//!
//! File formats (all UTF-8):
//! - edges: one undirected edge per line, `src<TAB>dst[<TAB>weight]`,
//!   0-based ids; any whitespace separates fields and `#` starts a comment.
//! - features: headerless CSV, one row per node.
//! - labels: one integer class per line.
//! - splits: three lines of space-separated node ids (train, val, test).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitMasks};
use crate::seminorm::{SemiNormContext, SpectralBasis};
use crate::sparse::SparseSym;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricConfig {
    pub n: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            threshold: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartitionConfig {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantedPartitionConfig {
    fn default() -> Self {
        Self {
            n: 600,
            classes: 3,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 8,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

/// Stratified 10/20/70 split: within each class, shuffled nodes fill train,
/// then validation, then test.
pub fn stratified_masks(labels: &[usize], rng: &mut ChaCha8Rng) -> SplitMasks {
    let n = labels.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut masks = SplitMasks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for class in 0..classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let train = (members.len() as f64 * 0.1).round() as usize;
        let val = (members.len() as f64 * 0.2).round() as usize;
        for (pos, &i) in members.iter().enumerate() {
            if pos < train {
                masks.train[i] = true;
            } else if pos < train + val {
                masks.val[i] = true;
            } else {
                masks.test[i] = true;
            }
        }
    }
    masks
}

/// Uniform points in the unit square joined when closer than the threshold.
///
/// Node data: features are the coordinates, labels the quadrant
/// (`2 * [y >= 0.5] + [x >= 0.5]`), masks a stratified 10/20/70 split.
pub fn random_geometric_graph(cfg: &GeometricConfig) -> Result<Graph> {
    if !(cfg.threshold > 0.0) {
        return Err(Error::InvalidConfig(format!("threshold must be positive, got {}", cfg.threshold)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<(f64, f64)> = (0..cfg.n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let t2 = cfg.threshold * cfg.threshold;
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in i + 1..cfg.n {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            if dx * dx + dy * dy < t2 {
                edges.push((i, j));
            }
        }
    }
    let labels: Vec<usize> = points
        .iter()
        .map(|&(x, y)| 2 * usize::from(y >= 0.5) + usize::from(x >= 0.5))
        .collect();
    let masks = stratified_masks(&labels, &mut rng);
    Graph::from_edges(cfg.n, &edges)?
        .with_features(Mat::from_fn(cfg.n, 2, |i, j| if j == 0 { points[i].0 } else { points[i].1 }))?
        .with_labels(labels)?
        .with_masks(masks)
}

/// Class-blocked random graph with noisy one-hot feature prototypes.
/// Node `i` belongs to class `i * classes / n`.
pub fn planted_partition_graph(cfg: &PlantedPartitionConfig) -> Result<Graph> {
    let probs_ok = (0.0..=1.0).contains(&cfg.p_in) && (0.0..=1.0).contains(&cfg.p_out);
    if !probs_ok || cfg.p_in <= cfg.p_out {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= p_out < p_in <= 1, got p_in = {}, p_out = {}",
            cfg.p_in, cfg.p_out
        )));
    }
    if cfg.classes == 0 || cfg.feature_dim < cfg.classes || cfg.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig(
            "need at least one class, feature_dim >= classes and a non-negative noise level".into(),
        ));
    }
    let n = cfg.n;
    let labels: Vec<usize> = (0..n).map(|i| i * cfg.classes / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let noise: Vec<f64> = (0..n * cfg.feature_dim)
        .map(|_| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let features = Mat::from_fn(n, cfg.feature_dim, |i, j| {
        f64::from(u8::from(labels[i] == j)) + noise[i * cfg.feature_dim + j]
    });
    let masks = stratified_masks(&labels, &mut rng);
    Graph::from_edges(n, &edges)?
        .with_features(features)?
        .with_labels(labels)?
        .with_masks(masks)
}

/// Largest connected component (ties: the one holding the smallest id),
/// with the original id of every kept node.
pub fn principal_connected_component(g: &Graph) -> (Graph, Vec<usize>) {
    let (count, comp) = g.connected_components();
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c] += 1;
    }
    // components are numbered by smallest member, so the first maximum wins
    let best = (0..count).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
    let keep: Vec<usize> = (0..g.num_nodes()).filter(|&i| comp[i] == best).collect();
    if keep.len() == g.num_nodes() {
        return (g.clone(), keep);
    }
    (g.induced_subgraph(&keep), keep)
}

/// `x = V c` with standard normal `c`, scaled to `||x||_L = 1`.
pub fn random_smooth_signal(basis: &SpectralBasis, ctx: &SemiNormContext, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..32 {
        let coeffs: Vec<f64> = (0..basis.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..basis.ambient_dim())
            .map(|i| (0..basis.dim()).map(|j| basis.vectors[(i, j)] * coeffs[j]).sum())
            .collect();
        let norm = ctx.seminorm(&x)?;
        if norm > 1e-12 * x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300) {
            return Ok(x.into_iter().map(|v| v / norm).collect());
        }
    }
    Err(Error::Unsupported(
        "could not draw a signal with non-zero seminorm: the basis lies in ker(L)".into(),
    ))
}

/// `count` independent smooth signals as the columns of an `N x count`
/// matrix; column `j` uses seed `seed + j`.
pub fn random_smooth_signals(
    basis: &SpectralBasis,
    ctx: &SemiNormContext,
    count: usize,
    seed: u64,
) -> Result<Mat<f64>> {
    let cols: Vec<Vec<f64>> = (0..count)
        .map(|j| random_smooth_signal(basis, ctx, seed.wrapping_add(j as u64)))
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(basis.ambient_dim(), count, |i, j| cols[j][i]))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses an edge list into `(i, j, w)` with `i < j`. Repeated edges with
/// the same weight (in either orientation) are merged.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut edges: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (line, content) in content_lines(&text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(path, line, format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let id = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, line, format!("bad node id '{s}'")));
        let (src, dst) = (id(fields[0])?, id(fields[1])?);
        let weight = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("bad weight '{s}'")))?,
            None => 1.0,
        };
        if src == dst {
            return Err(parse_err(path, line, format!("self-loop on node {src}")));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(parse_err(path, line, format!("weight must be positive and finite, got {weight}")));
        }
        let key = (src.min(dst), src.max(dst));
        match edges.get(&key) {
            Some(&(w, first)) if w != weight => {
                return Err(parse_err(
                    path,
                    line,
                    format!("edge {}-{} repeats line {first} with a different weight", key.0, key.1),
                ));
            }
            Some(_) => {}
            None => {
                edges.insert(key, (weight, line));
            }
        }
    }
    Ok(edges.into_iter().map(|((i, j), (w, _))| (i, j, w)).collect())
}

pub fn read_features(path: &Path) -> Result<Mat<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, content) in content_lines(&text) {
        let row = content
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad number '{}'", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    content_lines(&text)
        .map(|(line, s)| s.parse::<usize>().map_err(|_| parse_err(path, line, format!("bad label '{s}'"))))
        .collect()
}

pub fn read_splits(path: &Path, n: usize) -> Result<SplitMasks> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).collect();
    if lines.len() < 3 {
        return Err(parse_err(path, lines.len(), "expected three lines (train, val, test)"));
    }
    let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
    for (k, (line, content)) in lines.iter().take(3).enumerate() {
        for s in content.split_whitespace() {
            let id = s
                .parse::<usize>()
                .map_err(|_| parse_err(path, *line, format!("bad node id '{s}'")))?;
            if id >= n {
                return Err(parse_err(path, *line, format!("node {id} out of range for {n} nodes")));
            }
            masks[k][id] = true;
        }
    }
    let [train, val, test] = masks;
    let masks = SplitMasks { train, val, test };
    masks.validate(n)?;
    Ok(masks)
}

/// Paths of the four dataset files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
}

impl DatasetPaths {
    /// `edges.tsv`, `features.csv`, `labels.csv`, `splits.txt` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            edges: dir.join("edges.tsv"),
            features: Some(dir.join("features.csv")),
            labels: Some(dir.join("labels.csv")),
            splits: Some(dir.join("splits.txt")),
        }
    }
}

/// Assembles a graph from the dataset files. The node count is the number
/// of feature rows or labels when given, the largest edge id plus one
/// otherwise. Missing optional files are skipped; a missing split file
/// leaves the graph unmasked and logs a warning.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Graph> {
    let existing = |p: &Option<PathBuf>| p.clone().filter(|p| p.exists());
    let edges = read_edges(&paths.edges)?;
    let features = existing(&paths.features).map(|p| read_features(&p)).transpose()?;
    let labels = existing(&paths.labels).map(|p| read_labels(&p)).transpose()?;
    if let (Some(f), Some(l)) = (&features, &labels) {
        if f.nrows() != l.len() {
            return Err(Error::DimensionMismatch {
                what: "label count vs feature rows",
                expected: f.nrows(),
                found: l.len(),
            });
        }
    }
    let max_id = edges.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(0);
    let n = features
        .as_ref()
        .map(|f| f.nrows())
        .or(labels.as_ref().map(Vec::len))
        .unwrap_or(max_id);
    if max_id > n {
        return Err(Error::DimensionMismatch {
            what: "edge endpoint range",
            expected: n,
            found: max_id,
        });
    }
    let triplets: Vec<_> = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
    let mut g = Graph::new(SparseSym::from_triplets(n, &triplets)?)?;
    if let Some(f) = features {
        g = g.with_features(f)?;
    }
    if let Some(l) = labels {
        g = g.with_labels(l)?;
    }
    match existing(&paths.splits) {
        Some(p) => g = g.with_masks(read_splits(&p, n)?)?,
        None => warn!("no split file found; the graph carries no train/val/test masks"),
    }
    Ok(g)
}

/// Writes every part of `g` that is present; returns the paths written.
pub fn save_dataset(g: &Graph, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = DatasetPaths::in_dir(dir);
    let mut written = Vec::new();

    let mut edges = String::new();
    for (i, j, w) in g.edges() {
        edges.push_str(&format!("{i}\t{j}\t{w}\n"));
    }
    fs::write(&paths.edges, edges)?;
    written.push(paths.edges.clone());

    if let (Some(f), Some(p)) = (&g.features, &paths.features) {
        let mut out = String::new();
        for i in 0..f.nrows() {
            let row: Vec<String> = (0..f.ncols()).map(|j| f[(i, j)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(p, out)?;
        written.push(p.clone());
    }
    if let (Some(l), Some(p)) = (&g.labels, &paths.labels) {
        let out: String = l.iter().map(|v| format!("{v}\n")).collect();
        fs::write(p, out)?;
        written.push(p.clone());
    }
    if let (Some(m), Some(p)) = (&g.masks, &paths.splits) {
        let line = |mask: &[bool]| {
            mask.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        fs::write(p, format!("{}\n{}\n{}\n", line(&m.train), line(&m.val), line(&m.test)))?;
        written.push(p.clone());
    }
    Ok(written)
}
