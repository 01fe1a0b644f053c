//! Graphex processes, weighted intermediate graphs and vertex subsampling.

use std::fmt::{self, Write as _};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, precondition, GraphexError, Result};
use crate::graphex::StepGraphex;
use crate::rng::{child_seed, stream_rng, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Feature {
    Atom(usize),
    Infinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Vertex {
    pub birth: f64,
    pub feature: Feature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Graphon,
    Star,
    Dust,
    Loop,
}

impl EdgeKind {
    fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Graphon => "graphon",
            EdgeKind::Star => "star",
            EdgeKind::Dust => "dust",
            EdgeKind::Loop => "loop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Plain,
    Loops,
}

/// A finite sample of a graphex process with vertex labels and edge provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledGraph {
    pub t: f64,
    pub mode: SampleMode,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub keep_isolated: bool,
}

/// Unlabeled simple graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PlainGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl PlainGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(domain(format!("edge ({u},{v}) out of range for {n} vertices")));
            }
            if u == v {
                return Err(domain("plain graphs have no loops"));
            }
        }
        Ok(PlainGraph { n, edges })
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(Vec::len).collect()
    }

    /// Drops vertices without edges and relabels the rest in order.
    pub fn without_isolated(&self) -> PlainGraph {
        let deg = self.degrees();
        let mut map = vec![usize::MAX; self.n];
        let mut n = 0;
        for v in 0..self.n {
            if deg[v] > 0 {
                map[v] = n;
                n += 1;
            }
        }
        PlainGraph { n, edges: self.edges.iter().map(|&(u, v)| (map[u], map[v])).collect() }
    }
}

impl SampledGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn count_kind(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.2 == kind).count()
    }

    /// The underlying simple graph; loops are dropped.
    pub fn to_plain(&self) -> PlainGraph {
        let edges = self.edges.iter().filter(|e| e.0 != e.1).map(|e| (e.0, e.1)).collect();
        PlainGraph { n: self.vertices.len(), edges }
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<SampledGraph> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| GraphexError::Parse("empty graph file".into()))?;
        let mut t = None;
        let mut mode = None;
        for token in header.split_whitespace() {
            if let Some(x) = token.strip_prefix("T=") {
                t = Some(x.parse::<f64>().map_err(|e| GraphexError::Parse(format!("bad T: {e}")))?);
            } else if let Some(x) = token.strip_prefix("mode=") {
                mode = Some(match x {
                    "plain" => SampleMode::Plain,
                    "loops" => SampleMode::Loops,
                    other => return Err(GraphexError::Parse(format!("unknown mode {other}"))),
                });
            }
        }
        let (Some(t), Some(mode)) = (t, mode) else {
            return Err(GraphexError::Parse("header must be 'T=<float> mode=<plain|loops>'".into()));
        };
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || GraphexError::Parse(format!("bad line: {line}"));
            match f.as_slice() {
                ["v", id, birth, feat] => {
                    let id: usize = id.parse().map_err(|_| bad())?;
                    if id != vertices.len() {
                        return Err(GraphexError::Parse(format!("vertex ids must be consecutive, got {id}")));
                    }
                    let birth: f64 = birth.parse().map_err(|_| bad())?;
                    let feature = if *feat == "inf" {
                        Feature::Infinity
                    } else {
                        Feature::Atom(feat.parse().map_err(|_| bad())?)
                    };
                    vertices.push(Vertex { birth, feature });
                }
                ["e", u, v, kind] => {
                    let kind = match *kind {
                        "graphon" => EdgeKind::Graphon,
                        "star" => EdgeKind::Star,
                        "dust" => EdgeKind::Dust,
                        "loop" => EdgeKind::Loop,
                        _ => return Err(bad()),
                    };
                    edges.push((u.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?, kind));
                }
                _ => return Err(bad()),
            }
        }
        let mut touched = vec![false; vertices.len()];
        for &(u, v, _) in &edges {
            if u >= vertices.len() || v >= vertices.len() {
                return Err(GraphexError::Parse(format!("edge ({u},{v}) refers to a missing vertex")));
            }
            touched[u] = true;
            touched[v] = true;
        }
        let keep_isolated = touched.iter().any(|x| !x);
        Ok(SampledGraph { t, mode, vertices, edges, keep_isolated })
    }

    fn drop_isolated(&mut self) {
        let mut touched = vec![false; self.vertices.len()];
        for &(u, v, _) in &self.edges {
            touched[u] = true;
            touched[v] = true;
        }
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if touched[i] {
                map[i] = kept.len();
                kept.push(*v);
            }
        }
        self.vertices = kept;
        for e in &mut self.edges {
            e.0 = map[e.0];
            e.1 = map[e.1];
        }
    }
}

impl fmt::Display for SampledGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            SampleMode::Plain => "plain",
            SampleMode::Loops => "loops",
        };
        let mut out = String::new();
        writeln!(out, "T={} mode={mode}", self.t)?;
        for (i, v) in self.vertices.iter().enumerate() {
            match v.feature {
                Feature::Atom(a) => writeln!(out, "v {i} {} {a}", v.birth)?,
                Feature::Infinity => writeln!(out, "v {i} {} inf", v.birth)?,
            }
        }
        for &(u, v, k) in &self.edges {
            writeln!(out, "e {u} {v} {}", k.as_str())?;
        }
        f.write_str(&out)
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

fn check_horizon(g: &StepGraphex, t: f64) -> Result<()> {
    if g.is_signed() {
        return Err(precondition("sampling needs an unsigned graphex"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("horizon T must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Poisson vertex cloud: `Poisson(T rho_i)` vertices per atom with uniform births.
fn vertex_cloud(g: &StepGraphex, t: f64, rng: &mut ChaCha8Rng) -> Vec<Vertex> {
    let mut out = Vec::new();
    for (i, &r) in g.masses().iter().enumerate() {
        let n = poisson(rng, t * r);
        for _ in 0..n {
            out.push(Vertex { birth: rng.random_range(0.0..=t), feature: Feature::Atom(i) });
        }
    }
    out
}

fn atom_of(v: &Vertex) -> usize {
    match v.feature {
        Feature::Atom(a) => a,
        Feature::Infinity => unreachable!("cloud vertices carry atoms"),
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

/// Graphon, star and dust edges on a given vertex cloud; star leaves and dust
/// endpoints are appended after the cloud.
pub(crate) fn edges_on_cloud(
    g: &StepGraphex,
    t: f64,
    mut vertices: Vec<Vertex>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vertex>, Vec<(usize, usize, EdgeKind)>) {
    let n = vertices.len();
    let mut edges = Vec::new();
    for u in 0..n {
        let a = atom_of(&vertices[u]);
        for v in (u + 1)..n {
            if bernoulli(rng, g.w(a, atom_of(&vertices[v]))) {
                edges.push((u, v, EdgeKind::Graphon));
            }
        }
    }
    for u in 0..n {
        let leaves = poisson(rng, t * g.star()[atom_of(&vertices[u])]);
        for _ in 0..leaves {
            vertices.push(Vertex { birth: rng.random_range(0.0..=t), feature: Feature::Infinity });
            edges.push((u, vertices.len() - 1, EdgeKind::Star));
        }
    }
    let dust_edges = poisson(rng, t * t * g.dust());
    for _ in 0..dust_edges {
        for _ in 0..2 {
            vertices.push(Vertex { birth: rng.random_range(0.0..=t), feature: Feature::Infinity });
        }
        edges.push((vertices.len() - 2, vertices.len() - 1, EdgeKind::Dust));
    }
    (vertices, edges)
}

pub(crate) fn shared_cloud(g: &StepGraphex, t: f64, seed: u64) -> Vec<Vertex> {
    vertex_cloud(g, t, &mut stream_rng(seed, streams::MAIN))
}

fn sample_core(g: &StepGraphex, t: f64, seed: u64, keep_isolated: bool, loops: Option<&[f64]>) -> SampledGraph {
    let mut rng = stream_rng(seed, streams::MAIN);
    let cloud = vertex_cloud(g, t, &mut rng);
    let n = cloud.len();
    let (vertices, mut edges) = edges_on_cloud(g, t, cloud, &mut rng);
    if let Some(diag) = loops {
        let mut loop_rng = stream_rng(seed, streams::LOOPS);
        for u in 0..n {
            if bernoulli(&mut loop_rng, diag[atom_of(&vertices[u])]) {
                edges.push((u, u, EdgeKind::Loop));
            }
        }
    }
    let mut out = SampledGraph {
        t,
        mode: if loops.is_some() { SampleMode::Loops } else { SampleMode::Plain },
        vertices,
        edges,
        keep_isolated,
    };
    if !keep_isolated {
        out.drop_isolated();
    }
    out
}

/// One sample of the graphex process `G_T`.
pub fn sample_process(g: &StepGraphex, t: f64, seed: u64, keep_isolated: bool) -> Result<SampledGraph> {
    check_horizon(g, t)?;
    Ok(sample_core(g, t, seed, keep_isolated, None))
}

/// `sample_process` plus a Bernoulli(`W(x,x)`) loop per vertex, with `W(x,x)` read
/// from the graphon diagonal.
pub fn sample_with_loops(g: &StepGraphex, t: f64, seed: u64, keep_isolated: bool) -> Result<SampledGraph> {
    let diag: Vec<f64> = (0..g.atoms()).map(|i| g.w(i, i)).collect();
    sample_with_loop_diagonal(g, &diag, t, seed, keep_isolated)
}

/// Loop sampling with the diagonal values given separately from the graphon
/// matrix, whose diagonal entries govern pairs of distinct points on one atom.
pub fn sample_with_loop_diagonal(
    g: &StepGraphex,
    diag: &[f64],
    t: f64,
    seed: u64,
    keep_isolated: bool,
) -> Result<SampledGraph> {
    check_horizon(g, t)?;
    if diag.len() != g.atoms() {
        return Err(domain("one loop value per atom required"));
    }
    if diag.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(domain("loop values must lie in [0,1]"));
    }
    Ok(sample_core(g, t, seed, keep_isolated, Some(diag)))
}

#[derive(Clone, Debug, Default)]
pub struct TrialOptions {
    pub keep_isolated: bool,
    pub loops: bool,
}

/// Independent trials with per-trial seeds derived from `seed`; the output order
/// and content do not depend on the thread count.
pub fn sample_trials(
    g: &StepGraphex,
    t: f64,
    trials: usize,
    seed: u64,
    opts: &TrialOptions,
) -> Result<Vec<SampledGraph>> {
    check_horizon(g, t)?;
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let s = child_seed(seed, k as u64);
            if opts.loops {
                sample_with_loops(g, t, s, opts.keep_isolated)
            } else {
                sample_process(g, t, s, opts.keep_isolated)
            }
        })
        .collect()
}

/// Vertex cloud with edge probabilities `W(x_u, x_v)` recorded as weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedGraph {
    pub t: f64,
    pub vertices: Vec<Vertex>,
    /// `(u, v, weight)` with `u < v` and weight in `(0, 1]`.
    pub weights: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(t: f64, vertices: Vec<Vertex>, weights: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(u, v, w) in &weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(domain(format!("weight {w} outside [0,1]")));
            }
            if u == v || u >= vertices.len() || v >= vertices.len() {
                return Err(domain(format!("bad weighted pair ({u},{v})")));
            }
        }
        Ok(WeightedGraph { t, vertices, weights })
    }

    /// Dense symmetric weight matrix.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.vertices.len();
        let mut out = vec![0.0; n * n];
        for &(u, v, w) in &self.weights {
            out[u * n + v] = w;
            out[v * n + u] = w;
        }
        out
    }
}

/// The weighted graph `H_T(W)`: same vertex cloud as [`sample_process`] under
/// the same seed, star and dust ignored.
pub fn sample_weighted(g: &StepGraphex, t: f64, seed: u64) -> Result<WeightedGraph> {
    check_horizon(g, t)?;
    let mut rng = stream_rng(seed, streams::MAIN);
    let vertices = vertex_cloud(g, t, &mut rng);
    let mut weights = Vec::new();
    for u in 0..vertices.len() {
        for v in (u + 1)..vertices.len() {
            let w = g.w(atom_of(&vertices[u]), atom_of(&vertices[v]));
            if w > 0.0 {
                weights.push((u, v, w));
            }
        }
    }
    Ok(WeightedGraph { t, vertices, weights })
}

/// Independent Bernoulli(weight) edges; all vertices are kept.
pub fn realize(h: &WeightedGraph, seed: u64) -> Result<SampledGraph> {
    if let Some(&(_, _, w)) = h.weights.iter().find(|x| !(0.0..=1.0).contains(&x.2)) {
        return Err(domain(format!("weight {w} outside [0,1]")));
    }
    let mut rng = stream_rng(seed, streams::REALIZE);
    let edges = h
        .weights
        .iter()
        .filter(|&&(_, _, w)| bernoulli(&mut rng, w))
        .map(|&(u, v, _)| (u, v, EdgeKind::Graphon))
        .collect();
    Ok(SampledGraph { t: h.t, mode: SampleMode::Plain, vertices: h.vertices.clone(), edges, keep_isolated: true })
}

/// Keeps each vertex independently with probability `p`, then drops isolated vertices.
pub fn subsample(g: &PlainGraph, p: f64, seed: u64) -> Result<PlainGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("keep probability {p} outside [0,1]")));
    }
    let mut rng = stream_rng(seed, streams::MAIN);
    let keep: Vec<bool> = (0..g.n).map(|_| bernoulli(&mut rng, p)).collect();
    let edges = g.edges.iter().copied().filter(|&(u, v)| keep[u] && keep[v]).collect();
    Ok(PlainGraph { n: g.n, edges }.without_isolated())
}
