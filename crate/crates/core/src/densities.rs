//! Homomorphism densities of multigraph patterns in step graphexes, and
//! injective homomorphism counts in finite graphs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{domain, precondition, GraphexError, Result};
use crate::graphex::{check_same_space, StepGraphex};
use crate::sampling::PlainGraph;

/// Default limit on `|V_{>=2}|` per component.
pub const DEFAULT_CORE_CAP: usize = 8;
/// Default limit on the number of atoms.
pub const DEFAULT_ATOM_CAP: usize = 64;

/// Loopless multigraph pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

pub const PRESETS: &[&str] = &["edge", "path2", "triangle", "star3", "c4", "two_edges"];

impl PatternGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(u, v) in &edges {
            if u == v {
                return Err(domain(format!("pattern loop at vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(domain(format!("pattern edge ({u},{v}) out of range")));
            }
        }
        Ok(PatternGraph { n, edges })
    }

    pub fn preset(name: &str) -> Option<PatternGraph> {
        let edges: &[(usize, usize)] = match name {
            "edge" => &[(0, 1)],
            "path2" => &[(0, 1), (1, 2)],
            "triangle" => &[(0, 1), (1, 2), (2, 0)],
            "star3" => &[(0, 1), (0, 2), (0, 3)],
            "c4" => &[(0, 1), (1, 2), (2, 3), (3, 0)],
            "two_edges" => &[(0, 1), (2, 3)],
            _ => return None,
        };
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Some(PatternGraph { n, edges: edges.to_vec() })
    }

    /// A preset name or an edge list such as `0-1,1-2,2-0`.
    pub fn parse_or_preset(text: &str) -> Result<PatternGraph> {
        Self::preset(text.trim()).map_or_else(|| text.parse(), Ok)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    pub fn is_simple(&self) -> bool {
        let mut seen: Vec<(usize, usize)> = self.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }

    pub fn has_isolated(&self) -> bool {
        self.degrees().contains(&0)
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Edge index lists of the connected components (isolated vertices ignored).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(u, v) in &self.edges {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            parent[a] = b;
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (k, &(u, _)) in self.edges.iter().enumerate() {
            let r = find(&mut parent, u);
            match groups.iter_mut().find(|g| g.0 == r) {
                Some(g) => g.1.push(k),
                None => groups.push((r, vec![k])),
            }
        }
        groups.into_iter().map(|g| g.1).collect()
    }

    /// Vertices of degree at least two.
    pub fn core_vertices(&self) -> Vec<usize> {
        self.degrees().iter().enumerate().filter(|(_, &d)| d >= 2).map(|(v, _)| v).collect()
    }

    fn sub_pattern(&self, edge_ids: &[usize]) -> PatternGraph {
        PatternGraph { n: self.n, edges: edge_ids.iter().map(|&k| self.edges[k]).collect() }
    }
}

impl FromStr for PatternGraph {
    type Err = GraphexError;

    fn from_str(s: &str) -> Result<PatternGraph> {
        let mut edges = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| GraphexError::Parse(format!("pattern edge '{part}' must look like 0-1")))?;
            let parse = |x: &str| {
                x.trim().parse::<usize>().map_err(|_| GraphexError::Parse(format!("bad vertex '{x}'")))
            };
            edges.push((parse(a)?, parse(b)?));
        }
        if edges.is_empty() {
            return Err(GraphexError::Parse("empty pattern".into()));
        }
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let f = PatternGraph::new(n, edges)?;
        if f.has_isolated() {
            return Err(GraphexError::Parse("pattern vertices must be numbered without gaps".into()));
        }
        Ok(f)
    }
}

impl fmt::Display for PatternGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.edges.iter().map(|(u, v)| format!("{u}-{v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DensityCaps {
    pub core: usize,
    pub atoms: usize,
}

impl Default for DensityCaps {
    fn default() -> Self {
        DensityCaps { core: DEFAULT_CORE_CAP, atoms: DEFAULT_ATOM_CAP }
    }
}

/// Evaluation plan for one connected pattern; edge references are indices into
/// the per-edge graphex list.
struct Plan<'a> {
    masses: &'a [f64],
    graphs: Vec<&'a StepGraphex>,
    marginals: Vec<Vec<f64>>,
    /// Free core variables in evaluation order.
    order: Vec<usize>,
    /// Per free variable: edges to already placed vertices as `(vertex, edge)`.
    back_edges: Vec<Vec<(usize, usize)>>,
    /// Per free variable: edges to pendant vertices.
    pendants: Vec<Vec<usize>>,
    root: Option<(usize, usize)>,
    root_pendants: Vec<usize>,
    vertex_count: usize,
}

impl<'a> Plan<'a> {
    fn build(f: &PatternGraph, edge_ids: &[usize], graphs: &[&'a StepGraphex], root: Option<(usize, usize)>) -> Plan<'a> {
        let mut deg = vec![0usize; f.n];
        for &k in edge_ids {
            deg[f.edges[k].0] += 1;
            deg[f.edges[k].1] += 1;
        }
        let root_vertex = root.map(|r| r.0);
        let in_tilde = |v: usize| deg[v] >= 2 || Some(v) == root_vertex;
        let local: Vec<(usize, usize)> = edge_ids.iter().map(|&k| f.edges[k]).collect();
        let other_end = |k: usize, v: usize| {
            let (a, b) = local[k];
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        };

        // Each free variable after the first touches a placed one when possible.
        let mut remaining: Vec<usize> = (0..f.n).filter(|&v| deg[v] >= 2 && Some(v) != root_vertex).collect();
        let mut placed: Vec<usize> = root_vertex.into_iter().collect();
        let mut order = Vec::new();
        while !remaining.is_empty() {
            let pick = remaining
                .iter()
                .position(|&v| (0..local.len()).any(|k| other_end(k, v).is_some_and(|o| placed.contains(&o))))
                .unwrap_or(0);
            let v = remaining.remove(pick);
            order.push(v);
            placed.push(v);
        }

        let mut back_edges = Vec::new();
        let mut pendants = Vec::new();
        for (idx, &v) in order.iter().enumerate() {
            let mut back = Vec::new();
            let mut pend = Vec::new();
            for k in 0..local.len() {
                let Some(o) = other_end(k, v) else { continue };
                if !in_tilde(o) {
                    pend.push(k);
                } else if Some(o) == root_vertex || order[..idx].contains(&o) {
                    back.push((o, k));
                }
            }
            back_edges.push(back);
            pendants.push(pend);
        }
        let mut root_pendants = Vec::new();
        if let Some(r) = root_vertex.filter(|&r| deg[r] >= 2) {
            root_pendants = (0..local.len()).filter(|&k| other_end(k, r).is_some_and(|o| !in_tilde(o))).collect();
        }
        Plan {
            masses: graphs[0].masses(),
            marginals: graphs.iter().map(|g| g.marginal().values).collect(),
            graphs: graphs.to_vec(),
            order,
            back_edges,
            pendants,
            root,
            root_pendants,
            vertex_count: f.n,
        }
    }

    fn evaluate(&self) -> f64 {
        let mut z = vec![usize::MAX; self.vertex_count];
        let mut base = 1.0;
        if let Some((r, x)) = self.root {
            z[r] = x;
            base = self.root_pendants.iter().map(|&k| self.marginals[k][x]).product();
        }
        if base == 0.0 || self.order.is_empty() {
            return base;
        }
        let first: Vec<f64> = (0..self.masses.len())
            .into_par_iter()
            .map(|x0| {
                let w = self.factor(0, x0, &z);
                if w == 0.0 {
                    return 0.0;
                }
                let mut z = z.clone();
                z[self.order[0]] = x0;
                w * self.recurse(1, &mut z)
            })
            .collect();
        base * first.iter().sum::<f64>()
    }

    fn factor(&self, depth: usize, x: usize, z: &[usize]) -> f64 {
        let mut w = self.masses[x];
        for &(other, k) in &self.back_edges[depth] {
            w *= self.graphs[k].w(x, z[other]);
            if w == 0.0 {
                return 0.0;
            }
        }
        for &k in &self.pendants[depth] {
            w *= self.marginals[k][x];
        }
        w
    }

    fn recurse(&self, depth: usize, z: &mut [usize]) -> f64 {
        if depth == self.order.len() {
            return 1.0;
        }
        let v = self.order[depth];
        let mut total = 0.0;
        for x in 0..self.masses.len() {
            let w = self.factor(depth, x, z);
            if w == 0.0 {
                continue;
            }
            z[v] = x;
            total += w * self.recurse(depth + 1, z);
        }
        z[v] = usize::MAX;
        total
    }
}

fn check_caps(core: usize, g: &StepGraphex, caps: &DensityCaps) -> Result<()> {
    if core > caps.core {
        return Err(GraphexError::Cap(format!("{core} vertices of degree >= 2 exceed the cap {}", caps.core)));
    }
    if g.atoms() > caps.atoms {
        return Err(GraphexError::Cap(format!("{} atoms exceed the cap {}", g.atoms(), caps.atoms)));
    }
    Ok(())
}

fn component_density(f: &PatternGraph, edge_ids: &[usize], graphs: &[&StepGraphex], caps: &DensityCaps) -> Result<f64> {
    if edge_ids.len() == 1 {
        return Ok(graphs[0].edge_density());
    }
    let sub = f.sub_pattern(edge_ids);
    check_caps(sub.core_vertices().len(), graphs[0], caps)?;
    Ok(Plan::build(f, edge_ids, graphs, None).evaluate())
}

/// `t(F, g)`: product over components of the exact finite sum.
pub fn hom_density(f: &PatternGraph, g: &StepGraphex) -> Result<f64> {
    hom_density_with_caps(f, g, &DensityCaps::default())
}

pub fn hom_density_with_caps(f: &PatternGraph, g: &StepGraphex, caps: &DensityCaps) -> Result<f64> {
    let assignment = vec![g; f.edges.len()];
    mixed_density_with_caps(f, &assignment, caps)
}

/// Density with a separate graphex on each edge (in edge order); all graphexes
/// share one set of atoms.
pub fn mixed_density(f: &PatternGraph, assignment: &[&StepGraphex]) -> Result<f64> {
    mixed_density_with_caps(f, assignment, &DensityCaps::default())
}

fn check_assignment(f: &PatternGraph, assignment: &[&StepGraphex]) -> Result<()> {
    if assignment.len() != f.edges.len() {
        return Err(domain(format!("{} graphexes for {} edges", assignment.len(), f.edges.len())));
    }
    if f.edges.is_empty() {
        return Err(domain("pattern without edges"));
    }
    if f.has_isolated() {
        return Err(precondition("pattern has an isolated vertex"));
    }
    for g in &assignment[1..] {
        check_same_space(assignment[0], g)?;
    }
    Ok(())
}

pub fn mixed_density_with_caps(f: &PatternGraph, assignment: &[&StepGraphex], caps: &DensityCaps) -> Result<f64> {
    check_assignment(f, assignment)?;
    let mut out = 1.0;
    for comp in f.components() {
        let graphs: Vec<&StepGraphex> = comp.iter().map(|&k| assignment[k]).collect();
        out *= component_density(f, &comp, &graphs, caps)?;
        if out == 0.0 {
            break;
        }
    }
    Ok(out)
}

/// `t_x(F, W_F)`: the density of a connected pattern with the image of `root`
/// fixed at atom `x`.
pub fn rooted_density(f: &PatternGraph, root: usize, x: usize, assignment: &[&StepGraphex]) -> Result<f64> {
    check_assignment(f, assignment)?;
    if !f.is_connected() {
        return Err(precondition("rooted densities need a connected pattern"));
    }
    if root >= f.n {
        return Err(domain(format!("root {root} out of range")));
    }
    if x >= assignment[0].atoms() {
        return Err(domain(format!("atom {x} out of range")));
    }
    if f.edges.len() == 1 {
        return Ok(assignment[0].marginal().values[x]);
    }
    let ids: Vec<usize> = (0..f.edges.len()).collect();
    let core = f.core_vertices().iter().filter(|&&v| v != root).count();
    check_caps(core, assignment[0], &DensityCaps::default())?;
    Ok(Plan::build(f, &ids, assignment, Some((root, x))).evaluate())
}

/// Number of injective edge-preserving maps from a simple pattern into `g`.
pub fn inj_count(f: &PatternGraph, g: &PlainGraph) -> Result<u64> {
    if !f.is_simple() {
        return Err(precondition("injective counts need a simple pattern"));
    }
    if f.has_isolated() {
        return Err(precondition("pattern has an isolated vertex"));
    }
    let adj = g.adjacency();
    let fdeg = f.degrees();
    let mut fadj = vec![Vec::new(); f.n];
    for &(u, v) in &f.edges {
        fadj[u].push(v);
        fadj[v].push(u);
    }
    // Place vertices so that each one (after a component's first) has a placed neighbour.
    let mut order: Vec<usize> = Vec::new();
    while order.len() < f.n {
        let start = (0..f.n).filter(|v| !order.contains(v)).max_by_key(|&v| fdeg[v]).unwrap();
        order.push(start);
        let mut i = order.len() - 1;
        while i < order.len() {
            let mut next: Vec<usize> = fadj[order[i]].iter().copied().filter(|v| !order.contains(v)).collect();
            next.sort_by_key(|&v| std::cmp::Reverse(fdeg[v]));
            next.dedup();
            for v in next {
                if !order.contains(&v) {
                    order.push(v);
                }
            }
            i += 1;
        }
    }
    let placed_nbrs: Vec<Vec<usize>> = order
        .iter()
        .enumerate()
        .map(|(i, &v)| fadj[v].iter().copied().filter(|u| order[..i].contains(u)).collect())
        .collect();

    struct Search<'a> {
        adj: &'a [Vec<usize>],
        order: &'a [usize],
        placed_nbrs: &'a [Vec<usize>],
        fdeg: &'a [usize],
        image: Vec<usize>,
        used: Vec<bool>,
    }
    impl Search<'_> {
        fn go(&mut self, depth: usize) -> u64 {
            if depth == self.order.len() {
                return 1;
            }
            let v = self.order[depth];
            let need = self.fdeg[v];
            let candidates: Vec<usize> = match self.placed_nbrs[depth].first() {
                Some(&u) => self.adj[self.image[u]].clone(),
                None => (0..self.adj.len()).collect(),
            };
            let mut total = 0;
            for c in candidates {
                if self.used[c] || self.adj[c].len() < need {
                    continue;
                }
                if !self.placed_nbrs[depth].iter().all(|&u| self.adj[c].binary_search(&self.image[u]).is_ok()) {
                    continue;
                }
                self.used[c] = true;
                self.image[v] = c;
                total += self.go(depth + 1);
                self.used[c] = false;
            }
            total
        }
    }
    let mut s = Search {
        adj: &adj,
        order: &order,
        placed_nbrs: &placed_nbrs,
        fdeg: &fdeg,
        image: vec![usize::MAX; f.n],
        used: vec![false; g.n],
    };
    Ok(s.go(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn pat(s: &str) -> PatternGraph {
        PatternGraph::parse_or_preset(s).unwrap()
    }

    /// Independent oracle: sums over all atom assignments of every vertex of
    /// `F`, treating the pure graphon case where pendants reduce to marginals.
    fn brute_graphon(f: &PatternGraph, g: &StepGraphex) -> f64 {
        let m = g.atoms();
        let mut total = 0.0;
        let mut z = vec![0usize; f.vertex_count()];
        loop {
            let mut w: f64 = z.iter().map(|&x| g.masses()[x]).product();
            for &(u, v) in f.edges() {
                w *= g.w(z[u], z[v]);
            }
            total += w;
            let mut k = 0;
            loop {
                if k == z.len() {
                    return total;
                }
                z[k] += 1;
                if z[k] < m {
                    break;
                }
                z[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn examples() {
        let star = fixtures::star_only(1.0, 1.0);
        assert!((hom_density(&pat("edge"), &star).unwrap() - 2.0).abs() < 1e-15);
        let c = fixtures::constant(0.5, 1.0);
        assert!((hom_density(&pat("triangle"), &c).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(hom_density(&pat("triangle"), &fixtures::example_ex1(0.25)).unwrap(), 0.0);
    }

    #[test]
    fn pendant_marginals_include_star() {
        // path2 on a star-only graphex: D(x) = S, center integral = rho * S^2.
        let g = StepGraphex::new(vec![2.0], vec![vec![0.0]], vec![0.5], 0.0).unwrap();
        assert!((hom_density(&pat("path2"), &g).unwrap() - 2.0 * 0.25).abs() < 1e-15);
        assert!((hom_density(&pat("star3"), &g).unwrap() - 2.0 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn parse_and_presets() {
        assert_eq!(pat("0-1,1-2,2-0"), PatternGraph::preset("triangle").unwrap());
        assert!("0-0".parse::<PatternGraph>().is_err());
        assert!("0-2".parse::<PatternGraph>().is_err());
        assert!("x".parse::<PatternGraph>().is_err());
        for name in PRESETS {
            assert!(PatternGraph::preset(name).is_some());
        }
        assert_eq!(pat("two_edges").components().len(), 2);
        assert!(!pat("0-1,0-1").is_simple());
    }

    #[test]
    fn caps_enforced() {
        let long: Vec<String> = (0..11).map(|i| format!("{i}-{}", i + 1)).collect();
        let f = pat(&long.join(","));
        assert!(matches!(hom_density(&f, &fixtures::constant(0.5, 1.0)), Err(GraphexError::Cap(_))));
        let big = StepGraphex::graphon_only(vec![0.01; 65], vec![vec![0.1; 65]; 65]).unwrap();
        assert!(matches!(hom_density(&pat("triangle"), &big), Err(GraphexError::Cap(_))));
        assert!(hom_density(&pat("edge"), &big).is_ok());
    }

    #[test]
    fn mixed_and_rooted_examples() {
        let g = fixtures::example_ex1(0.3);
        let zero = StepGraphex::graphon_only(g.masses().to_vec(), vec![vec![0.0; 2]; 2]).unwrap();
        assert_eq!(mixed_density(&pat("path2"), &[&g, &zero]).unwrap(), 0.0);
        let c = fixtures::constant(0.5, 1.0);
        assert!((rooted_density(&pat("edge"), 0, 0, &[&c]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inj_examples() {
        let tri = PlainGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(inj_count(&pat("edge"), &tri).unwrap(), 6);
        assert_eq!(inj_count(&pat("triangle"), &tri).unwrap(), 6);
        let star = PlainGraph::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(inj_count(&pat("path2"), &star).unwrap(), 6);
        assert_eq!(inj_count(&pat("two_edges"), &star).unwrap(), 0);
        let two = PlainGraph::new(4, vec![(0, 1), (2, 3)]).unwrap();
        assert_eq!(inj_count(&pat("two_edges"), &two).unwrap(), 8);
        assert!(inj_count(&pat("0-1,0-1"), &two).is_err());
    }

    fn arb_graphex(max_atoms: usize, signed: bool) -> impl Strategy<Value = StepGraphex> {
        (1..=max_atoms).prop_flat_map(move |m| {
            let lo = if signed { -1.0 } else { 0.0 };
            (
                prop::collection::vec(0.1f64..2.0, m),
                prop::collection::vec(lo..1.0f64, m * m),
                prop::collection::vec(lo.max(-1.0)..1.0f64, m),
                0.0f64..0.5,
            )
                .prop_map(move |(masses, w, star, dust)| {
                    let mut rows = vec![vec![0.0; m]; m];
                    for i in 0..m {
                        for j in 0..=i {
                            rows[i][j] = w[i * m + j];
                            rows[j][i] = w[i * m + j];
                        }
                    }
                    if signed {
                        StepGraphex::new_signed(masses, rows, star, dust).unwrap()
                    } else {
                        StepGraphex::new(masses, rows, star, dust).unwrap()
                    }
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_brute_force_on_graphons(g in arb_graphex(4, false), name in prop::sample::select(PRESETS)) {
            let g = StepGraphex::graphon_only(g.masses().to_vec(), g.graphon_rows()).unwrap();
            let f = pat(name);
            let a = hom_density(&f, &g).unwrap();
            let b = brute_graphon(&f, &g);
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }

        #[test]
        fn multiplicative_and_refinement_invariant(g in arb_graphex(4, false), k in 2usize..4) {
            let tri = pat("triangle");
            let path = pat("path2");
            let both = pat("0-1,1-2,2-0,3-4,4-5");
            let prod = hom_density(&tri, &g).unwrap() * hom_density(&path, &g).unwrap();
            prop_assert!((hom_density(&both, &g).unwrap() - prod).abs() <= 1e-10 * prod.max(1.0));
            let split = g.split_atom(0, k).unwrap();
            for name in PRESETS {
                let f = pat(name);
                let a = hom_density(&f, &g).unwrap();
                let b = hom_density(&f, &split).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }

        #[test]
        fn cd_bound(g in arb_graphex(4, false), name in prop::sample::select(PRESETS)) {
            let f = pat(name);
            let d = g.max_marginal();
            let bound: f64 = f.components().iter().map(|c| {
                let sub = f.sub_pattern(c);
                let v = sub.degrees().iter().filter(|&&x| x > 0).count() as i32;
                g.l1_norm() * d.powi(v - 2)
            }).product();
            prop_assert!(hom_density(&f, &g).unwrap() <= bound * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn tree_bounds_on_signed(gs in prop::collection::vec(arb_graphex(3, true), 4), root in 0usize..4, x in 0usize..3) {
            let masses = gs[0].masses().to_vec();
            let gs: Vec<StepGraphex> = gs.iter().map(|g| {
                let m = masses.len();
                let mut rows = vec![vec![0.0; m]; m];
                let src = g.graphon_rows();
                for i in 0..m { for j in 0..m { rows[i][j] = src[i % src.len()][j % src.len()]; } }
                let star = (0..m).map(|i| g.star()[i % g.atoms()]).collect();
                StepGraphex::new_signed(masses.clone(), rows, star, g.dust()).unwrap()
            }).collect();
            let refs: Vec<&StepGraphex> = gs.iter().collect();
            // c4 with spanning tree {e0,e1,e2}; f = e0 = (0,1).
            let f = pat("c4");
            let t = mixed_density(&f, &refs).unwrap();
            let sup_d = |g: &StepGraphex| g.abs_marginal().into_iter().fold(0.0, f64::max);
            let bound = gs[0].l1_norm() * sup_d(&gs[1]) * sup_d(&gs[2]) * gs[3].max_graphon();
            prop_assert!(t.abs() <= bound * (1.0 + 1e-10) + 1e-12);
            // path2 0-1-2: edges e0, e1; both in the tree.
            let p = pat("path2");
            let pr = [refs[0], refs[1]];
            let t = mixed_density(&p, &pr).unwrap();
            prop_assert!(t.abs() <= gs[0].l1_norm() * sup_d(&gs[1]) * (1.0 + 1e-10) + 1e-12);

            let x = x % masses.len();
            let root = root % 4;
            // Edge f adjacent to the root: (root-1, root) or (root, root+1) in c4.
            let f_idx = root;
            let others: Vec<usize> = (0..4).filter(|&k| k != f_idx).collect();
            // Tree = all edges but the one opposite f in the cycle order after f.
            let non_tree = others[1];
            let tree_rest: Vec<usize> = others.iter().copied().filter(|&k| k != non_tree).collect();
            let tx = rooted_density(&f, root, x, &refs).unwrap();
            let d_f = gs[f_idx].abs_marginal()[x];
            let bound = d_f * tree_rest.iter().map(|&k| sup_d(&gs[k])).product::<f64>() * gs[non_tree].max_graphon();
            prop_assert!(tx.abs() <= bound * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn rooted_integrates_to_mixed(g in arb_graphex(4, false), h in arb_graphex(4, false), name in prop::sample::select(&["path2", "triangle", "c4", "star3"][..])) {
            let h = StepGraphex::new(g.masses().to_vec(), (0..g.atoms()).map(|i| (0..g.atoms()).map(|j| h.w(i % h.atoms(), j % h.atoms())).collect()).collect(), vec![0.1; g.atoms()], 0.0).unwrap();
            let f = pat(name);
            let refs: Vec<&StepGraphex> = (0..f.edges().len()).map(|k| if k % 2 == 0 { &g } else { &h }).collect();
            let root = f.core_vertices()[0];
            let total: f64 = (0..g.atoms()).map(|x| rooted_density(&f, root, x, &refs).unwrap() * g.masses()[x]).sum();
            let mixed = mixed_density(&f, &refs).unwrap();
            prop_assert!((total - mixed).abs() <= 1e-10 * mixed.abs().max(1.0));
        }

        #[test]
        fn counting_lemma(g1 in arb_graphex(4, false), g2 in arb_graphex(4, false), name in prop::sample::select(&["path2", "triangle", "c4"][..])) {
            let m = g1.atoms();
            let rows2 = (0..m).map(|i| (0..m).map(|j| g2.w(i % g2.atoms(), j % g2.atoms())).collect()).collect();
            let star2 = (0..m).map(|i| g2.star()[i % g2.atoms()]).collect();
            let g2 = StepGraphex::new(g1.masses().to_vec(), rows2, star2, g2.dust()).unwrap();
            let f = pat(name);
            let diff = g1.difference(&g2).unwrap();
            let eps = crate::norms::kernel(&diff.graphon_function()).max(diff.marginal_l2_squared().sqrt());
            let c = g1.l1_norm().max(g2.l1_norm());
            let d = g1.max_marginal().max(g2.max_marginal());
            let (ne, nv) = (f.edges().len() as f64, f.vertex_count() as i32);
            let bound = ne * eps * c.max((c * d).sqrt()) * d.powi(nv - 3);
            let gap = (hom_density(&f, &g1).unwrap() - hom_density(&f, &g2).unwrap()).abs();
            prop_assert!(gap <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }
}
