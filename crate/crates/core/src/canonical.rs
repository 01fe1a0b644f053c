//! Canonical forms of step graphexes and an equivalence test built on them.
//!
//! The canonical form drops atoms of zero degree, merges atoms with equal rows
//! and star values, and orders the remaining atoms by colour refinement with
//! individualisation on ties.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{domain, precondition, Result};
use crate::graphex::StepGraphex;

pub const DEFAULT_TOL: f64 = 1e-9;
/// Leaves explored by the tie-breaking search before the first ordering found is used.
pub const MAX_ORDERING_LEAVES: usize = 4096;

#[derive(Clone, Debug, Serialize)]
pub struct CanonicalForm {
    pub graphex: StepGraphex,
    /// Canonical atom of each input atom; `None` for dropped atoms.
    pub map: Vec<Option<usize>>,
    /// False when the tie-breaking search hit [`MAX_ORDERING_LEAVES`].
    pub ordering_complete: bool,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Classes of atoms with equal rows and star values: exact matches first,
/// then classes whose representatives agree within `tol`.
fn twin_classes(g: &StepGraphex, atoms: &[usize], tol: f64) -> Vec<Vec<usize>> {
    let same = |a: usize, b: usize, exact: bool| {
        let eq = |x: f64, y: f64| if exact { x == y } else { close(x, y, tol) };
        eq(g.star()[a], g.star()[b]) && atoms.iter().all(|&k| eq(g.w(a, k), g.w(b, k)))
    };
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for &a in atoms {
        match classes.iter_mut().find(|c| same(c[0], a, true)) {
            Some(c) => c.push(a),
            None => classes.push(vec![a]),
        }
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    for c in classes {
        match merged.iter_mut().find(|m| same(m[0], c[0], false)) {
            Some(m) => m.extend(c),
            None => merged.push(c),
        }
    }
    merged
}

fn cmp_f64s(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Colour refinement on a reduced graphex given initial colours.
fn refine(g: &StepGraphex, mut colors: Vec<usize>) -> Vec<usize> {
    let m = g.atoms();
    loop {
        let keys: Vec<(usize, Vec<(usize, u64)>)> = (0..m)
            .map(|i| {
                let mut row: Vec<(usize, u64)> = (0..m).map(|k| (colors[k], g.w(i, k).to_bits())).collect();
                row.sort_unstable();
                (colors[i], row)
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let mut next = vec![0; m];
        let mut c = 0;
        for w in 0..m {
            if w > 0 && keys[order[w]] != keys[order[w - 1]] {
                c += 1;
            }
            next[order[w]] = c;
        }
        let classes_before = colors.iter().max().map_or(0, |x| x + 1);
        if c + 1 == classes_before || m == 0 {
            return next;
        }
        colors = next;
    }
}

fn initial_colors(g: &StepGraphex) -> Vec<usize> {
    let d = g.marginal().values;
    let m = g.atoms();
    let key = |i: usize| [d[i], g.masses()[i], g.star()[i], g.w(i, i)];
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| cmp_f64s(&key(a), &key(b)));
    let mut colors = vec![0; m];
    let mut c = 0;
    for w in 0..m {
        if w > 0 && cmp_f64s(&key(order[w]), &key(order[w - 1])) != Ordering::Equal {
            c += 1;
        }
        colors[order[w]] = c;
    }
    colors
}

/// Flattened representation under an ordering, compared lexicographically.
fn signature(g: &StepGraphex, order: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(order.len() * (order.len() + 2));
    for &i in order {
        out.push(g.masses()[i]);
        out.push(g.star()[i]);
    }
    for &i in order {
        for &j in order {
            out.push(g.w(i, j));
        }
    }
    out
}

struct OrderSearch<'a> {
    g: &'a StepGraphex,
    best: Option<(Vec<f64>, Vec<usize>)>,
    leaves: usize,
}

impl OrderSearch<'_> {
    fn run(&mut self, colors: Vec<usize>) {
        if self.leaves >= MAX_ORDERING_LEAVES && self.best.is_some() {
            return;
        }
        let colors = refine(self.g, colors);
        let m = colors.len();
        let mut counts = vec![0usize; m];
        for &c in &colors {
            counts[c] += 1;
        }
        match (0..m).find(|&c| counts[c] > 1) {
            None => {
                self.leaves += 1;
                let mut order = vec![0; m];
                for (i, &c) in colors.iter().enumerate() {
                    order[c] = i;
                }
                let sig = signature(self.g, &order);
                if self.best.as_ref().is_none_or(|b| cmp_f64s(&sig, &b.0) == Ordering::Less) {
                    self.best = Some((sig, order));
                }
            }
            Some(tied) => {
                for i in (0..m).filter(|&i| colors[i] == tied) {
                    // Individualise i: it keeps colour `tied`, the rest of the class moves after it.
                    let c: Vec<usize> = colors
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| if x > tied || (x == tied && k != i) { x + 1 } else { x })
                        .collect();
                    self.run(c);
                }
            }
        }
    }
}

/// Drops zero-degree atoms, merges twins and orders atoms canonically.
pub fn canonicalize(g: &StepGraphex, tol: f64) -> Result<CanonicalForm> {
    if g.is_signed() {
        return Err(precondition("canonical forms need an unsigned graphex"));
    }
    if !(tol >= 0.0) {
        return Err(domain("tolerance must be nonnegative"));
    }
    let d = g.marginal().values;
    let live: Vec<usize> = (0..g.atoms()).filter(|&i| d[i] != 0.0).collect();
    let dropped: f64 = (0..g.atoms()).filter(|&i| d[i] == 0.0).map(|i| g.masses()[i]).sum();
    let classes = twin_classes(g, &live, tol);
    let reps: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let masses: Vec<f64> = classes.iter().map(|c| c.iter().map(|&i| g.masses()[i]).sum()).collect();
    let reduced = g.pullback(&reps, masses);

    let mut search = OrderSearch { g: &reduced, best: None, leaves: 0 };
    search.run(initial_colors(&reduced));
    let ordering_complete = search.leaves < MAX_ORDERING_LEAVES;
    let order = search.best.map(|b| b.1).unwrap_or_default();
    let out = reduced.select(&order).with_isolated_mass(g.isolated_mass().plus(dropped));

    let mut position = vec![0; classes.len()];
    for (p, &c) in order.iter().enumerate() {
        position[c] = p;
    }
    let mut map = vec![None; g.atoms()];
    for (c, members) in classes.iter().enumerate() {
        for &i in members {
            map[i] = Some(position[c]);
        }
    }
    Ok(CanonicalForm { graphex: out, map, ordering_complete })
}

/// Rebuilds a graphex on the original atoms from a canonical form; dropped
/// atoms get zero rows.
pub fn pull_back(form: &CanonicalForm, masses: &[f64]) -> Result<StepGraphex> {
    if masses.len() != form.map.len() {
        return Err(domain("one mass per mapped atom required"));
    }
    let c = &form.graphex;
    let extra: Vec<f64> = form.map.iter().zip(masses).filter(|(m, _)| m.is_none()).map(|(_, &r)| r).collect();
    let with_zero = c.append_zero_atoms(&extra);
    let mut next_zero = c.atoms();
    let origin: Vec<usize> = form
        .map
        .iter()
        .map(|m| {
            m.unwrap_or_else(|| {
                next_zero += 1;
                next_zero - 1
            })
        })
        .collect();
    Ok(with_zero.pullback(&origin, masses.to_vec()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantMismatch {
    pub invariant: String,
    pub left: f64,
    pub right: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Equivalence {
    pub equivalent: bool,
    /// Canonical atom of `g2` matched to each canonical atom of `g1`.
    pub isomorphism: Option<Vec<usize>>,
    pub mismatches: Vec<InvariantMismatch>,
    pub forms: [StepGraphex; 2],
}

fn excess_mass(g: &StepGraphex, d: f64) -> f64 {
    let v = g.marginal().values;
    (0..g.atoms()).filter(|&i| v[i] > d).fold(0.0, |acc, i| acc + g.masses()[i])
}

fn find_bijection(a: &StepGraphex, b: &StepGraphex, tol: f64) -> Option<Vec<usize>> {
    let m = a.atoms();
    let (da, db) = (a.marginal().values, b.marginal().values);
    let fits = |i: usize, j: usize| {
        close(a.masses()[i], b.masses()[j], tol) && close(a.star()[i], b.star()[j], tol) && close(da[i], db[j], tol)
    };
    fn go(
        depth: usize,
        image: &mut Vec<usize>,
        used: &mut [bool],
        a: &StepGraphex,
        b: &StepGraphex,
        tol: f64,
        fits: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        if depth == a.atoms() {
            return true;
        }
        for j in 0..b.atoms() {
            if used[j] || !fits(depth, j) || !close(a.w(depth, depth), b.w(j, j), tol) {
                continue;
            }
            if !(0..depth).all(|k| close(a.w(depth, k), b.w(j, image[k]), tol)) {
                continue;
            }
            used[j] = true;
            image.push(j);
            if go(depth + 1, image, used, a, b, tol, fits) {
                return true;
            }
            image.pop();
            used[j] = false;
        }
        false
    }
    let mut image = Vec::with_capacity(m);
    let mut used = vec![false; b.atoms()];
    go(0, &mut image, &mut used, a, b, tol, &fits).then_some(image)
}

/// Decides equivalence through canonical forms. Isolated mass is ignored.
pub fn equivalent(g1: &StepGraphex, g2: &StepGraphex, tol: f64) -> Result<Equivalence> {
    let a = canonicalize(g1, tol)?.graphex;
    let b = canonicalize(g2, tol)?.graphex;
    let mut mismatches = Vec::new();
    let mut check = |name: &str, x: f64, y: f64| {
        if !close(x, y, tol * (1.0 + x.abs().max(y.abs()))) {
            mismatches.push(InvariantMismatch { invariant: name.to_string(), left: x, right: y });
        }
    };
    check("dust", a.dust(), b.dust());
    check("edge density", a.edge_density(), b.edge_density());
    check("degree-support mass", a.total_mass(), b.total_mass());
    let mut grid: Vec<f64> = a.marginal().values.into_iter().chain(b.marginal().values).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &d in std::iter::once(&0.0).chain(&grid) {
        let (x, y) = (excess_mass(&a, d), excess_mass(&b, d));
        if !close(x, y, tol * (1.0 + x.max(y))) {
            mismatches.push(InvariantMismatch { invariant: format!("mass with marginal above {d}"), left: x, right: y });
            break;
        }
    }
    if a.atoms() != b.atoms() {
        mismatches.push(InvariantMismatch {
            invariant: "canonical atom count".into(),
            left: a.atoms() as f64,
            right: b.atoms() as f64,
        });
    }
    let isomorphism = if mismatches.is_empty() { find_bijection(&a, &b, tol) } else { None };
    if mismatches.is_empty() && isomorphism.is_none() {
        mismatches.push(InvariantMismatch { invariant: "atom bijection".into(), left: 0.0, right: 0.0 });
    }
    Ok(Equivalence { equivalent: isomorphism.is_some(), isomorphism, mismatches, forms: [a, b] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn merges_identical_atoms() {
        let g = StepGraphex::new(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.1, 0.1], 0.0).unwrap();
        let c = canonicalize(&g, DEFAULT_TOL).unwrap();
        assert_eq!(c.graphex.masses(), &[1.0]);
        assert_eq!(c.graphex.w(0, 0), 0.5);
        assert_eq!(c.map, vec![Some(0), Some(0)]);
    }

    #[test]
    fn drops_zero_degree_atoms() {
        let g = StepGraphex::new(vec![1.0, 0.5], vec![vec![0.3, 0.0], vec![0.0, 0.0]], vec![0.0, 0.0], 0.0).unwrap();
        let c = canonicalize(&g, DEFAULT_TOL).unwrap();
        assert_eq!(c.graphex.atoms(), 1);
        assert_eq!(c.graphex.isolated_mass().as_f64(), 0.5);
        assert_eq!(c.map, vec![Some(0), None]);
    }

    #[test]
    fn ex1_keeps_both_atoms() {
        let g = fixtures::example_ex1(0.25);
        let c = canonicalize(&g, DEFAULT_TOL).unwrap();
        assert_eq!(c.graphex.atoms(), 2);
        let mut m = c.graphex.masses().to_vec();
        m.sort_by(f64::total_cmp);
        assert_eq!(m, vec![0.25, 0.75]);
    }

    #[test]
    fn equivalence_examples() {
        let g = fixtures::example_ex1(0.3);
        assert!(equivalent(&g, &g.split_atom(1, 3).unwrap(), DEFAULT_TOL).unwrap().equivalent);
        let r = equivalent(&fixtures::constant(0.5, 1.0), &fixtures::constant(0.3, 1.0), DEFAULT_TOL).unwrap();
        assert!(!r.equivalent);
        assert_eq!(r.mismatches[0].invariant, "edge density");
        let r = equivalent(&fixtures::example_ex1(0.25), &fixtures::example_ex1_partner(0.25), DEFAULT_TOL).unwrap();
        assert!(!r.equivalent);
        assert!(r.mismatches.iter().any(|m| m.invariant.starts_with("mass with marginal above")));
    }

    #[test]
    fn symmetric_ties_are_resolved() {
        // A 4-cycle of equal atoms: every atom has the same colour.
        let m = 4;
        let rows = (0..m)
            .map(|i| (0..m).map(|j| if (i + 1) % m == j || (j + 1) % m == i { 0.7 } else { 0.0 }).collect())
            .collect();
        let g = StepGraphex::graphon_only(vec![1.0; m], rows).unwrap();
        let c = canonicalize(&g, DEFAULT_TOL).unwrap();
        assert!(c.ordering_complete);
        let perm = [2, 0, 3, 1];
        let h = g.restrict(&perm).unwrap();
        assert_eq!(canonicalize(&h, DEFAULT_TOL).unwrap().graphex.to_json(), c.graphex.to_json());
    }

    fn arb() -> impl Strategy<Value = StepGraphex> {
        (1usize..6).prop_flat_map(|m| {
            (
                prop::collection::vec(prop::sample::select(vec![0.25, 0.5, 1.0, 2.0]), m),
                prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]), m * m),
                prop::collection::vec(prop::sample::select(vec![0.0, 0.5]), m),
            )
                .prop_map(move |(masses, w, star)| {
                    let rows = (0..m).map(|i| (0..m).map(|j| w[i.min(j) * m + i.max(j)]).collect()).collect();
                    StepGraphex::new(masses, rows, star, 0.0).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn idempotent_and_pullback_sound(g in arb()) {
            let c = canonicalize(&g, DEFAULT_TOL).unwrap();
            let again = canonicalize(&c.graphex, DEFAULT_TOL).unwrap();
            prop_assert_eq!(again.graphex.to_json(), c.graphex.to_json());
            let back = pull_back(&c, g.masses()).unwrap();
            prop_assert_eq!(back.graphon_flat(), g.graphon_flat());
            prop_assert_eq!(back.star(), g.star());
            prop_assert_eq!(back.dust(), g.dust());
        }

        #[test]
        fn permutation_invariant(g in arb(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..g.atoms()).collect();
            perm.shuffle(&mut crate::rng::stream_rng(seed, 0));
            let h = g.restrict(&perm).unwrap();
            let a = canonicalize(&g, DEFAULT_TOL).unwrap().graphex;
            let b = canonicalize(&h, DEFAULT_TOL).unwrap().graphex;
            prop_assert_eq!(a.graphon_flat(), b.graphon_flat());
            prop_assert_eq!(a.star(), b.star());
            prop_assert!(equivalent(&g, &h, DEFAULT_TOL).unwrap().equivalent);
        }
    }
}
