//! Same-space distances, coupling search for kernel-distance upper bounds and
//! weak kernel distance estimates.

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, precondition, GraphexError, Result};
use crate::graphex::{check_same_space, IsolatedMass, StepGraphex};
use crate::norms::{self, StepFunction1D, StepFunction2D};
use crate::rng::{child_seed, stream_rng};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DistanceBreakdown {
    pub kernel_component: f64,
    /// `||D_1 - D_2||_2`, before the square root is taken.
    pub marginal_l2_component: f64,
    pub density_gap_component: f64,
    pub d22: f64,
    pub d_jbl: f64,
    /// False when the jumble part came from the heuristic search (a lower bound).
    pub d_jbl_exact: bool,
}

impl DistanceBreakdown {
    fn from_components(kernel: f64, marginal: f64, gap: f64) -> Self {
        DistanceBreakdown {
            kernel_component: kernel,
            marginal_l2_component: marginal,
            density_gap_component: gap,
            d22: combine(kernel, marginal, gap),
            d_jbl: 0.0,
            d_jbl_exact: true,
        }
    }
}

/// `max(kernel, sqrt(marginal), cbrt(gap))`.
pub fn combine(kernel: f64, marginal: f64, gap: f64) -> f64 {
    kernel.max(marginal.sqrt()).max(gap.cbrt())
}

/// Restarts used for the jumble part of `d_jbl` above the exact cap.
const JUMBLE_RESTARTS: usize = 20;

/// Distances between two graphexes on identical atoms.
pub fn d22(g1: &StepGraphex, g2: &StepGraphex) -> Result<DistanceBreakdown> {
    check_same_space(g1, g2)?;
    let diff = g1.difference(g2)?;
    Ok(breakdown_of_difference(&diff, true))
}

/// Only the three `d22` components, skipping the jumble search.
pub fn d22_only(g1: &StepGraphex, g2: &StepGraphex) -> Result<DistanceBreakdown> {
    check_same_space(g1, g2)?;
    let diff = g1.difference(g2)?;
    Ok(breakdown_of_difference(&diff, false))
}

/// Breakdown of a signed difference graphex.
pub fn breakdown_of_difference(diff: &StepGraphex, with_jumble: bool) -> DistanceBreakdown {
    let u = diff.graphon_function();
    let kernel = norms::kernel(&u);
    let marg = diff.marginal();
    let marginal: f64 = marg
        .values
        .iter()
        .zip(diff.masses())
        .map(|(d, r)| d * d * r)
        .sum::<f64>()
        .sqrt();
    let gap = diff.edge_density().abs();
    let mut out = DistanceBreakdown::from_components(kernel, marginal, gap);
    if with_jumble {
        let j = norms::jumble_norm(&u, JUMBLE_RESTARTS, 0);
        let j1 = norms::jumble_1d(&StepFunction1D::new(diff.masses().to_vec(), marg.values));
        out.d_jbl = j.value.max(j1).max(gap);
        out.d_jbl_exact = j.exact;
    }
    out
}

/// Transport plan between `g1` (rows) and `g2` (columns); the last row and
/// column hold the slack mass of the trivial extensions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
    pub row_targets: Vec<f64>,
    pub col_targets: Vec<f64>,
}

impl Coupling {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    /// Largest absolute violation of the marginal constraints.
    pub fn marginal_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.rows {
            let s: f64 = (0..self.cols).map(|j| self.get(i, j)).sum();
            err = err.max((s - self.row_targets[i]).abs());
        }
        for j in 0..self.cols {
            let s: f64 = (0..self.rows).map(|i| self.get(i, j)).sum();
            err = err.max((s - self.col_targets[j]).abs());
        }
        err
    }

    pub fn is_valid(&self) -> bool {
        self.matrix.iter().all(|&x| x >= 0.0) && self.marginal_error() <= 1e-9
    }

    /// Copy with extra mass on both slack atoms, parked on the slack-slack cell.
    pub fn with_extra_slack(&self, extra: f64) -> Coupling {
        let mut out = self.clone();
        out.row_targets[self.rows - 1] += extra;
        out.col_targets[self.cols - 1] += extra;
        out.matrix[self.rows * self.cols - 1] += extra;
        out
    }

    /// Multiplies every cell `(i,j)` by `factors[i][j]` in `[0,1]`, giving a sub-coupling.
    pub fn scaled_cells(&self, factors: &[f64]) -> Coupling {
        let matrix: Vec<f64> = self.matrix.iter().zip(factors).map(|(a, f)| a * f).collect();
        let mut row_targets = vec![0.0; self.rows];
        let mut col_targets = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                row_targets[i] += matrix[i * self.cols + j];
                col_targets[j] += matrix[i * self.cols + j];
            }
        }
        Coupling { rows: self.rows, cols: self.cols, matrix, row_targets, col_targets }
    }
}

/// Slack masses `(E1, E2)` that balance both totals at `max total + slack`.
pub fn balanced_slack(g1: &StepGraphex, g2: &StepGraphex, slack_mass: f64) -> (f64, f64) {
    let (t1, t2) = (g1.total_mass(), g2.total_mass());
    let total = t1.max(t2) + slack_mass;
    ((total - t1).max(0.0), (total - t2).max(0.0))
}

/// The two pullbacks along `coupling`, as graphexes on the positive cells.
/// The slack-slack cell is dropped since both graphexes vanish there.
pub fn pullback_pair(g1: &StepGraphex, g2: &StepGraphex, coupling: &Coupling) -> (StepGraphex, StepGraphex) {
    let cells = positive_cells(coupling);
    let (m1, m2) = (g1.atoms(), g2.atoms());
    let masses: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let k = cells.len();
    let mut w1 = vec![0.0; k * k];
    let mut w2 = vec![0.0; k * k];
    for (a, &(i, j, _)) in cells.iter().enumerate() {
        for (b, &(ii, jj, _)) in cells.iter().enumerate() {
            if i < m1 && ii < m1 {
                w1[a * k + b] = g1.w(i, ii);
            }
            if j < m2 && jj < m2 {
                w2[a * k + b] = g2.w(j, jj);
            }
        }
    }
    let s1 = cells.iter().map(|&(i, _, _)| if i < m1 { g1.star()[i] } else { 0.0 }).collect();
    let s2 = cells.iter().map(|&(_, j, _)| if j < m2 { g2.star()[j] } else { 0.0 }).collect();
    let iso = IsolatedMass::Finite(coupling.get(coupling.rows - 1, coupling.cols - 1));
    (
        StepGraphex::from_flat(masses.clone(), w1, s1, g1.dust(), iso, g1.is_signed()),
        StepGraphex::from_flat(masses, w2, s2, g2.dust(), iso, g2.is_signed()),
    )
}

fn positive_cells(c: &Coupling) -> Vec<(usize, usize, f64)> {
    let mut cells = Vec::new();
    for i in 0..c.rows {
        for j in 0..c.cols {
            let v = c.get(i, j);
            if v > 0.0 && !(i == c.rows - 1 && j == c.cols - 1) {
                cells.push((i, j, v));
            }
        }
    }
    cells
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingObjective {
    /// Minimize `d22` of the pullbacks.
    D22,
    /// Minimize the kernel component only.
    Kernel,
}

#[derive(Clone, Debug)]
pub struct CouplingConfig {
    /// `None` starts at twice the larger total and doubles while the certificate improves.
    pub slack_mass: Option<f64>,
    pub restarts: usize,
    pub moves: usize,
    pub seed: u64,
    pub objective: CouplingObjective,
    /// Refined piece count up to which permutation couplings are enumerated.
    pub exhaustive_limit: usize,
    pub with_jumble: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            slack_mass: None,
            restarts: 50,
            moves: 300,
            seed: 0,
            objective: CouplingObjective::D22,
            exhaustive_limit: 8,
            with_jumble: true,
        }
    }
}

impl CouplingConfig {
    pub fn quick(seed: u64) -> Self {
        CouplingConfig { restarts: 6, moves: 150, seed, with_jumble: false, ..Default::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingResult {
    pub coupling: Coupling,
    pub breakdown: DistanceBreakdown,
    /// `d22` of the returned coupling: an upper bound on the kernel distance.
    pub certificate: f64,
    pub slack_mass: f64,
    /// Set when the local search was still improving when it ran out of moves.
    pub budget_exhausted: bool,
    pub exhaustive: bool,
}

/// Precomputed data for scoring couplings between a fixed pair.
#[derive(Clone, Copy)]
struct Scorer<'a> {
    g1: &'a StepGraphex,
    g2: &'a StepGraphex,
    objective: CouplingObjective,
    /// Use a Lanczos estimate of the kernel term on large supports.
    fast: bool,
    /// Treat mass sent to slack as removed, on top of the given removals.
    trim: Option<Trim>,
}

/// Removal already made on each side, and the cap on total removal per side.
#[derive(Clone, Copy)]
struct Trim {
    offset: [f64; 2],
    budget: f64,
}

#[derive(Clone, Copy, Debug)]
struct Score {
    kernel: f64,
    marginal: f64,
    gap: f64,
    removed: f64,
}

impl Score {
    fn d22(&self) -> f64 {
        combine(self.kernel, self.marginal, self.gap)
    }
}

impl<'a> Scorer<'a> {
    fn value(&self, s: &Score) -> f64 {
        let v = match self.objective {
            CouplingObjective::D22 => s.d22(),
            CouplingObjective::Kernel => s.kernel,
        };
        match self.trim {
            Some(t) if s.removed > t.budget => 1e6 + s.removed,
            _ => v,
        }
    }

    /// Search key: primary value with a small pull from the other terms so
    /// the search can move along plateaus of the max.
    fn key(&self, s: &Score) -> f64 {
        let tie = s.kernel + s.marginal.sqrt() + s.gap.cbrt();
        self.value(s) + 1e-3 * tie
    }

    fn score(&self, c: &Coupling) -> Score {
        let mut cells = positive_cells(c);
        let (m1, m2) = (self.g1.atoms(), self.g2.atoms());
        let mut removed = 0.0;
        if let Some(Trim { offset: [r1, r2], .. }) = self.trim {
            let sent = |on_slack: &dyn Fn(&(usize, usize, f64)) -> bool| -> f64 {
                cells.iter().filter(|c| on_slack(c)).map(|c| c.2).sum()
            };
            removed = (r1 + sent(&|c| c.1 == m2)).max(r2 + sent(&|c| c.0 == m1));
            cells.retain(|c| c.0 < m1 && c.1 < m2);
        }
        let k = cells.len();
        if k == 0 {
            let gap = (2.0 * (self.g1.dust() - self.g2.dust())).abs();
            return Score { kernel: 0.0, marginal: 0.0, gap, removed };
        }
        let mut u = vec![0.0; k * k];
        for (a, &(i, j, _)) in cells.iter().enumerate() {
            for (b, &(ii, jj, _)) in cells.iter().enumerate() {
                let x = if i < m1 && ii < m1 { self.g1.w(i, ii) } else { 0.0 };
                let y = if j < m2 && jj < m2 { self.g2.w(j, jj) } else { 0.0 };
                u[a * k + b] = x - y;
            }
        }
        let mut marginal = 0.0;
        let mut gap = 2.0 * (self.g1.dust() - self.g2.dust());
        for (a, &(i, j, nu)) in cells.iter().enumerate() {
            let s = if i < m1 { self.g1.star()[i] } else { 0.0 } - if j < m2 { self.g2.star()[j] } else { 0.0 };
            let dw: f64 = cells.iter().enumerate().map(|(b, c)| u[a * k + b] * c.2).sum();
            let d = dw + s;
            marginal += d * d * nu;
            gap += nu * (dw + 2.0 * s);
        }
        let sq: Vec<f64> = cells.iter().map(|c| c.2.sqrt()).collect();
        for a in 0..k {
            for b in 0..k {
                u[a * k + b] *= sq[a] * sq[b];
            }
        }
        let kernel = if self.fast && k > LANCZOS_FROM {
            norms::lanczos_spectral_radius(&u, k, LANCZOS_STEPS)
        } else {
            spectral_radius(u, k)
        };
        Score { kernel, marginal: marginal.sqrt(), gap: gap.abs(), removed }
    }
}

/// Support size above which the search scores with Lanczos estimates.
const LANCZOS_FROM: usize = 32;
const LANCZOS_STEPS: usize = 24;

fn spectral_radius(scaled: Vec<f64>, k: usize) -> f64 {
    if k <= norms::DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(k, k, &scaled));
        eig.eigenvalues.iter().fold(0.0, |a, &e| a.max(e.abs()))
    } else {
        let masses = vec![1.0; k];
        norms::kernel(&StepFunction2D::from_flat(masses, scaled))
    }
}

/// Row and column targets including slack.
fn targets(g1: &StepGraphex, g2: &StepGraphex, slack_mass: f64) -> (Vec<f64>, Vec<f64>) {
    let (e1, e2) = balanced_slack(g1, g2, slack_mass);
    let mut rows = g1.masses().to_vec();
    rows.push(e1);
    let mut cols = g2.masses().to_vec();
    cols.push(e2);
    (rows, cols)
}

/// Northwest-corner rule along the given orders.
fn northwest(rows: &[f64], cols: &[f64], row_order: &[usize], col_order: &[usize]) -> Coupling {
    let (r, c) = (rows.len(), cols.len());
    let mut matrix = vec![0.0; r * c];
    let mut rem_r: Vec<f64> = rows.to_vec();
    let mut rem_c: Vec<f64> = cols.to_vec();
    let (mut a, mut b) = (0, 0);
    while a < r && b < c {
        let (i, j) = (row_order[a], col_order[b]);
        let x = rem_r[i].min(rem_c[j]);
        matrix[i * c + j] += x;
        rem_r[i] -= x;
        rem_c[j] -= x;
        // advance whichever side is (relatively) exhausted
        if rem_r[i] <= 1e-15 * rows[i].max(1e-300) {
            a += 1;
        } else {
            b += 1;
        }
    }
    // float residue lands on the last processed cell
    let mut coupling = Coupling { rows: r, cols: c, matrix, row_targets: rows.to_vec(), col_targets: cols.to_vec() };
    repair(&mut coupling);
    coupling
}

/// Pushes tiny marginal residues onto existing cells so sums match exactly enough.
fn repair(c: &mut Coupling) {
    for i in 0..c.rows {
        let s: f64 = (0..c.cols).map(|j| c.get(i, j)).sum();
        let d = c.row_targets[i] - s;
        if d != 0.0 {
            if let Some(j) = (0..c.cols).max_by(|&a, &b| c.get(i, a).total_cmp(&c.get(i, b))) {
                let v = &mut c.matrix[i * c.cols + j];
                *v = (*v + d).max(0.0);
            }
        }
    }
}

/// Sorted-marginal (quantile) coupling; slack atoms have marginal 0.
pub fn quantile_coupling(g1: &StepGraphex, g2: &StepGraphex, slack_mass: f64) -> Coupling {
    let (rows, cols) = targets(g1, g2, slack_mass);
    let mut d1 = g1.marginal().values;
    d1.push(0.0);
    let mut d2 = g2.marginal().values;
    d2.push(0.0);
    let mut ro: Vec<usize> = (0..rows.len()).collect();
    ro.sort_by(|&a, &b| d1[b].total_cmp(&d1[a]).then(a.cmp(&b)));
    let mut co: Vec<usize> = (0..cols.len()).collect();
    co.sort_by(|&a, &b| d2[b].total_cmp(&d2[a]).then(a.cmp(&b)));
    northwest(&rows, &cols, &ro, &co)
}

/// Atoms of each side sent to the other's slack, when the slack can hold them.
fn disjoint_coupling(rows: &[f64], cols: &[f64]) -> Option<Coupling> {
    let (r, c) = (rows.len(), cols.len());
    let t1: f64 = rows[..r - 1].iter().sum();
    let t2: f64 = cols[..c - 1].iter().sum();
    if cols[c - 1] + 1e-12 < t1 || rows[r - 1] + 1e-12 < t2 {
        return None;
    }
    let mut matrix = vec![0.0; r * c];
    for i in 0..r - 1 {
        matrix[i * c + c - 1] = rows[i];
    }
    for j in 0..c - 1 {
        matrix[(r - 1) * c + j] = cols[j];
    }
    matrix[r * c - 1] = (rows[r - 1] - t2).max(0.0);
    let mut coupling = Coupling { rows: r, cols: c, matrix, row_targets: rows.to_vec(), col_targets: cols.to_vec() };
    let last_col: f64 = (0..r).map(|i| coupling.get(i, c - 1)).sum();
    coupling.matrix[r * c - 1] += cols[c - 1] - last_col;
    coupling.matrix[r * c - 1] = coupling.matrix[r * c - 1].max(0.0);
    Some(coupling)
}

fn product_coupling(rows: &[f64], cols: &[f64]) -> Coupling {
    let total: f64 = rows.iter().sum();
    let (r, c) = (rows.len(), cols.len());
    let mut matrix = vec![0.0; r * c];
    if total > 0.0 {
        for i in 0..r {
            for j in 0..c {
                matrix[i * c + j] = rows[i] * cols[j] / total;
            }
        }
    }
    Coupling { rows: r, cols: c, matrix, row_targets: rows.to_vec(), col_targets: cols.to_vec() }
}

/// Smallest piece count `k <= limit` such that every target is a multiple of `total / k`.
fn common_refinement(rows: &[f64], cols: &[f64], limit: usize) -> Option<(usize, Vec<usize>, Vec<usize>)> {
    let total: f64 = rows.iter().sum();
    if total <= 0.0 {
        return None;
    }
    'k: for k in 1..=limit {
        let unit = total / k as f64;
        let mut counts = (Vec::new(), Vec::new());
        for (side, out) in [(rows, &mut counts.0), (cols, &mut counts.1)] {
            for &x in side {
                let q = x / unit;
                let n = q.round();
                if (q - n).abs() > 1e-9 {
                    continue 'k;
                }
                out.push(n as usize);
            }
        }
        if counts.0.iter().sum::<usize>() == k && counts.1.iter().sum::<usize>() == k {
            return Some((k, counts.0, counts.1));
        }
    }
    None
}

/// Every distinct permutation coupling of the equal-mass refinement.
fn permutation_couplings(rows: &[f64], cols: &[f64], limit: usize) -> Vec<Coupling> {
    let Some((k, rc, cc)) = common_refinement(rows, cols, limit) else {
        return Vec::new();
    };
    let unit = rows.iter().sum::<f64>() / k as f64;
    let mut labels: Vec<usize> = rc.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n)).collect();
    let col_of_slot: Vec<usize> = cc.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n)).collect();
    let (r, c) = (rows.len(), cols.len());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    loop {
        let mut counts = vec![0u8; r * c];
        for (slot, &i) in labels.iter().enumerate() {
            counts[i * c + col_of_slot[slot]] += 1;
        }
        if seen.insert(counts.clone()) {
            let matrix = counts.iter().map(|&n| n as f64 * unit).collect();
            out.push(Coupling { rows: r, cols: c, matrix, row_targets: rows.to_vec(), col_targets: cols.to_vec() });
        }
        if !next_permutation(&mut labels) {
            break;
        }
    }
    out
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn random_northwest(rows: &[f64], cols: &[f64], rng: &mut impl Rng) -> Coupling {
    let mut ro: Vec<usize> = (0..rows.len()).collect();
    let mut co: Vec<usize> = (0..cols.len()).collect();
    ro.shuffle(rng);
    co.shuffle(rng);
    northwest(rows, cols, &ro, &co)
}

/// Rectangle moves on a geometric step grid, accepting strict improvements.
fn local_search(scorer: &Scorer, start: Coupling, moves: usize, rng: &mut impl Rng) -> (Coupling, Score, bool) {
    let mut cur = start;
    let mut score = scorer.score(&cur);
    let mut key = scorer.key(&score);
    if scorer.trim.is_some() {
        (cur, score, key) = polish_trim(scorer, cur, score, key);
    }
    let (r, c) = (cur.rows, cur.cols);
    let mut last_improvement = 0;
    if r < 2 || c < 2 {
        return (cur, score, false);
    }
    for step in 0..moves {
        let support: Vec<usize> = (0..r * c).filter(|&x| cur.matrix[x] > 0.0).collect();
        if support.is_empty() {
            break;
        }
        let a = support[rng.random_range(0..support.len())];
        let (i, j) = (a / c, a % c);
        // second corner: a positive cell in another row and column, or any if none
        let others: Vec<usize> = support.iter().copied().filter(|&x| x / c != i && x % c != j).collect();
        if others.is_empty() {
            continue;
        }
        let corner = r * c - 1;
        let b = if scorer.trim.is_some() && others.contains(&corner) && rng.random_bool(0.5) {
            corner
        } else {
            others[rng.random_range(0..others.len())]
        };
        let (ii, jj) = (b / c, b % c);
        let cap = cur.matrix[a].min(cur.matrix[b]);
        let delta = cap * 0.5f64.powi(rng.random_range(0..8));
        let mut next = cur.clone();
        next.matrix[a] -= delta;
        next.matrix[b] -= delta;
        next.matrix[i * c + jj] += delta;
        next.matrix[ii * c + j] += delta;
        for x in [a, b] {
            if next.matrix[x] < 1e-15 * cap {
                next.matrix[x] = 0.0;
            }
        }
        let s = scorer.score(&next);
        let k = scorer.key(&s);
        if k < key {
            cur = next;
            score = s;
            key = k;
            last_improvement = step;
        }
    }
    let still_improving = moves > 10 && last_improvement + moves / 10 >= moves;
    if scorer.trim.is_some() {
        (cur, score, _) = polish_trim(scorer, cur, score, key);
    }
    (cur, score, still_improving)
}

/// Best-improvement steps moving whole matched cells onto slack.
fn polish_trim(scorer: &Scorer, mut cur: Coupling, mut score: Score, mut key: f64) -> (Coupling, Score, f64) {
    let (r, c) = (cur.rows, cur.cols);
    let corner = r * c - 1;
    loop {
        let mut step: Option<(Coupling, Score, f64)> = None;
        for a in 0..corner {
            let (i, j) = (a / c, a % c);
            if i == r - 1 || j == c - 1 || cur.matrix[a] <= 0.0 || cur.matrix[corner] <= 0.0 {
                continue;
            }
            let delta = cur.matrix[a].min(cur.matrix[corner]);
            let mut next = cur.clone();
            next.matrix[a] -= delta;
            next.matrix[corner] -= delta;
            next.matrix[i * c + c - 1] += delta;
            next.matrix[(r - 1) * c + j] += delta;
            let s = scorer.score(&next);
            let k = scorer.key(&s);
            if k < step.as_ref().map_or(key, |x| x.2) {
                step = Some((next, s, k));
            }
        }
        match step {
            Some(x) => (cur, score, key) = x,
            None => return (cur, score, key),
        }
    }
}

/// Searches couplings of trivial extensions of `g1` and `g2`.
pub fn optimize_coupling(g1: &StepGraphex, g2: &StepGraphex, cfg: &CouplingConfig) -> Result<CouplingResult> {
    match cfg.slack_mass {
        Some(s) => {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(domain(format!("slack mass must be finite and nonnegative, got {s}")));
            }
            optimize_coupling_warm(g1, g2, s, cfg, None)
        }
        None => {
            let mut slack = 2.0 * g1.total_mass().max(g2.total_mass()).max(f64::MIN_POSITIVE);
            let mut best = optimize_coupling_warm(g1, g2, slack, cfg, None)?;
            for _ in 0..4 {
                let old = slack;
                slack *= 2.0;
                let warm = best.coupling.with_extra_slack(slack - old);
                let next = optimize_coupling_warm(g1, g2, slack, cfg, Some(&warm))?;
                let gain = best.certificate - next.certificate;
                best = next;
                if gain < 1e-6 {
                    break;
                }
            }
            Ok(best)
        }
    }
}

/// As [`optimize_coupling`] at a fixed slack, optionally seeded with a coupling
/// that has matching targets. The result is never worse than the seed.
pub fn optimize_coupling_warm(
    g1: &StepGraphex,
    g2: &StepGraphex,
    slack_mass: f64,
    cfg: &CouplingConfig,
    warm: Option<&Coupling>,
) -> Result<CouplingResult> {
    let scorer = Scorer { g1, g2, objective: cfg.objective, fast: true, trim: None };
    let (rows, cols) = targets(g1, g2, slack_mass);
    if let Some(w) = warm {
        let matches = w.rows == rows.len()
            && w.cols == cols.len()
            && w.row_targets.iter().zip(&rows).all(|(a, b)| (a - b).abs() <= 1e-9)
            && w.col_targets.iter().zip(&cols).all(|(a, b)| (a - b).abs() <= 1e-9);
        if !matches {
            return Err(GraphexError::Mismatch("warm-start coupling has different targets".into()));
        }
    }

    let (coupling, score, budget_exhausted, exhaustive) = search(&scorer, &rows, &cols, cfg, warm);
    let mut breakdown = DistanceBreakdown::from_components(score.kernel, score.marginal, score.gap);
    if cfg.with_jumble {
        let (p1, p2) = pullback_pair(g1, g2, &coupling);
        let diff = p1.difference(&p2)?;
        let full = breakdown_of_difference(&diff, true);
        breakdown.d_jbl = full.d_jbl;
        breakdown.d_jbl_exact = full.d_jbl_exact;
    }
    Ok(CouplingResult {
        certificate: breakdown.d22,
        coupling,
        breakdown,
        slack_mass,
        budget_exhausted,
        exhaustive,
    })
}

/// Local search from the structured starts plus random restarts; the best run
/// by exact score wins.
fn search(
    scorer: &Scorer,
    rows: &[f64],
    cols: &[f64],
    cfg: &CouplingConfig,
    warm: Option<&Coupling>,
) -> (Coupling, Score, bool, bool) {
    let slack = rows[rows.len() - 1].min(cols[cols.len() - 1]);
    let perms = permutation_couplings(rows, cols, cfg.exhaustive_limit);
    let exhaustive = !perms.is_empty();
    let mut starts: Vec<Coupling> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.clone());
    }
    if exhaustive {
        let scored: Vec<(f64, Coupling)> = perms
            .into_par_iter()
            .map(|p| (scorer.key(&scorer.score(&p)), p))
            .collect();
        let best = scored
            .into_iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
            .map(|x| x.1 .1)
            .expect("at least one permutation");
        starts.push(best);
    }
    starts.push(quantile_coupling(scorer.g1, scorer.g2, slack));
    if let Some(d) = disjoint_coupling(rows, cols) {
        starts.push(d);
    }
    starts.push(product_coupling(rows, cols));
    let fixed = starts.len();
    let total_runs = fixed.max(cfg.restarts.max(1));

    let runs: Vec<(Coupling, Score, bool)> = (0..total_runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(child_seed(cfg.seed, r as u64), 0);
            let start = if r < fixed { starts[r].clone() } else { random_northwest(rows, cols, &mut rng) };
            local_search(scorer, start, cfg.moves, &mut rng)
        })
        .collect();
    let exact = Scorer { fast: false, ..*scorer };
    let mut runs: Vec<(Coupling, Score, bool)> = runs.into_iter().map(|(c, _, e)| (exact.score(&c), c, e)).map(|(s, c, e)| (c, s, e)).collect();
    let mut best = 0;
    for (k, run) in runs.iter().enumerate() {
        if exact.value(&run.1) < exact.value(&runs[best].1) {
            best = k;
        }
    }
    let (coupling, score, exhausted) = runs.swap_remove(best);
    (coupling, score, exhausted, exhaustive)
}

/// `d22` of the pullbacks along a given coupling.
pub fn coupling_breakdown(g1: &StepGraphex, g2: &StepGraphex, coupling: &Coupling) -> Result<DistanceBreakdown> {
    if coupling.rows != g1.atoms() + 1 || coupling.cols != g2.atoms() + 1 {
        return Err(GraphexError::Mismatch("coupling shape does not match the graphexes".into()));
    }
    let (p1, p2) = pullback_pair(g1, g2, coupling);
    let diff = p1.difference(&p2)?;
    Ok(breakdown_of_difference(&diff, true))
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaGpRow {
    pub degree_bound: f64,
    pub removed_mass: [f64; 2],
    /// Fraction of the truncated mass kept on each side.
    pub scale: [f64; 2],
    pub coupling_certificate: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaGpEstimate {
    pub value: f64,
    pub best_degree_bound: f64,
    pub rows: Vec<DeltaGpRow>,
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct DeltaGpConfig {
    pub coupling: CouplingConfig,
    /// Also try uniform mass reductions of each side on top of truncation.
    pub mass_scaling: bool,
}

impl Default for DeltaGpConfig {
    fn default() -> Self {
        DeltaGpConfig { coupling: CouplingConfig { with_jumble: false, ..Default::default() }, mass_scaling: true }
    }
}

/// Default degree grid: distinct marginal values of both sides plus infinity.
pub fn default_degree_grid(g1: &StepGraphex, g2: &StepGraphex) -> Vec<f64> {
    degree_grid(g1, g2, 24)
}

/// At most `points` evenly spaced distinct positive marginal values of both
/// sides, followed by infinity.
pub fn degree_grid(g1: &StepGraphex, g2: &StepGraphex, points: usize) -> Vec<f64> {
    let mut all: Vec<f64> = g1.abs_marginal();
    all.extend(g2.abs_marginal());
    all.retain(|&d| d > 0.0);
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut grid: Vec<f64> = if points == 0 {
        Vec::new()
    } else if points == 1 {
        all.last().copied().into_iter().collect()
    } else if all.len() > points {
        (0..points).map(|k| all[(k * (all.len() - 1)) / (points - 1)]).collect()
    } else {
        all
    };
    grid.dedup();
    grid.push(f64::INFINITY);
    grid
}

/// Scale `s` in (0,1] at which the scaled `g` reaches edge density `target`.
fn density_matching_scale(g: &StepGraphex, target: f64) -> Option<f64> {
    let rho = g.edge_density();
    if rho <= target {
        return None;
    }
    let star_part = 2.0 * g.star().iter().zip(g.masses()).map(|(s, r)| s * r).sum::<f64>();
    let dust_part = 2.0 * g.dust();
    let w_part = rho - star_part - dust_part;
    let c = dust_part - target;
    if c >= 0.0 {
        return None;
    }
    // w s^2 + star s + c = 0
    let s = if w_part.abs() < 1e-300 {
        -c / star_part
    } else {
        (-star_part + (star_part * star_part - 4.0 * w_part * c).sqrt()) / (2.0 * w_part)
    };
    (s > 0.0 && s <= 1.0).then_some(s)
}

fn scale_candidates(g1: &StepGraphex, g2: &StepGraphex) -> Vec<[f64; 2]> {
    let mut out = vec![[1.0, 1.0]];
    let mut targets: Vec<[f64; 2]> = Vec::new();
    let (t1, t2) = (g1.total_mass(), g2.total_mass());
    if t1 > t2 && t1 > 0.0 {
        targets.push([t2 / t1, 1.0]);
    } else if t2 > t1 && t2 > 0.0 {
        targets.push([1.0, t1 / t2]);
    }
    let (r1, r2) = (g1.edge_density(), g2.edge_density());
    if let Some(s) = density_matching_scale(g1, r2) {
        targets.push([s, 1.0]);
    }
    if let Some(s) = density_matching_scale(g2, r1) {
        targets.push([1.0, s]);
    }
    for t in targets {
        for f in [0.25, 0.5, 0.75, 1.0] {
            out.push([1.0 - f * (1.0 - t[0]), 1.0 - f * (1.0 - t[1])]);
        }
    }
    out
}

fn scaled(g: &StepGraphex, s: f64) -> StepGraphex {
    if s == 1.0 || g.is_empty() {
        g.clone()
    } else {
        g.dilate(s).expect("scale in (0,1]")
    }
}

/// Upper bound on the weak kernel distance from degree truncations (and, if
/// enabled, uniform mass reductions) of both sides.
pub fn delta_gp_estimate(
    g1: &StepGraphex,
    g2: &StepGraphex,
    degree_grid: &[f64],
    cfg: &DeltaGpConfig,
) -> Result<DeltaGpEstimate> {
    if degree_grid.is_empty() {
        return Err(domain("empty degree grid"));
    }
    if g1.is_signed() || g2.is_signed() {
        return Err(precondition("weak kernel distance estimate needs unsigned graphexes"));
    }
    let per_d: Vec<Result<(Vec<DeltaGpRow>, bool)>> = degree_grid
        .par_iter()
        .enumerate()
        .map(|(k, &d)| {
            let (h1, r1) = if d.is_infinite() { (g1.clone(), 0.0) } else { g1.truncate_by_degree(d)? };
            let (h2, r2) = if d.is_infinite() { (g2.clone(), 0.0) } else { g2.truncate_by_degree(d)? };
            let candidates = if cfg.mass_scaling { scale_candidates(&h1, &h2) } else { vec![[1.0, 1.0]] };
            let mut rows = Vec::new();
            let mut exhausted = false;
            let mut best = f64::INFINITY;
            let mut unscaled = None;
            for (c, s) in candidates.into_iter().enumerate() {
                let removed = [r1 + (1.0 - s[0]) * h1.total_mass(), r2 + (1.0 - s[1]) * h2.total_mass()];
                let floor = removed[0].max(removed[1]).sqrt();
                if floor >= best {
                    continue;
                }
                let (a, b) = (scaled(&h1, s[0]), scaled(&h2, s[1]));
                let mut ccfg = cfg.coupling.clone();
                ccfg.seed = child_seed(cfg.coupling.seed, (k * 64 + c) as u64);
                let res = optimize_coupling(&a, &b, &ccfg)?;
                exhausted |= res.budget_exhausted;
                let value = floor.max(res.certificate);
                best = best.min(value);
                rows.push(DeltaGpRow {
                    degree_bound: d,
                    removed_mass: removed,
                    scale: s,
                    coupling_certificate: res.certificate,
                    value,
                });
                if c == 0 {
                    unscaled = Some(res.coupling);
                }
            }
            if let Some(warm) = unscaled.filter(|_| cfg.mass_scaling) {
                let mut ccfg = cfg.coupling.clone();
                ccfg.seed = child_seed(cfg.coupling.seed, (k * 64 + 63) as u64);
                let (mut extra, e) = trimmed_rows(&h1, &h2, d, [r1, r2], best, warm, &ccfg)?;
                exhausted |= e;
                rows.append(&mut extra);
            }
            Ok((rows, exhausted))
        })
        .collect();
    let mut rows = Vec::new();
    let mut exhausted = false;
    for r in per_d {
        let (mut rs, e) = r?;
        rows.append(&mut rs);
        exhausted |= e;
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|x| x.1.clone())
        .expect("grid is nonempty");
    Ok(DeltaGpEstimate { value: best.value, best_degree_bound: best.degree_bound, rows, budget_exhausted: exhausted })
}

/// Removal chosen by the search itself: for a rising sequence of removal
/// budgets, mass a coupling sends to slack is removed and the reduced pair is
/// re-optimized from that coupling.
fn trimmed_rows(
    h1: &StepGraphex,
    h2: &StepGraphex,
    degree_bound: f64,
    truncated: [f64; 2],
    mut best: f64,
    warm: Coupling,
    cfg: &CouplingConfig,
) -> Result<(Vec<DeltaGpRow>, bool)> {
    let mut rows = Vec::new();
    let mut exhausted = false;
    for (n, level) in TRIM_LEVELS.iter().enumerate() {
        let budget = level * level;
        if budget < truncated[0].max(truncated[1]) || *level >= best {
            continue;
        }
        let trim = Trim { offset: truncated, budget };
        let scorer = Scorer { g1: h1, g2: h2, objective: CouplingObjective::D22, fast: true, trim: Some(trim) };
        let mut ccfg = cfg.clone();
        ccfg.seed = child_seed(cfg.seed, n as u64);
        let (pi, _, e, _) = search(&scorer, &warm.row_targets, &warm.col_targets, &ccfg, Some(&warm));
        exhausted |= e;
        let (row, e) = reduced_row(h1, h2, degree_bound, truncated, &pi, &ccfg)?;
        exhausted |= e;
        best = best.min(row.value);
        rows.push(row);
    }
    Ok((rows, exhausted))
}

/// Trimming budgets, as square roots of the removed mass.
const TRIM_LEVELS: [f64; 6] = [0.15, 0.2, 0.25, 0.3, 0.35, 0.45];

/// Drops the mass `pi` sends to slack and bounds the distance of what is left.
fn reduced_row(
    h1: &StepGraphex,
    h2: &StepGraphex,
    degree_bound: f64,
    truncated: [f64; 2],
    pi: &Coupling,
    cfg: &CouplingConfig,
) -> Result<(DeltaGpRow, bool)> {
    let (m1, m2) = (h1.atoms(), h2.atoms());
    let keep1: Vec<usize> = (0..m1).filter(|&i| (0..m2).any(|j| pi.get(i, j) > 0.0)).collect();
    let keep2: Vec<usize> = (0..m2).filter(|&j| (0..m1).any(|i| pi.get(i, j) > 0.0)).collect();
    let mass1: Vec<f64> = keep1.iter().map(|&i| keep2.iter().map(|&j| pi.get(i, j)).sum()).collect();
    let mass2: Vec<f64> = keep2.iter().map(|&j| keep1.iter().map(|&i| pi.get(i, j)).sum()).collect();
    let (a, b) = (h1.select_with_masses(&keep1, &mass1), h2.select_with_masses(&keep2, &mass2));
    let removed = [
        truncated[0] + (h1.total_mass() - a.total_mass()).max(0.0),
        truncated[1] + (h2.total_mass() - b.total_mass()).max(0.0),
    ];
    let reduced_slack = a.total_mass().max(b.total_mass());
    let (rt, ct) = targets(&a, &b, reduced_slack);
    let (r, c) = (rt.len(), ct.len());
    let mut matrix = vec![0.0; r * c];
    for (x, &i) in keep1.iter().enumerate() {
        for (y, &j) in keep2.iter().enumerate() {
            matrix[x * c + y] = pi.get(i, j);
        }
    }
    matrix[r * c - 1] = rt[r - 1];
    let warm = Coupling { rows: r, cols: c, matrix, row_targets: rt, col_targets: ct };
    let res = optimize_coupling_warm(&a, &b, reduced_slack, cfg, Some(&warm))?;
    let row = DeltaGpRow {
        degree_bound,
        removed_mass: removed,
        scale: [ratio(a.total_mass(), h1.total_mass()), ratio(b.total_mass(), h2.total_mass())],
        coupling_certificate: res.certificate,
        value: removed[0].max(removed[1]).sqrt().max(res.certificate),
    };
    Ok((row, res.budget_exhausted))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 { a / b } else { 1.0 }
}

/// The root `eps >= 0` of `eps^3 + 4 eps^2 D = |rho(g1) - rho(g2)|`, a lower
/// bound on the weak kernel distance when both marginals are at most `D`.
pub fn delta_gp_lower_bound(g1: &StepGraphex, g2: &StepGraphex, degree_bound: f64) -> Result<f64> {
    let top = g1.max_marginal().max(g2.max_marginal());
    if top > degree_bound * (1.0 + 1e-12) {
        return Err(precondition(format!("marginal {top} exceeds the bound {degree_bound}")));
    }
    Ok(cubic_root_bound((g1.edge_density() - g2.edge_density()).abs(), degree_bound))
}

/// Bisection for `eps^3 + 4 eps^2 D = gap` on `[0, cbrt(gap)]`.
pub fn cubic_root_bound(gap: f64, degree_bound: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    let f = |e: f64| e * e * e + 4.0 * e * e * degree_bound - gap;
    let (mut lo, mut hi) = (0.0, gap.cbrt());
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
