//! The stepping operator and the weak regularity partitioner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{d22_only, DistanceBreakdown};
use crate::error::{domain, precondition, GraphexError, Result};
use crate::graphex::{IsolatedMass, StepGraphex};
use crate::norms::{self, SearchMode, SetNormConfig, SetNormKind, StepFunction1D};

/// Assignment of atoms to parts; `None` marks atoms outside every part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspacePartition {
    pub parts: usize,
    pub part_of: Vec<Option<usize>>,
}

impl SubspacePartition {
    /// Everything outside.
    pub fn empty(atoms: usize) -> Self {
        SubspacePartition { parts: 0, part_of: vec![None; atoms] }
    }

    /// One part per atom.
    pub fn discrete(atoms: usize) -> Self {
        SubspacePartition { parts: atoms, part_of: (0..atoms).map(Some).collect() }
    }

    /// Builds a partition from labels, renumbering parts in order of first appearance.
    pub fn from_labels(labels: &[Option<usize>]) -> Self {
        let mut map = std::collections::HashMap::new();
        let part_of = labels
            .iter()
            .map(|l| {
                l.map(|x| {
                    let next = map.len();
                    *map.entry(x).or_insert(next)
                })
            })
            .collect();
        SubspacePartition { parts: map.len(), part_of }
    }

    pub fn part_masses(&self, masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.parts];
        for (i, p) in self.part_of.iter().enumerate() {
            if let Some(p) = p {
                out[*p] += masses[i];
            }
        }
        out
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.parts];
        for (i, p) in self.part_of.iter().enumerate() {
            if let Some(p) = p {
                out[*p].push(i);
            }
        }
        out
    }

    pub fn outside(&self) -> Vec<usize> {
        (0..self.part_of.len()).filter(|&i| self.part_of[i].is_none()).collect()
    }

    pub fn check(&self, atoms: usize) -> Result<()> {
        if self.part_of.len() != atoms {
            return Err(domain(format!("partition covers {} atoms, graphex has {atoms}", self.part_of.len())));
        }
        let mut used = vec![false; self.parts];
        for p in self.part_of.iter().flatten() {
            if *p >= self.parts {
                return Err(domain(format!("part id {p} out of range")));
            }
            used[*p] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(domain("every part must contain an atom"));
        }
        Ok(())
    }

    /// Splits every part (and the outside class, whose members form new parts)
    /// by membership in `set`.
    fn refine_by(&self, set: &[usize]) -> SubspacePartition {
        let mut inside = vec![false; self.part_of.len()];
        for &i in set {
            inside[i] = true;
        }
        let labels: Vec<Option<usize>> = self
            .part_of
            .iter()
            .enumerate()
            .map(|(i, p)| match (p, inside[i]) {
                (Some(p), s) => Some(2 * p + s as usize),
                (None, true) => Some(usize::MAX),
                (None, false) => None,
            })
            .collect();
        SubspacePartition::from_labels(&labels)
    }
}

/// The averaged graphex on the same atoms: block averages of `W` over part
/// pairs, star absorbing `W`-mass towards outside atoms, dust absorbing the
/// outside-outside `W`-mass and the outside star mass.
pub fn step_average(g: &StepGraphex, p: &SubspacePartition) -> Result<StepGraphex> {
    p.check(g.atoms())?;
    let m = g.atoms();
    let rho = g.masses();
    let k = p.parts;
    let pm = p.part_masses(rho);
    let mut block = vec![0.0; k * k];
    let mut star_mass = vec![0.0; k];
    let mut dust = g.dust();
    for i in 0..m {
        match p.part_of[i] {
            Some(a) => {
                star_mass[a] += rho[i] * g.star()[i];
                for j in 0..m {
                    let x = g.w(i, j) * rho[i] * rho[j];
                    match p.part_of[j] {
                        Some(b) => block[a * k + b] += x,
                        None => star_mass[a] += x,
                    }
                }
            }
            None => {
                dust += rho[i] * g.star()[i];
                for j in 0..m {
                    if p.part_of[j].is_none() {
                        dust += 0.5 * g.w(i, j) * rho[i] * rho[j];
                    }
                }
            }
        }
    }
    let mut graphon = vec![0.0; m * m];
    let mut star = vec![0.0; m];
    for i in 0..m {
        let Some(a) = p.part_of[i] else { continue };
        star[i] = star_mass[a] / pm[a];
        for j in 0..m {
            if let Some(b) = p.part_of[j] {
                let v = block[a * k + b] / (pm[a] * pm[b]);
                graphon[i * m + j] = if g.is_signed() { v } else { v.clamp(0.0, 1.0) };
            }
        }
    }
    // exact symmetry regardless of summation order
    for i in 0..m {
        for j in (i + 1)..m {
            let v = graphon[i * m + j];
            graphon[j * m + i] = v;
        }
    }
    Ok(g.with_parts(graphon, star, dust))
}

/// The averaged graphex with one atom per part (outside atoms dropped,
/// their contribution kept in the star and dust values).
pub fn quotient(g: &StepGraphex, p: &SubspacePartition) -> Result<StepGraphex> {
    let avg = step_average(g, p)?;
    let reps: Vec<usize> = p.members().iter().map(|m| m[0]).collect();
    let pm = p.part_masses(g.masses());
    let outside: f64 = p.outside().iter().map(|&i| g.masses()[i]).sum();
    let mut q = avg.pullback(&reps, pm);
    q = q.with_isolated_mass(g.isolated_mass().plus(outside));
    Ok(q)
}

/// `(B, C, D)` boundedness: `||W||_inf <= B`, `||W||_1 <= C`, `||D_|W|||_inf <= D`.
pub fn check_bounded(g: &StepGraphex, b: f64, c: f64, d: f64) -> Result<()> {
    let slack = 1.0 + 1e-12;
    let (wb, wc, wd) = (g.max_graphon(), g.l1_norm(), g.max_marginal());
    if wb > b * slack || wc > c * slack || wd > d * slack {
        return Err(precondition(format!(
            "graphex is not ({b},{c},{d})-bounded: sup W = {wb}, ||W||_1 = {wc}, sup D = {wd}"
        )));
    }
    Ok(())
}

/// Part-count bound `2^((2BC + CD)/eps^2)` as a base-2 exponent.
pub fn part_count_log2_bound(eps: f64, b: f64, c: f64, d: f64) -> f64 {
    (2.0 * b * c + c * d) / (eps * eps)
}

/// Part-mass bound `(4C^3 D + 8BC^2 D) / eps^4`.
pub fn part_mass_bound(eps: f64, b: f64, c: f64, d: f64) -> f64 {
    (4.0 * c.powi(3) * d + 8.0 * b * c * c * d) / eps.powi(4)
}

pub fn round_cap(eps: f64, b: f64, c: f64, d: f64) -> usize {
    part_count_log2_bound(eps, b, c, d).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessKind {
    Marginal,
    Graphon,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub witness: WitnessKind,
    pub witness_value: f64,
    pub parts_after: usize,
    /// `||W_P||_2^2` after the refinement.
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct RegularityConfig {
    pub eps: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub finder_restarts: usize,
    /// Stop after this many rounds even if the theoretical cap is larger.
    pub max_rounds: Option<usize>,
    pub seed: u64,
}

impl RegularityConfig {
    pub fn new(eps: f64, b: f64, c: f64, d: f64) -> Self {
        RegularityConfig { eps, b, c, d, finder_restarts: 20, max_rounds: None, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityResult {
    pub partition: SubspacePartition,
    /// Finder value `max(jumble(W - W_P), jumble(D - D_P))` at the final partition.
    pub certificate: f64,
    /// False if the graphon jumble came from the heuristic finder.
    pub certificate_exact: bool,
    /// `d22(g, g_P)` computed directly on the common atoms.
    pub d22: DistanceBreakdown,
    pub rounds: usize,
    pub round_cap: usize,
    pub part_count_log2_bound: f64,
    pub part_mass_bound: f64,
    /// True when the loop stopped at the round cap with a witness still above eps.
    pub budget_exhausted: bool,
    pub log: Vec<RoundLog>,
}

/// Keeps the atoms with the largest `|value|` until the mass bound holds.
fn shrink(set: Vec<usize>, score: impl Fn(usize) -> f64, masses: &[f64], bound: f64) -> Vec<usize> {
    let mut mass: f64 = set.iter().map(|&i| masses[i]).sum();
    if mass <= bound {
        return set;
    }
    let mut sorted = set;
    sorted.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    while mass > bound && sorted.len() > 1 {
        let i = sorted.pop().expect("nonempty");
        mass -= masses[i];
    }
    sorted.sort_unstable();
    sorted
}

struct Finding {
    marginal: (f64, Vec<usize>),
    graphon: (f64, Vec<usize>, Vec<usize>),
    exact: bool,
}

fn find_witness(g: &StepGraphex, avg: &StepGraphex, cfg: &RegularityConfig, round: usize) -> Finding {
    let dg = g.marginal().values;
    let da = avg.marginal().values;
    let f: Vec<f64> = dg.iter().zip(&da).map(|(a, b)| a - b).collect();
    let f1 = StepFunction1D::new(g.masses().to_vec(), f);
    let r1 = norms::set_norm_1d(&f1, SetNormKind::Jumble, SearchMode::Heuristic, 0).expect("prefix scan");
    let u = g.graphon_function().sub(&avg.graphon_function()).expect("same atoms");
    let mode = if u.len() <= norms::DEFAULT_EXACT_CAP_2D { SearchMode::Exact } else { SearchMode::Heuristic };
    let set_cfg = SetNormConfig::new(SetNormKind::Jumble, mode)
        .restarts(cfg.finder_restarts)
        .seed(crate::rng::child_seed(cfg.seed, round as u64));
    let r2 = norms::bilinear_set_norm(&u, &set_cfg).expect("mode within cap");
    Finding { marginal: (r1.value, r1.s), graphon: (r2.value, r2.s, r2.t), exact: r2.exact }
}

/// Refines a partition until no witness above `eps` is found or the round
/// cap `ceil((2BC + CD)/eps^2)` is reached.
pub fn weak_regularity_partition(
    g: &StepGraphex,
    cfg: &RegularityConfig,
    initial: Option<&SubspacePartition>,
) -> Result<RegularityResult> {
    if !(cfg.eps > 0.0) {
        return Err(domain("eps must be positive"));
    }
    check_bounded(g, cfg.b, cfg.c, cfg.d)?;
    let mut p = match initial {
        Some(p) => {
            p.check(g.atoms())?;
            p.clone()
        }
        None => SubspacePartition::empty(g.atoms()),
    };
    let cap = round_cap(cfg.eps, cfg.b, cfg.c, cfg.d).min(cfg.max_rounds.unwrap_or(usize::MAX));
    let d_bound = 4.0 * cfg.c * cfg.c / (cfg.eps * cfg.eps);
    let w_bound = 4.0 * cfg.c * cfg.d / (cfg.eps * cfg.eps);
    let mut log = Vec::new();
    let mut rounds = 0;
    loop {
        let avg = step_average(g, &p)?;
        let found = find_witness(g, &avg, cfg, rounds);
        let certificate = found.marginal.0.max(found.graphon.0);
        let fires = certificate > cfg.eps;
        if !fires || rounds >= cap {
            let d22 = d22_only(g, &avg)?;
            return Ok(RegularityResult {
                partition: p,
                certificate,
                certificate_exact: found.exact,
                d22,
                rounds,
                round_cap: cap,
                part_count_log2_bound: part_count_log2_bound(cfg.eps, cfg.b, cfg.c, cfg.d)
                    + initial.map_or(0.0, |q| (q.parts.max(1) as f64).log2()),
                part_mass_bound: part_mass_bound(cfg.eps, cfg.b, cfg.c, cfg.d),
                budget_exhausted: fires,
                log,
            });
        }
        rounds += 1;
        let masses = g.masses();
        let witness = if found.marginal.0 > cfg.eps {
            let dg = g.marginal().values;
            let da = avg.marginal().values;
            let s = shrink(found.marginal.1, |i| (dg[i] - da[i]).abs(), masses, d_bound);
            p = p.refine_by(&s);
            WitnessKind::Marginal
        } else {
            let (_, s, t) = found.graphon;
            let row = |set: &[usize], i: usize| {
                set.iter().map(|&j| (g.w(i, j) - avg.w(i, j)) * masses[j]).sum::<f64>().abs()
            };
            let s2 = shrink(s.clone(), |i| row(&t, i), masses, w_bound);
            let t2 = shrink(t.clone(), |i| row(&s, i), masses, w_bound);
            p = p.refine_by(&s2).refine_by(&t2);
            WitnessKind::Graphon
        };
        let energy = step_average(g, &p)?.graphon_l2_squared();
        log.push(RoundLog {
            round: rounds,
            witness,
            witness_value: if witness == WitnessKind::Marginal { found.marginal.0 } else { found.graphon.0 },
            parts_after: p.parts,
            energy,
        });
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EqualPartsResult {
    /// `g` with atoms split so that every part is a union of whole atoms.
    pub graphex: StepGraphex,
    pub partition: SubspacePartition,
    /// Original atom of every atom of `graphex` (`None` for atoms carved from isolated mass).
    pub origin: Vec<Option<usize>>,
    pub certificate: DistanceBreakdown,
    pub inner_eps: f64,
}

/// A partition into exactly `m` parts of mass `rho` with `d22(g', g'_P) <= eps`,
/// where `g'` is `g` with some atoms split.
pub fn equal_parts_partition(
    g: &StepGraphex,
    cfg: &RegularityConfig,
    rho: f64,
    m: usize,
) -> Result<EqualPartsResult> {
    if !(rho > 0.0) || m == 0 {
        return Err(domain("rho must be positive and m at least 1"));
    }
    let mut inner = cfg.eps / 3.0;
    let mut best: Option<EqualPartsResult> = None;
    for attempt in 0..6 {
        let rcfg = RegularityConfig { eps: inner, seed: crate::rng::child_seed(cfg.seed, attempt), ..cfg.clone() };
        let reg = weak_regularity_partition(g, &rcfg, None)?;
        let out = cut_equal(g, &reg.partition, rho, m, inner)?;
        let done = out.certificate.d22 <= cfg.eps;
        if best.as_ref().is_none_or(|b| out.certificate.d22 < b.certificate.d22) {
            best = Some(out);
        }
        if done {
            break;
        }
        inner /= 2.0;
    }
    let best = best.expect("at least one attempt");
    if best.certificate.d22 > cfg.eps {
        return Err(GraphexError::Infeasible(format!(
            "best equal-parts certificate {} exceeds eps {}",
            best.certificate.d22, cfg.eps
        )));
    }
    Ok(best)
}

fn cut_equal(g: &StepGraphex, p: &SubspacePartition, rho: f64, m: usize, inner: f64) -> Result<EqualPartsResult> {
    let tol = 1e-12 * rho.max(1.0);
    let masses = g.masses();
    // pieces: (atom index into the working graphex, mass, chunk)
    let mut pieces: Vec<(usize, f64, Option<usize>)> = Vec::new();
    let mut pool: Vec<(usize, f64)> = Vec::new();
    let mut chunk = 0usize;
    for members in p.members() {
        let total: f64 = members.iter().map(|&i| masses[i]).sum();
        let full = ((total + tol) / rho).floor() as usize;
        let mut left_in_chunk = rho;
        let mut filled = 0usize;
        for &i in &members {
            let mut rem = masses[i];
            while rem > tol && filled < full {
                let take = rem.min(left_in_chunk);
                pieces.push((i, take, Some(chunk)));
                rem -= take;
                left_in_chunk -= take;
                if left_in_chunk <= tol {
                    chunk += 1;
                    filled += 1;
                    left_in_chunk = rho;
                }
            }
            if rem > tol {
                pool.push((i, rem));
            }
        }
    }
    if chunk > m {
        return Err(GraphexError::Infeasible(format!(
            "partition already needs {chunk} full parts of mass {rho}, more than m = {m}"
        )));
    }
    let needed = (m - chunk) as f64 * rho;
    let pooled: f64 = pool.iter().map(|x| x.1).sum();
    if pooled > needed + tol {
        return Err(GraphexError::Infeasible(format!(
            "parts hold {} more mass than m * rho allows",
            pooled - needed
        )));
    }
    // extra mass: outside atoms by increasing marginal, then isolated mass
    let mut extra = needed - pooled;
    let marg = g.abs_marginal();
    let mut outside = p.outside();
    outside.sort_by(|&a, &b| marg[a].total_cmp(&marg[b]).then(a.cmp(&b)));
    let mut outside_rest: Vec<(usize, f64)> = Vec::new();
    for i in outside {
        if extra > tol {
            let take = masses[i].min(extra);
            pool.push((i, take));
            extra -= take;
            if masses[i] - take > tol {
                outside_rest.push((i, masses[i] - take));
            }
        } else {
            outside_rest.push((i, masses[i]));
        }
    }
    let mut work = g.clone();
    let mut carved = 0.0;
    if extra > tol {
        let available = g.isolated_mass().as_f64();
        if available + tol < extra {
            return Err(GraphexError::Infeasible(format!(
                "need {extra} more mass but only {available} is available outside the steps"
            )));
        }
        work = g.append_zero_atoms(&[extra]);
        pool.push((g.atoms(), extra));
        carved = extra;
    }
    let mut left_in_chunk = rho;
    for (i, mut rem) in pool {
        while rem > tol {
            let take = rem.min(left_in_chunk);
            pieces.push((i, take, Some(chunk.min(m - 1))));
            rem -= take;
            left_in_chunk -= take;
            if left_in_chunk <= tol {
                chunk += 1;
                left_in_chunk = rho;
            }
        }
    }
    for (i, rem) in outside_rest {
        pieces.push((i, rem, None));
    }
    // merge pieces of the same atom landing in the same part
    let mut merged: Vec<(usize, f64, Option<usize>)> = Vec::new();
    for piece in pieces {
        match merged.iter_mut().find(|q| q.0 == piece.0 && q.2 == piece.2) {
            Some(q) => q.1 += piece.1,
            None => merged.push(piece),
        }
    }
    merged.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
    let origin_idx: Vec<usize> = merged.iter().map(|x| x.0).collect();
    let new_masses: Vec<f64> = merged.iter().map(|x| x.1).collect();
    let mut refined = work.pullback(&origin_idx, new_masses);
    if carved > 0.0 {
        let iso = match g.isolated_mass() {
            IsolatedMass::Finite(x) => IsolatedMass::Finite((x - carved).max(0.0)),
            IsolatedMass::Infinite => IsolatedMass::Infinite,
        };
        refined = refined.with_isolated_mass(iso);
    }
    let labels: Vec<Option<usize>> = merged.iter().map(|x| x.2).collect();
    let partition = SubspacePartition { parts: m, part_of: labels };
    partition.check(refined.atoms())?;
    let avg = step_average(&refined, &partition)?;
    let certificate = d22_only(&refined, &avg)?;
    let origin = origin_idx.iter().map(|&i| (i < g.atoms()).then_some(i)).collect();
    Ok(EqualPartsResult { graphex: refined, partition, origin, certificate, inner_eps: inner })
}

/// Kernel norms of the difference before and after stepping both sides by `p`.
pub fn contraction_pair(g1: &StepGraphex, g2: &StepGraphex, p: &SubspacePartition) -> Result<[(f64, f64); 2]> {
    let before = d22_only(g1, g2)?;
    let after = d22_only(&step_average(g1, p)?, &step_average(g2, p)?)?;
    Ok([
        (before.kernel_component, after.kernel_component),
        (before.marginal_l2_component, after.marginal_l2_component),
    ])
}

/// Regularity partitions for several graphexes at once.
pub fn partition_all(gs: &[StepGraphex], cfg: &RegularityConfig) -> Vec<Result<RegularityResult>> {
    gs.par_iter().map(|g| weak_regularity_partition(g, cfg, None)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_graphex(m: usize, seed: u64) -> StepGraphex {
        let mut rng = stream_rng(seed, 0);
        let masses: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.3)).collect();
        let mut rows = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                rows[i][j] = rng.random_range(0.0..1.0);
                rows[j][i] = rows[i][j];
            }
        }
        let star = (0..m).map(|_| rng.random_range(0.0..0.2)).collect();
        StepGraphex::new(masses, rows, star, rng.random_range(0.0..0.1)).unwrap()
    }

    #[test]
    fn discrete_partition_is_identity() {
        let g = random_graphex(5, 1);
        let a = step_average(&g, &SubspacePartition::discrete(5)).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-15 * p.abs().max(1.0));
        assert!(close(a.graphon_flat(), g.graphon_flat()));
        assert!(close(a.star(), g.star()));
        assert_eq!(a.dust(), g.dust());
    }

    #[test]
    fn single_part_averages() {
        let g = StepGraphex::graphon_only(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = SubspacePartition { parts: 1, part_of: vec![Some(0), Some(0)] };
        let a = step_average(&g, &p).unwrap();
        assert!(a.graphon_flat().iter().all(|&w| w == 0.5));
        assert_eq!(a.edge_density(), 0.5);
    }

    #[test]
    fn outside_star_moves_to_dust() {
        let g = StepGraphex::new(vec![1.0, 1.0], vec![vec![0.0; 2]; 2], vec![1.0, 0.0], 0.25).unwrap();
        let a = step_average(&g, &SubspacePartition::empty(2)).unwrap();
        assert_eq!(a.star(), &[0.0, 0.0]);
        assert_eq!(a.dust(), 1.25);
    }

    #[test]
    fn own_parts_terminate_immediately() {
        let g = fixtures::example_ex1(0.25);
        let cfg = RegularityConfig::new(0.1, 1.0, 1.0, 1.0);
        let r = weak_regularity_partition(&g, &cfg, Some(&SubspacePartition::discrete(2))).unwrap();
        assert_eq!(r.rounds, 0);
        assert_eq!(r.certificate, 0.0);
    }

    #[test]
    fn from_empty_reaches_the_steps() {
        let g = fixtures::example_ex1(0.25);
        let cfg = RegularityConfig::new(0.1, 1.0, 1.0, 1.0);
        let r = weak_regularity_partition(&g, &cfg, None).unwrap();
        assert!(r.certificate <= 0.1);
        assert!(r.rounds <= r.round_cap);
        for w in r.log.windows(2) {
            assert!(w[1].energy >= w[0].energy - 1e-12);
        }
    }

    #[test]
    fn unbounded_is_rejected() {
        let g = fixtures::ui_family(4.0);
        let cfg = RegularityConfig::new(0.3, 1.0, 1.0, 1.0);
        assert!(matches!(weak_regularity_partition(&g, &cfg, None), Err(GraphexError::Precondition(_))));
    }

    #[test]
    fn equal_parts_examples() {
        let cfg = RegularityConfig::new(0.3, 1.0, 1.0, 1.0);
        let c = equal_parts_partition(&fixtures::constant(0.5, 1.0), &cfg, 0.5, 2).unwrap();
        assert_eq!(c.partition.parts, 2);
        assert!(c.certificate.d22 < 1e-12);

        let e = equal_parts_partition(&fixtures::example_ex1(0.25), &cfg, 0.25, 4).unwrap();
        let pm = e.partition.part_masses(e.graphex.masses());
        assert!(pm.iter().all(|&x| (x - 0.25).abs() < 1e-12), "{pm:?}");
        assert!(e.certificate.d22 < 1e-9, "{:?}", e.certificate);
        // each part sits inside one step
        for members in e.partition.members() {
            let o: Vec<_> = members.iter().map(|&i| e.origin[i]).collect();
            assert!(o.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn equal_parts_random() {
        let g = random_graphex(8, 11);
        let cfg = RegularityConfig::new(0.5, 1.0, 1.0, 1.0);
        let total = g.total_mass();
        let r = equal_parts_partition(&g, &cfg, total / 8.0, 8).unwrap();
        assert!(r.certificate.d22 <= 0.5);
        let pm = r.partition.part_masses(r.graphex.masses());
        assert!(pm.iter().all(|&x| (x - total / 8.0).abs() < 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn averaging_preserves_density_and_is_idempotent(seed in any::<u64>(), labels in prop::collection::vec(prop::option::of(0usize..3), 5)) {
            let g = random_graphex(5, seed);
            let p = SubspacePartition::from_labels(&labels);
            let a = step_average(&g, &p).unwrap();
            prop_assert!((a.edge_density() - g.edge_density()).abs() <= 1e-12 * g.edge_density().max(1.0));
            let aa = step_average(&a, &p).unwrap();
            for (x, y) in aa.graphon_flat().iter().zip(a.graphon_flat()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((aa.dust() - a.dust()).abs() < 1e-12);
            prop_assert!(a.l1_norm() <= g.l1_norm() + 1e-12);
            prop_assert!(a.max_marginal() <= g.max_marginal() + 1e-12);
        }

        #[test]
        fn stepping_contracts(seed in any::<u64>(), labels in prop::collection::vec(prop::option::of(0usize..3), 5)) {
            let g1 = random_graphex(5, seed);
            let mut g2raw = crate::graphex::RawGraphex::from(&random_graphex(5, seed ^ 0xABCD));
            g2raw.masses = g1.masses().to_vec();
            let g2 = StepGraphex::try_from(g2raw).unwrap();
            let p = SubspacePartition::from_labels(&labels);
            let [(kb, ka), (mb, ma)] = contraction_pair(&g1, &g2, &p).unwrap();
            prop_assert!(ka <= kb + 1e-9);
            prop_assert!(ma <= mb + 1e-9);
        }
    }
}
