//! Empirical graphexes of finite graphs, the sampling-convergence experiment,
//! coupled samples and graphon approximations of graphexes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::distances::{
    self, degree_grid, delta_gp_estimate, optimize_coupling_warm, Coupling, CouplingConfig, DeltaGpConfig,
    DistanceBreakdown,
};
use crate::error::{domain, precondition, GraphexError, Result};
use crate::graphex::{check_same_space, IsolatedMass, StepGraphex};
use crate::regularity::{self, RegularityConfig};
use crate::rng::{child_seed, stream_rng, streams};
use crate::sampling::{self, PlainGraph};

/// One atom of mass `rho` per vertex with the adjacency matrix as graphon.
pub fn empirical_graphex(g: &PlainGraph, rho: f64) -> Result<StepGraphex> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(domain(format!("rho must be positive, got {rho}")));
    }
    let n = g.n;
    let mut w = vec![0.0; n * n];
    for &(u, v) in &g.edges {
        w[u * n + v] = 1.0;
        w[v * n + u] = 1.0;
    }
    Ok(StepGraphex::from_flat(vec![rho; n], w, vec![0.0; n], 0.0, IsolatedMass::Finite(0.0), false))
}

/// Empirical graphex with `rho = 1/sqrt(2|E|)`, which has `||.||_1 = 1`.
pub fn stretched_empirical_graphex(g: &PlainGraph) -> Result<StepGraphex> {
    let e = g.adjacency().iter().map(Vec::len).sum::<usize>() / 2;
    if e == 0 {
        return Err(precondition("stretched graphex needs at least one edge"));
    }
    empirical_graphex(g, 1.0 / (2.0 * e as f64).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub t_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Atom mass for the empirical graphex; `None` means `1/T`.
    pub rho: Option<f64>,
    pub restarts: usize,
    pub moves: usize,
    /// Vertex count above which the empirical side is coarsened first.
    pub coarsen_above: usize,
    pub coarse_eps: f64,
    /// Finite degree bounds tried per estimate, besides infinity.
    pub grid_points: usize,
}

impl ExperimentConfig {
    pub fn new(t_list: Vec<f64>, trials: usize, seed: u64) -> Self {
        ExperimentConfig { t_list, trials, seed, rho: None, restarts: 6, moves: 150, coarsen_above: 300, coarse_eps: 0.1, grid_points: 8 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub t: f64,
    pub trial: usize,
    pub seed: u64,
    pub vertices: usize,
    pub edges: usize,
    pub coarsened: bool,
    pub estimate: f64,
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub trials: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub edge_mean: f64,
    pub edge_variance: f64,
    pub budget_exhausted: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ExperimentReport {
    pub fn medians(&self) -> Vec<f64> {
        self.summary.iter().map(|r| r.median).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,T,trial,seed,vertices,edges,coarsened,estimate,budget_exhausted,min,q25,median,q75,max,edge_mean,edge_variance\n",
        );
        for r in &self.trials {
            let _ = writeln!(
                out,
                "trial,{},{},{},{},{},{},{},{},,,,,,,",
                r.t, r.trial, r.seed, r.vertices, r.edges, r.coarsened, r.estimate, r.budget_exhausted
            );
        }
        for s in &self.summary {
            let _ = writeln!(
                out,
                "summary,{},{},,,,,,{},{},{},{},{},{},{},{}",
                s.t, s.trials, s.budget_exhausted, s.min, s.q25, s.median, s.q75, s.max, s.edge_mean, s.edge_variance
            );
        }
        out
    }
}

fn coarsen(emp: &StepGraphex, eps: f64, seed: u64) -> Result<StepGraphex> {
    let c = emp.l1_norm().max(f64::MIN_POSITIVE);
    let d = emp.max_marginal().max(f64::MIN_POSITIVE);
    let mut cfg = RegularityConfig::new(eps, emp.max_graphon().max(f64::MIN_POSITIVE), c, d);
    cfg.seed = seed;
    let res = regularity::weak_regularity_partition(emp, &cfg, None)?;
    regularity::quotient(emp, &res.partition)
}

fn run_trial(g: &StepGraphex, t: f64, seed: u64, cfg: &ExperimentConfig) -> Result<(usize, usize, bool, f64, bool)> {
    let sample = sampling::sample_process(g, t, seed, false)?;
    let plain = sample.to_plain();
    let emp = empirical_graphex(&plain, cfg.rho.unwrap_or(1.0 / t))?;
    let coarsened = plain.n > cfg.coarsen_above;
    let emp = if coarsened { coarsen(&emp, cfg.coarse_eps, child_seed(seed, 1))? } else { emp };
    let dcfg = DeltaGpConfig {
        coupling: CouplingConfig {
            restarts: cfg.restarts,
            moves: cfg.moves,
            seed: child_seed(seed, 2),
            ..CouplingConfig::quick(0)
        },
        mass_scaling: true,
    };
    let est = delta_gp_estimate(&emp, g, &degree_grid(&emp, g, cfg.grid_points), &dcfg)?;
    Ok((plain.n, plain.edges.len(), coarsened, est.value, est.budget_exhausted))
}

/// Samples `G_T` for each horizon, forms the empirical graphex with atom mass
/// `1/T` and bounds its weak kernel distance to `g`.
pub fn convergence_experiment(g: &StepGraphex, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if g.is_signed() {
        return Err(precondition("convergence experiment needs an unsigned graphex"));
    }
    if cfg.t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain("horizons must be strictly increasing"));
    }
    let mut trials = Vec::new();
    let mut summary = Vec::new();
    for (ti, &t) in cfg.t_list.iter().enumerate() {
        let base = child_seed(cfg.seed, ti as u64);
        let rows: Vec<Result<TrialRow>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let seed = child_seed(base, k as u64);
                let (vertices, edges, coarsened, estimate, budget_exhausted) = run_trial(g, t, seed, cfg)?;
                Ok(TrialRow { t, trial: k, seed, vertices, edges, coarsened, estimate, budget_exhausted })
            })
            .collect();
        let rows: Vec<TrialRow> = rows.into_iter().collect::<Result<_>>()?;
        let mut est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
        est.sort_by(f64::total_cmp);
        let counts: Vec<f64> = rows.iter().map(|r| r.edges as f64).collect();
        let n = counts.len().max(1) as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = if counts.len() > 1 {
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        summary.push(SummaryRow {
            t,
            trials: rows.len(),
            min: quantile(&est, 0.0),
            q25: quantile(&est, 0.25),
            median: quantile(&est, 0.5),
            q75: quantile(&est, 0.75),
            max: quantile(&est, 1.0),
            edge_mean: mean,
            edge_variance: var,
            budget_exhausted: rows.iter().filter(|r| r.budget_exhausted).count(),
        });
        trials.extend(rows);
    }
    Ok(ExperimentReport { config: cfg.clone(), trials, summary })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoupledSampleResult {
    /// `d22(g1, g2)`.
    pub source_distance: f64,
    /// Certificate of the coupling that matches vertices sharing a feature point.
    pub matched: DistanceBreakdown,
    /// Best certificate after local search from the matched coupling (equal to
    /// `matched.d22` when the search is skipped).
    pub estimate: f64,
    /// `min((31 c C)^(1/4), 2 c^(3/4), cbrt(3) c)` with `c = d22(g1, g2)`.
    pub bound: f64,
    pub vertices: [usize; 2],
    pub searched: bool,
}

/// Samples `G_T(g1)` and `G_T(g2)` on one Poisson vertex cloud with
/// conditionally independent edges, and bounds the kernel distance between
/// their empirical graphexes (atom mass `1/T`). Local search runs when the
/// padded vertex count is at most `search_limit`.
pub fn coupled_sample_distance(
    g1: &StepGraphex,
    g2: &StepGraphex,
    t: f64,
    seed: u64,
    search_limit: usize,
) -> Result<CoupledSampleResult> {
    check_same_space(g1, g2)?;
    if g1.is_signed() || g2.is_signed() {
        return Err(precondition("coupled sampling needs unsigned graphexes"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("horizon T must be positive and finite, got {t}")));
    }
    let cloud = sampling::shared_cloud(g1, t, seed);
    let (v1, e1) = sampling::edges_on_cloud(g1, t, cloud.clone(), &mut stream_rng(child_seed(seed, 1), streams::MAIN));
    let (v2, e2) = sampling::edges_on_cloud(g2, t, cloud, &mut stream_rng(child_seed(seed, 2), streams::MAIN));
    // Extra vertices (star leaves, dust ends) are paired in order and padded with isolated ones.
    let n = v1.len().max(v2.len());
    let plain = |edges: &[(usize, usize, sampling::EdgeKind)]| PlainGraph {
        n,
        edges: edges.iter().map(|e| (e.0, e.1)).collect(),
    };
    let rho = 1.0 / t;
    let a = empirical_graphex(&plain(&e1), rho)?;
    let b = empirical_graphex(&plain(&e2), rho)?;
    let matched = distances::d22_only(&a, &b)?;

    let c = distances::d22_only(g1, g2)?.d22;
    let cc = g1.l1_norm().max(g2.l1_norm());
    let bound = (31.0 * c * cc).powf(0.25).min(2.0 * c.powf(0.75)).min(3f64.cbrt() * c);

    let searched = n > 0 && n <= search_limit;
    let mut estimate = matched.d22;
    if searched {
        let mut matrix = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            matrix[i * (n + 1) + i] = rho;
        }
        let slack = 1.0;
        matrix[(n + 1) * (n + 1) - 1] = slack;
        let mut targets = vec![rho; n];
        targets.push(slack);
        let warm = Coupling { rows: n + 1, cols: n + 1, matrix, row_targets: targets.clone(), col_targets: targets };
        let ccfg = CouplingConfig::quick(child_seed(seed, 3));
        estimate = estimate.min(optimize_coupling_warm(&a, &b, slack, &ccfg, Some(&warm))?.certificate);
    }
    Ok(CoupledSampleResult {
        source_distance: c,
        matched,
        estimate,
        bound,
        vertices: [v1.len(), v2.len()],
        searched,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphonApproximation {
    pub graphex: StepGraphex,
    /// Mass of the absorber atom, 0 when `g` is already a pure graphon.
    pub absorber_mass: f64,
    /// `d22` between the trivial extension of `g` and the approximation.
    pub certificate: f64,
}

/// Largest absorber mass accepted before reporting infeasibility.
pub const MAX_ABSORBER_MASS: f64 = 1e12;

/// Replaces star and dust by an absorber atom of mass `Q` carrying `S/Q`
/// against each atom and `2I/Q^2` on itself.
pub fn graphon_approximation(g: &StepGraphex, eps: f64) -> Result<GraphonApproximation> {
    if g.is_signed() {
        return Err(precondition("graphon approximation needs an unsigned graphex"));
    }
    if !(eps > 0.0) {
        return Err(domain("eps must be positive"));
    }
    let s_max = g.star().iter().fold(0.0f64, |a, &b| a.max(b));
    let dust = g.dust();
    if s_max == 0.0 && dust == 0.0 {
        return Ok(GraphonApproximation { graphex: g.clone(), absorber_mass: 0.0, certificate: 0.0 });
    }
    let c = g.l1_norm();
    let d_inf = g.marginal().infinity_value;
    let sup_bound = eps * eps / (4.0 * c);
    let q = [
        s_max / sup_bound,
        (2.0 * dust / sup_bound).sqrt(),
        16.0 * d_inf * d_inf / eps.powi(4),
        s_max,
        (2.0 * dust).sqrt(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max)
        * (1.0 + 1e-9);
    if !(q <= MAX_ABSORBER_MASS) {
        return Err(GraphexError::Infeasible(format!(
            "absorber mass {q:e} required for eps = {eps} exceeds {MAX_ABSORBER_MASS:e}"
        )));
    }
    let m = g.atoms();
    let k = m + 1;
    let mut w = vec![0.0; k * k];
    for i in 0..m {
        for j in 0..m {
            w[i * k + j] = g.w(i, j);
        }
        w[i * k + m] = g.star()[i] / q;
        w[m * k + i] = g.star()[i] / q;
    }
    w[m * k + m] = 2.0 * dust / (q * q);
    let mut masses = g.masses().to_vec();
    masses.push(q);
    let approx = StepGraphex::from_flat(masses, w, vec![0.0; k], 0.0, g.isolated_mass(), false);
    let extended = g.append_zero_atoms(&[q]);
    let certificate = distances::d22_only(&extended, &approx)?.d22;
    if certificate > eps * (1.0 + 1e-9) {
        return Err(GraphexError::Infeasible(format!(
            "absorber mass {q:e} certifies only {certificate} > eps = {eps}"
        )));
    }
    Ok(GraphonApproximation { graphex: approx, absorber_mass: q, certificate })
}
