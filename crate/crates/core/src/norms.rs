//! Kernel, jumble and cut norms of step functions, and the C4 density.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, GraphexError, Result};
use crate::rng::{child_seed, stream_rng};

/// Above this size the kernel norm switches from a dense eigensolve to power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 512;
pub const DEFAULT_EXACT_CAP_2D: usize = 14;
pub const DEFAULT_EXACT_CAP_1D: usize = 24;
pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;

/// Symmetric two-variable step function on weighted atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFunction2D {
    masses: Vec<f64>,
    values: Vec<f64>,
}

/// One-variable step function on weighted atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFunction1D {
    pub masses: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction1D {
    pub fn new(masses: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(masses.len(), values.len());
        StepFunction1D { masses, values }
    }

    pub fn checked(masses: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if masses.len() != values.len() {
            return Err(domain("masses and values differ in length"));
        }
        if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(domain("masses must be positive and finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("values must be finite"));
        }
        Ok(StepFunction1D { masses, values })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().zip(&self.masses).map(|(v, r)| v.abs() * r).sum()
    }

    pub fn l2(&self) -> f64 {
        self.values.iter().zip(&self.masses).map(|(v, r)| v * v * r).sum::<f64>().sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }
}

impl StepFunction2D {
    pub fn new(masses: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = masses.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(domain(format!("values must be {m}x{m}")));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let u = StepFunction2D { masses, values };
        u.check()?;
        Ok(u)
    }

    pub(crate) fn from_flat(masses: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), masses.len() * masses.len());
        StepFunction2D { masses, values }
    }

    fn check(&self) -> Result<()> {
        let m = self.len();
        if self.masses.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(domain("masses must be positive and finite"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(domain("values must be finite"));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if self.at(i, j) != self.at(j, i) {
                    return Err(domain(format!("values not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.masses.len() + j]
    }

    pub fn sub(&self, other: &StepFunction2D) -> Result<StepFunction2D> {
        if self.masses != other.masses {
            return Err(GraphexError::Mismatch("step functions on different atoms".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(StepFunction2D::from_flat(self.masses.clone(), values))
    }

    pub fn l1(&self) -> f64 {
        self.weighted_sum(|v| v.abs())
    }

    pub fn l2_squared(&self) -> f64 {
        self.weighted_sum(|v| v * v)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// `max_x int |u(x,y)| dy`.
    pub fn abs_degree_sup(&self) -> f64 {
        let m = self.len();
        (0..m)
            .map(|i| (0..m).map(|j| self.at(i, j).abs() * self.masses[j]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn weighted_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        let m = self.len();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                total += f(self.at(i, j)) * self.masses[i] * self.masses[j];
            }
        }
        total
    }

    /// `M[i][j] = sqrt(rho_i) u_ij sqrt(rho_j)`, row-major.
    fn scaled(&self) -> Vec<f64> {
        let m = self.len();
        let sq: Vec<f64> = self.masses.iter().map(|r| r.sqrt()).collect();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = sq[i] * self.at(i, j) * sq[j];
            }
        }
        out
    }
}

/// Operator norm of `u` as a kernel on `L^2`.
pub fn kernel_norm(u: &StepFunction2D, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(domain("tolerance must be positive"));
    }
    if u.values.iter().any(|v| !v.is_finite()) {
        return Err(domain("non-finite entries"));
    }
    let m = u.len();
    if m == 0 {
        return Ok(0.0);
    }
    let scaled = u.scaled();
    if m <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &scaled));
        return Ok(eig.eigenvalues.iter().fold(0.0, |a, &e| a.max(e.abs())));
    }
    Ok(power_spectral_radius(&scaled, m, tol))
}

/// Kernel norm at the default tolerance.
pub fn kernel(u: &StepFunction2D) -> f64 {
    kernel_norm(u, DEFAULT_KERNEL_TOL).expect("finite step function")
}

fn mat_vec(a: &[f64], m: usize, x: &[f64], out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        *o = a[i * m..(i + 1) * m].iter().zip(x).map(|(p, q)| p * q).sum();
    });
}

/// Largest eigenvalue of `M^2` by power iteration, returned as its square root.
fn power_spectral_radius(a: &[f64], m: usize, tol: f64) -> f64 {
    let mut x: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * (i % 7) as f64).collect();
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut last = 0.0;
    for _ in 0..20_000 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        mat_vec(a, m, &x, &mut y);
        mat_vec(a, m, &y, &mut z);
        // Rayleigh quotient of M^2
        let lambda: f64 = x.iter().zip(&z).map(|(p, q)| p * q).sum();
        std::mem::swap(&mut x, &mut z);
        if (lambda - last).abs() <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
            return lambda.max(0.0).sqrt();
        }
        last = lambda;
    }
    last.max(0.0).sqrt()
}

/// Largest `|eigenvalue|` of the Ritz values after `steps` Lanczos steps with
/// full reorthogonalisation on the symmetric row-major `a`. Never exceeds the
/// true spectral radius.
pub(crate) fn lanczos_spectral_radius(a: &[f64], m: usize, steps: usize) -> f64 {
    let steps = steps.min(m);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut q: Vec<f64> = (0..m).map(|i| 1.0 + 0.37 * ((i * 7919) % 13) as f64).collect();
    let n0 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n0);
    let mut w = vec![0.0; m];
    for _ in 0..steps {
        for (i, o) in w.iter_mut().enumerate() {
            *o = a[i * m..(i + 1) * m].iter().zip(&q).map(|(p, x)| p * x).sum();
        }
        let al: f64 = w.iter().zip(&q).map(|(p, x)| p * x).sum();
        alpha.push(al);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(p, x)| p * x).sum();
                w.iter_mut().zip(b).for_each(|(p, x)| *p -= c * x);
            }
        }
        let nb = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb < 1e-12 || basis.len() == steps {
            break;
        }
        beta.push(nb);
        q = w.iter().map(|v| v / nb).collect();
    }
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    SymmetricEigen::new(t).eigenvalues.iter().fold(0.0, |acc, &e| acc.max(e.abs()))
}

/// `t(C4, u) = trace((U diag(rho))^4)`.
pub fn c4_density(u: &StepFunction2D) -> f64 {
    let m = u.len();
    if m == 0 {
        return 0.0;
    }
    let a = DMatrix::from_row_slice(m, m, &u.scaled());
    let sq = &a * &a;
    sq.iter().map(|v| v * v).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SetNormKind {
    Jumble,
    Cut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Heuristic,
}

#[derive(Clone, Debug)]
pub struct SetNormConfig {
    pub kind: SetNormKind,
    pub mode: SearchMode,
    pub restarts: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub exact_cap_2d: usize,
    pub exact_cap_1d: usize,
}

impl SetNormConfig {
    pub fn new(kind: SetNormKind, mode: SearchMode) -> Self {
        SetNormConfig {
            kind,
            mode,
            restarts: 20,
            max_rounds: 200,
            seed: 0,
            exact_cap_2d: DEFAULT_EXACT_CAP_2D,
            exact_cap_1d: DEFAULT_EXACT_CAP_1D,
        }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Value of a set norm with the witness sets that attain it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetNormResult {
    pub value: f64,
    pub s: Vec<usize>,
    pub t: Vec<usize>,
    pub exact: bool,
    pub budget_exhausted: bool,
}

/// Best `S` for a fixed weight vector: maximizes `|sum_{i in S} w_i| / sqrt(mu(S))`
/// (jumble) or `|sum_{i in S} w_i|` (cut), where `w_i` already includes the mass `rho_i`.
///
/// Returns `(objective, S)`; an all-zero `w` yields `(0, [])`.
fn best_response(w: &[f64], masses: &[f64], kind: SetNormKind) -> (f64, Vec<usize>) {
    match kind {
        SetNormKind::Cut => {
            let pos: f64 = w.iter().filter(|&&x| x > 0.0).sum();
            let neg: f64 = -w.iter().filter(|&&x| x < 0.0).sum::<f64>();
            if pos >= neg {
                (pos, (0..w.len()).filter(|&i| w[i] > 0.0).collect())
            } else {
                (neg, (0..w.len()).filter(|&i| w[i] < 0.0).collect())
            }
        }
        SetNormKind::Jumble => {
            // level sets of the density w_i / rho_i are optimal; scan prefixes
            // in both sort directions
            let mut order: Vec<usize> = (0..w.len()).collect();
            let dens: Vec<f64> = w.iter().zip(masses).map(|(x, r)| x / r).collect();
            order.sort_by(|&a, &b| dens[b].total_cmp(&dens[a]).then(a.cmp(&b)));
            let mut best = (0.0, 0usize, true);
            for forward in [true, false] {
                let mut num = 0.0;
                let mut mass = 0.0;
                for k in 0..order.len() {
                    let i = if forward { order[k] } else { order[order.len() - 1 - k] };
                    num += w[i];
                    mass += masses[i];
                    let val = num.abs() / mass.sqrt();
                    if val > best.0 {
                        best = (val, k + 1, forward);
                    }
                }
            }
            let (val, len, forward) = best;
            let mut set: Vec<usize> = if forward {
                order[..len].to_vec()
            } else {
                order[order.len() - len..].to_vec()
            };
            set.sort_unstable();
            (val, set)
        }
    }
}

/// `w_j = rho_j * sum_{i in S} u_ij rho_i`.
fn weights_for(u: &StepFunction2D, set: &[usize]) -> Vec<f64> {
    let m = u.len();
    (0..m)
        .map(|j| set.iter().map(|&i| u.at(i, j) * u.masses[i]).sum::<f64>() * u.masses[j])
        .collect()
}

fn pair_value(u: &StepFunction2D, s: &[usize], t: &[usize], kind: SetNormKind) -> f64 {
    if s.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &i in s {
        for &j in t {
            total += u.at(i, j) * u.masses[i] * u.masses[j];
        }
    }
    match kind {
        SetNormKind::Cut => total.abs(),
        SetNormKind::Jumble => {
            let ms: f64 = s.iter().map(|&i| u.masses[i]).sum();
            let mt: f64 = t.iter().map(|&j| u.masses[j]).sum();
            total.abs() / (ms * mt).sqrt()
        }
    }
}

/// Jumble or cut norm of a two-variable step function with witness sets.
pub fn bilinear_set_norm(u: &StepFunction2D, cfg: &SetNormConfig) -> Result<SetNormResult> {
    let m = u.len();
    if m == 0 {
        return Ok(SetNormResult { value: 0.0, s: vec![], t: vec![], exact: true, budget_exhausted: false });
    }
    match cfg.mode {
        SearchMode::Exact => {
            if m > cfg.exact_cap_2d {
                return Err(GraphexError::Cap(format!(
                    "exact set enumeration needs m <= {}, got {m}",
                    cfg.exact_cap_2d
                )));
            }
            Ok(exact_2d(u, cfg.kind))
        }
        SearchMode::Heuristic => Ok(heuristic_2d(u, cfg)),
    }
}

/// Enumerates every nonempty `S` in Gray-code order with incremental weight
/// updates; the best `T` for each `S` is exact by level-set optimality.
fn exact_2d(u: &StepFunction2D, kind: SetNormKind) -> SetNormResult {
    let m = u.len();
    let mut w = vec![0.0; m];
    let mut mask: u64 = 0;
    let mut mass_s = 0.0;
    let mut best = (0.0, 0u64, Vec::new());
    for step in 1u64..(1u64 << m) {
        let bit = step.trailing_zeros() as usize;
        let sign = if mask & (1 << bit) == 0 { 1.0 } else { -1.0 };
        mask ^= 1 << bit;
        mass_s += sign * u.masses[bit];
        for j in 0..m {
            w[j] += sign * u.at(bit, j) * u.masses[bit] * u.masses[j];
        }
        let (val, t) = best_response(&w, &u.masses, kind);
        let val = match kind {
            SetNormKind::Jumble => val / mass_s.max(f64::MIN_POSITIVE).sqrt(),
            SetNormKind::Cut => val,
        };
        if val > best.0 {
            best = (val, mask, t);
        }
    }
    let (_, mask, t) = best;
    let s: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
    // recompute from scratch to shed incremental rounding
    let value = pair_value(u, &s, &t, kind);
    SetNormResult { value, s, t, exact: true, budget_exhausted: false }
}

fn heuristic_2d(u: &StepFunction2D, cfg: &SetNormConfig) -> SetNormResult {
    let m = u.len();
    let restarts = cfg.restarts.max(1);
    let runs: Vec<(f64, Vec<usize>, Vec<usize>, bool)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut t: Vec<usize> = if r == 0 {
                (0..m).collect()
            } else {
                let mut rng = stream_rng(child_seed(cfg.seed, r as u64), 0);
                let mut t: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
                if t.is_empty() {
                    t.push(rng.random_range(0..m));
                }
                t
            };
            let mut s = Vec::new();
            let mut value = 0.0;
            let mut converged = false;
            for _ in 0..cfg.max_rounds {
                let (_, new_s) = best_response(&weights_for(u, &t), &u.masses, cfg.kind);
                let (_, new_t) = best_response(&weights_for(u, &new_s), &u.masses, cfg.kind);
                let v = pair_value(u, &new_s, &new_t, cfg.kind);
                if v <= value * (1.0 + 1e-15) {
                    converged = true;
                    break;
                }
                value = v;
                s = new_s;
                t = new_t;
            }
            (value, s, t, converged)
        })
        .collect();
    let mut best = 0usize;
    for (k, run) in runs.iter().enumerate() {
        if run.0 > runs[best].0 {
            best = k;
        }
    }
    let (value, s, t, _) = runs[best].clone();
    let budget_exhausted = runs.iter().any(|r| !r.3);
    let (s, t) = if value == 0.0 { (vec![], vec![]) } else { (s, t) };
    SetNormResult { value, s, t, exact: false, budget_exhausted }
}

/// Jumble or cut norm of a one-variable step function.
///
/// Heuristic mode is the sorted prefix scan, which is exact for one variable;
/// exact mode enumerates subsets and serves as its oracle.
pub fn set_norm_1d(f: &StepFunction1D, kind: SetNormKind, mode: SearchMode, cap: usize) -> Result<SetNormResult> {
    let m = f.len();
    let w: Vec<f64> = f.values.iter().zip(&f.masses).map(|(v, r)| v * r).collect();
    match mode {
        SearchMode::Heuristic => {
            let (value, s) = best_response(&w, &f.masses, kind);
            Ok(SetNormResult { value, s, t: vec![], exact: true, budget_exhausted: false })
        }
        SearchMode::Exact => {
            if m > cap {
                return Err(GraphexError::Cap(format!("exact 1D enumeration needs m <= {cap}, got {m}")));
            }
            let mut best = (0.0, 0u64);
            let mut num = 0.0;
            let mut mass = 0.0;
            let mut mask = 0u64;
            for step in 1u64..(1u64 << m) {
                let bit = step.trailing_zeros() as usize;
                let sign = if mask & (1 << bit) == 0 { 1.0 } else { -1.0 };
                mask ^= 1 << bit;
                num += sign * w[bit];
                mass += sign * f.masses[bit];
                let val = match kind {
                    SetNormKind::Jumble => num.abs() / mass.max(f64::MIN_POSITIVE).sqrt(),
                    SetNormKind::Cut => num.abs(),
                };
                if val > best.0 {
                    best = (val, mask);
                }
            }
            let s: Vec<usize> = (0..m).filter(|&i| best.1 & (1 << i) != 0).collect();
            let total: f64 = s.iter().map(|&i| w[i]).sum();
            let value = match kind {
                SetNormKind::Jumble if !s.is_empty() => {
                    total.abs() / s.iter().map(|&i| f.masses[i]).sum::<f64>().sqrt()
                }
                SetNormKind::Jumble => 0.0,
                SetNormKind::Cut => total.abs(),
            };
            Ok(SetNormResult { value, s, t: vec![], exact: true, budget_exhausted: false })
        }
    }
}

/// Jumble norm of a one-variable step function (exact).
pub fn jumble_1d(f: &StepFunction1D) -> f64 {
    let w: Vec<f64> = f.values.iter().zip(&f.masses).map(|(v, r)| v * r).collect();
    best_response(&w, &f.masses, SetNormKind::Jumble).0
}

/// Jumble norm, exact up to the default cap and heuristic above it.
pub fn jumble_norm(u: &StepFunction2D, restarts: usize, seed: u64) -> SetNormResult {
    let mode = if u.len() <= DEFAULT_EXACT_CAP_2D { SearchMode::Exact } else { SearchMode::Heuristic };
    let cfg = SetNormConfig::new(SetNormKind::Jumble, mode).restarts(restarts).seed(seed);
    bilinear_set_norm(u, &cfg).expect("mode chosen within cap")
}

pub fn cut_norm(u: &StepFunction2D, restarts: usize, seed: u64) -> SetNormResult {
    let mode = if u.len() <= DEFAULT_EXACT_CAP_2D { SearchMode::Exact } else { SearchMode::Heuristic };
    let cfg = SetNormConfig::new(SetNormKind::Cut, mode).restarts(restarts).seed(seed);
    bilinear_set_norm(u, &cfg).expect("mode chosen within cap")
}
