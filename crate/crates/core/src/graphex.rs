//! Step graphexes over finite atomic spaces.
//!
//! A [`StepGraphex`] is a finite list of atoms with positive masses, a
//! symmetric matrix holding the constant graphon value on each pair of atoms,
//! a star intensity per atom and a dust density. Mass where the graphon and
//! the star intensity vanish is tracked as `isolated_mass` (possibly
//! infinite); it never changes any functional or any sampled graph.
//!
//! Values of this type are immutable and always valid: construction goes
//! through [`RawGraphex`] and [`validate`].

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, GraphexError, Result};
use crate::norms::{StepFunction1D, StepFunction2D};

/// Relative tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-10;

/// Measure of the part of the space outside the steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IsolatedMass {
    Finite(f64),
    Infinite,
}

impl IsolatedMass {
    pub fn plus(self, extra: f64) -> IsolatedMass {
        match self {
            IsolatedMass::Finite(m) => IsolatedMass::Finite(m + extra),
            IsolatedMass::Infinite => IsolatedMass::Infinite,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            IsolatedMass::Finite(m) => m,
            IsolatedMass::Infinite => f64::INFINITY,
        }
    }
}

impl Default for IsolatedMass {
    fn default() -> Self {
        IsolatedMass::Finite(0.0)
    }
}

impl Serialize for IsolatedMass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            IsolatedMass::Finite(m) => s.serialize_f64(*m),
            IsolatedMass::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for IsolatedMass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(m) => Ok(IsolatedMass::Finite(m)),
            Repr::Text(t) if t == "inf" => Ok(IsolatedMass::Infinite),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "isolated_mass must be a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// The unvalidated JSON form of a step graphex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawGraphex {
    pub masses: Vec<f64>,
    pub graphon: Vec<Vec<f64>>,
    pub star: Vec<f64>,
    #[serde(default)]
    pub dust: f64,
    #[serde(default)]
    pub isolated_mass: IsolatedMass,
    #[serde(default)]
    pub signed: bool,
}

/// Names of the invariants checked by [`validate`].
pub mod invariant {
    pub const SHAPE: &str = "shape";
    pub const FINITE: &str = "finiteness";
    pub const SYMMETRY: &str = "symmetry";
    pub const MASS_POSITIVITY: &str = "mass positivity";
    pub const GRAPHON_RANGE: &str = "graphon range";
    pub const STAR_NONNEGATIVITY: &str = "star nonnegativity";
    pub const DUST_NONNEGATIVITY: &str = "dust nonnegativity";
    pub const ISOLATED_MASS: &str = "isolated mass nonnegativity";
    pub const LOCAL_FINITENESS: &str = "local finiteness";
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn push(&mut self, invariant: &'static str, detail: String) {
        self.violations.push(Violation { invariant, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.invariant, v.detail))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks every invariant of a step graphex and reports each violation.
pub fn validate(raw: &RawGraphex) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = raw.masses.len();
    if raw.star.len() != m {
        report.push(invariant::SHAPE, format!("star has length {}, expected {m}", raw.star.len()));
    }
    if raw.graphon.len() != m || raw.graphon.iter().any(|row| row.len() != m) {
        report.push(invariant::SHAPE, format!("graphon must be {m}x{m}"));
    }
    if !report.is_valid() {
        // the remaining checks index by atom
        return report;
    }

    let all_finite = raw.masses.iter().all(|x| x.is_finite())
        && raw.graphon.iter().flatten().all(|x| x.is_finite())
        && raw.star.iter().all(|x| x.is_finite())
        && raw.dust.is_finite();
    if !all_finite {
        report.push(invariant::FINITE, "masses, graphon, star and dust must be finite".into());
    }

    for i in 0..m {
        for j in (i + 1)..m {
            if raw.graphon[i][j] != raw.graphon[j][i] {
                report.push(
                    invariant::SYMMETRY,
                    format!("graphon[{i}][{j}]={} but graphon[{j}][{i}]={}", raw.graphon[i][j], raw.graphon[j][i]),
                );
            }
        }
    }
    for (i, &mass) in raw.masses.iter().enumerate() {
        if !(mass > 0.0) {
            report.push(invariant::MASS_POSITIVITY, format!("masses[{i}]={mass}"));
        }
    }
    if !raw.signed {
        for i in 0..m {
            for j in i..m {
                let w = raw.graphon[i][j];
                if !(0.0..=1.0).contains(&w) {
                    report.push(invariant::GRAPHON_RANGE, format!("graphon[{i}][{j}]={w} outside [0,1]"));
                }
            }
        }
        for (i, &s) in raw.star.iter().enumerate() {
            if s < 0.0 {
                report.push(invariant::STAR_NONNEGATIVITY, format!("star[{i}]={s}"));
            }
        }
        if raw.dust < 0.0 {
            report.push(invariant::DUST_NONNEGATIVITY, format!("dust={}", raw.dust));
        }
    }
    match raw.isolated_mass {
        IsolatedMass::Finite(x) if !(x >= 0.0) || !x.is_finite() => {
            report.push(invariant::ISOLATED_MASS, format!("isolated_mass={x}"));
        }
        _ => {}
    }

    // With finitely many finite atoms, mu({D > D0}) is bounded by the total
    // step mass, the truncated graphex is integrable and min{S,1} is
    // integrable; the only way to break this is floating-point overflow.
    if all_finite {
        let total: f64 = raw.masses.iter().sum();
        let mut l1 = 2.0 * raw.dust.abs();
        for i in 0..m {
            l1 += 2.0 * raw.star[i].abs() * raw.masses[i];
            for j in 0..m {
                l1 += raw.graphon[i][j].abs() * raw.masses[i] * raw.masses[j];
            }
        }
        let star_min: f64 = raw.star.iter().zip(&raw.masses).map(|(s, r)| s.abs().min(1.0) * r).sum();
        if !total.is_finite() || !l1.is_finite() || !star_min.is_finite() {
            report.push(invariant::LOCAL_FINITENESS, "step mass or L1 norm overflows".into());
        }
    }
    report
}

/// A validated step graphex.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGraphex {
    masses: Vec<f64>,
    graphon: Vec<f64>,
    star: Vec<f64>,
    dust: f64,
    isolated_mass: IsolatedMass,
    signed: bool,
}

/// Per-atom marginals `D(x) = D_W(x) + S(x)` and the value at the point `infinity`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalProfile {
    pub values: Vec<f64>,
    pub graphon_part: Vec<f64>,
    pub infinity_value: f64,
}

impl TryFrom<RawGraphex> for StepGraphex {
    type Error = GraphexError;

    fn try_from(raw: RawGraphex) -> Result<Self> {
        let report = validate(&raw);
        if !report.is_valid() {
            return Err(GraphexError::Invalid(report));
        }
        let m = raw.masses.len();
        let mut graphon = Vec::with_capacity(m * m);
        for row in &raw.graphon {
            graphon.extend_from_slice(row);
        }
        Ok(StepGraphex {
            masses: raw.masses,
            graphon,
            star: raw.star,
            dust: raw.dust,
            isolated_mass: raw.isolated_mass,
            signed: raw.signed,
        })
    }
}

impl From<&StepGraphex> for RawGraphex {
    fn from(g: &StepGraphex) -> Self {
        RawGraphex {
            masses: g.masses.clone(),
            graphon: g.graphon_rows(),
            star: g.star.clone(),
            dust: g.dust,
            isolated_mass: g.isolated_mass,
            signed: g.signed,
        }
    }
}

impl Serialize for StepGraphex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawGraphex::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepGraphex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGraphex::deserialize(d)?;
        StepGraphex::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl StepGraphex {
    /// Builds and validates an unsigned graphex with no isolated mass.
    pub fn new(masses: Vec<f64>, graphon: Vec<Vec<f64>>, star: Vec<f64>, dust: f64) -> Result<Self> {
        StepGraphex::try_from(RawGraphex {
            masses,
            graphon,
            star,
            dust,
            isolated_mass: IsolatedMass::Finite(0.0),
            signed: false,
        })
    }

    /// Builds and validates a signed graphex.
    pub fn new_signed(masses: Vec<f64>, graphon: Vec<Vec<f64>>, star: Vec<f64>, dust: f64) -> Result<Self> {
        StepGraphex::try_from(RawGraphex {
            masses,
            graphon,
            star,
            dust,
            isolated_mass: IsolatedMass::Finite(0.0),
            signed: true,
        })
    }

    /// Pure graphon part (zero star, zero dust).
    pub fn graphon_only(masses: Vec<f64>, graphon: Vec<Vec<f64>>) -> Result<Self> {
        let m = masses.len();
        StepGraphex::new(masses, graphon, vec![0.0; m], 0.0)
    }

    /// The zero graphex on the empty step set.
    pub fn zero() -> Self {
        StepGraphex {
            masses: Vec::new(),
            graphon: Vec::new(),
            star: Vec::new(),
            dust: 0.0,
            isolated_mass: IsolatedMass::Finite(0.0),
            signed: false,
        }
    }

    /// Internal constructor for results of operations that preserve validity.
    pub(crate) fn from_flat(
        masses: Vec<f64>,
        graphon: Vec<f64>,
        star: Vec<f64>,
        dust: f64,
        isolated_mass: IsolatedMass,
        signed: bool,
    ) -> Self {
        debug_assert_eq!(graphon.len(), masses.len() * masses.len());
        debug_assert_eq!(star.len(), masses.len());
        StepGraphex { masses, graphon, star, dust, isolated_mass, signed }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawGraphex = serde_json::from_str(text)?;
        StepGraphex::try_from(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite graphex serializes")
    }

    pub fn atoms(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn star(&self) -> &[f64] {
        &self.star
    }

    pub fn dust(&self) -> f64 {
        self.dust
    }

    pub fn isolated_mass(&self) -> IsolatedMass {
        self.isolated_mass
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    #[inline]
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.graphon[i * self.masses.len() + j]
    }

    /// Row-major graphon values.
    pub fn graphon_flat(&self) -> &[f64] {
        &self.graphon
    }

    pub fn graphon_rows(&self) -> Vec<Vec<f64>> {
        let m = self.masses.len();
        (0..m).map(|i| self.graphon[i * m..(i + 1) * m].to_vec()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// The graphon part as a two-variable step function.
    pub fn graphon_function(&self) -> StepFunction2D {
        StepFunction2D::from_flat(self.masses.clone(), self.graphon.clone())
    }

    pub fn marginal(&self) -> MarginalProfile {
        let m = self.atoms();
        let graphon_part: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| self.w(i, j) * self.masses[j]).sum())
            .collect();
        let values = graphon_part.iter().zip(&self.star).map(|(d, s)| d + s).collect();
        let infinity_value =
            self.star.iter().zip(&self.masses).map(|(s, r)| s * r).sum::<f64>() + 2.0 * self.dust;
        MarginalProfile { values, graphon_part, infinity_value }
    }

    /// Marginal as a one-variable step function on the atoms.
    pub fn marginal_function(&self) -> StepFunction1D {
        StepFunction1D::new(self.masses.clone(), self.marginal().values)
    }

    /// Marginal of `|W|` (absolute graphon and star values).
    pub fn abs_marginal(&self) -> Vec<f64> {
        let m = self.atoms();
        (0..m)
            .map(|i| (0..m).map(|j| self.w(i, j).abs() * self.masses[j]).sum::<f64>() + self.star[i].abs())
            .collect()
    }

    pub fn max_marginal(&self) -> f64 {
        self.abs_marginal().into_iter().fold(0.0, f64::max)
    }

    pub fn max_graphon(&self) -> f64 {
        self.graphon.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    fn graphon_integral(&self, abs: bool) -> f64 {
        let m = self.atoms();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let w = self.w(i, j);
                total += if abs { w.abs() } else { w } * self.masses[i] * self.masses[j];
            }
        }
        total
    }

    /// `||W||_1 = int |W| + 2 int |S| + 2|I|`.
    pub fn l1_norm(&self) -> f64 {
        let star: f64 = self.star.iter().zip(&self.masses).map(|(s, r)| s.abs() * r).sum();
        self.graphon_integral(true) + 2.0 * star + 2.0 * self.dust.abs()
    }

    /// Edge density `rho = int W + 2 int S + 2I`.
    pub fn edge_density(&self) -> f64 {
        let star: f64 = self.star.iter().zip(&self.masses).map(|(s, r)| s * r).sum();
        self.graphon_integral(false) + 2.0 * star + 2.0 * self.dust
    }

    /// `||D||_2^2` over the atoms (the point at infinity excluded).
    pub fn marginal_l2_squared(&self) -> f64 {
        self.marginal().values.iter().zip(&self.masses).map(|(d, r)| d * d * r).sum()
    }

    /// `||W||_2^2` of the graphon part.
    pub fn graphon_l2_squared(&self) -> f64 {
        let m = self.atoms();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                total += self.w(i, j).powi(2) * self.masses[i] * self.masses[j];
            }
        }
        total
    }

    /// Keeps the listed atoms (in the given order) and drops the rest, including their mass.
    pub fn restrict(&self, atoms: &[usize]) -> Result<StepGraphex> {
        if atoms.is_empty() {
            return Err(domain("restriction to an empty atom set"));
        }
        if let Some(&bad) = atoms.iter().find(|&&a| a >= self.atoms()) {
            return Err(domain(format!("atom {bad} out of range")));
        }
        Ok(self.select(atoms))
    }

    /// Like `restrict`, but allows the empty selection.
    pub(crate) fn select(&self, atoms: &[usize]) -> StepGraphex {
        let masses = atoms.iter().map(|&a| self.masses[a]).collect();
        let star = atoms.iter().map(|&a| self.star[a]).collect();
        let mut graphon = Vec::with_capacity(atoms.len() * atoms.len());
        for &a in atoms {
            for &b in atoms {
                graphon.push(self.w(a, b));
            }
        }
        StepGraphex::from_flat(masses, graphon, star, self.dust, self.isolated_mass, self.signed)
    }

    /// Atoms `atoms` with their masses replaced by `masses`.
    pub(crate) fn select_with_masses(&self, atoms: &[usize], masses: &[f64]) -> StepGraphex {
        let mut out = self.select(atoms);
        out.masses.copy_from_slice(masses);
        out
    }

    /// Restriction to `{D <= max_degree}` plus the mass removed.
    pub fn truncate_by_degree(&self, max_degree: f64) -> Result<(StepGraphex, f64)> {
        if !(max_degree > 0.0) {
            return Err(domain(format!("degree bound must be positive, got {max_degree}")));
        }
        let marginal = self.abs_marginal();
        let keep: Vec<usize> = (0..self.atoms()).filter(|&i| marginal[i] <= max_degree).collect();
        let removed: f64 = (0..self.atoms())
            .filter(|&i| marginal[i] > max_degree)
            .fold(0.0, |acc, i| acc + self.masses[i]);
        Ok((self.select(&keep), removed))
    }

    /// Multiplies every atom mass by `c`.
    pub fn dilate(&self, c: f64) -> Result<StepGraphex> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(domain(format!("dilation factor must be positive, got {c}")));
        }
        let mut out = self.clone();
        out.masses.iter_mut().for_each(|m| *m *= c);
        out.isolated_mass = match self.isolated_mass {
            IsolatedMass::Finite(x) => IsolatedMass::Finite(x * c),
            IsolatedMass::Infinite => IsolatedMass::Infinite,
        };
        Ok(out)
    }

    /// Multiplies atom `i`'s mass by `factors[i]` in `[0,1]`; atoms with factor 0 are dropped.
    pub fn reweight(&self, factors: &[f64]) -> Result<StepGraphex> {
        if factors.len() != self.atoms() {
            return Err(domain("one factor per atom required"));
        }
        if factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(domain("reweighting factors must lie in [0,1]"));
        }
        let keep: Vec<usize> = (0..self.atoms()).filter(|&i| factors[i] > 0.0).collect();
        let mut out = self.select(&keep);
        for (k, &i) in keep.iter().enumerate() {
            out.masses[k] *= factors[i];
        }
        Ok(out)
    }

    pub fn trivially_extend(&self, extra_mass: f64) -> Result<StepGraphex> {
        if !(extra_mass >= 0.0) {
            return Err(domain(format!("extension mass must be nonnegative, got {extra_mass}")));
        }
        let mut out = self.clone();
        out.isolated_mass = if extra_mass.is_infinite() {
            IsolatedMass::Infinite
        } else {
            self.isolated_mass.plus(extra_mass)
        };
        Ok(out)
    }

    /// Replaces atom `i` by `k` equal-mass copies with identical rows.
    pub fn split_atom(&self, i: usize, k: usize) -> Result<StepGraphex> {
        if k == 0 {
            return Err(domain("split count must be at least 1"));
        }
        if i >= self.atoms() {
            return Err(domain(format!("atom {i} out of range")));
        }
        let piece = self.masses[i] / k as f64;
        self.split_atom_masses(i, &vec![piece; k])
    }

    /// Replaces atom `i` by copies with the given masses; the copies occupy
    /// positions `i..i+pieces.len()`.
    pub fn split_atom_masses(&self, i: usize, pieces: &[f64]) -> Result<StepGraphex> {
        if i >= self.atoms() {
            return Err(domain(format!("atom {i} out of range")));
        }
        if pieces.is_empty() || pieces.iter().any(|&p| !(p > 0.0)) {
            return Err(domain("split pieces must be positive"));
        }
        let sum: f64 = pieces.iter().sum();
        if (sum - self.masses[i]).abs() > 1e-12 * self.masses[i].max(1.0) {
            return Err(domain(format!("split pieces sum to {sum}, atom mass is {}", self.masses[i])));
        }
        let mut origin = Vec::with_capacity(self.atoms() + pieces.len() - 1);
        let mut masses = Vec::with_capacity(origin.capacity());
        for a in 0..self.atoms() {
            if a == i {
                for &p in pieces {
                    origin.push(a);
                    masses.push(p);
                }
            } else {
                origin.push(a);
                masses.push(self.masses[a]);
            }
        }
        Ok(self.pullback(&origin, masses))
    }

    /// The graphex on new atoms where new atom `k` copies old atom `origin[k]`
    /// and carries mass `masses[k]`.
    pub(crate) fn pullback(&self, origin: &[usize], masses: Vec<f64>) -> StepGraphex {
        let n = origin.len();
        let mut graphon = Vec::with_capacity(n * n);
        for &a in origin {
            for &b in origin {
                graphon.push(self.w(a, b));
            }
        }
        let star = origin.iter().map(|&a| self.star[a]).collect();
        StepGraphex::from_flat(masses, graphon, star, self.dust, self.isolated_mass, self.signed)
    }

    /// Same atoms, graphon replaced; used by operations that know the result stays valid.
    pub(crate) fn with_parts(&self, graphon: Vec<f64>, star: Vec<f64>, dust: f64) -> StepGraphex {
        StepGraphex::from_flat(self.masses.clone(), graphon, star, dust, self.isolated_mass, self.signed)
    }

    /// Appends atoms; the new atoms have zero graphon rows and zero star.
    pub(crate) fn append_zero_atoms(&self, masses: &[f64]) -> StepGraphex {
        let m = self.atoms();
        let n = m + masses.len();
        let mut graphon = vec![0.0; n * n];
        for i in 0..m {
            for j in 0..m {
                graphon[i * n + j] = self.w(i, j);
            }
        }
        let mut all = self.masses.clone();
        all.extend_from_slice(masses);
        let mut star = self.star.clone();
        star.resize(n, 0.0);
        StepGraphex::from_flat(all, graphon, star, self.dust, self.isolated_mass, self.signed)
    }

    pub(crate) fn with_isolated_mass(&self, isolated_mass: IsolatedMass) -> StepGraphex {
        let mut out = self.clone();
        out.isolated_mass = isolated_mass;
        out
    }

    /// Difference `self - other` as a signed graphex on the common space.
    pub fn difference(&self, other: &StepGraphex) -> Result<StepGraphex> {
        check_same_space(self, other)?;
        let graphon = self.graphon.iter().zip(&other.graphon).map(|(a, b)| a - b).collect();
        let star = self.star.iter().zip(&other.star).map(|(a, b)| a - b).collect();
        Ok(StepGraphex::from_flat(
            self.masses.clone(),
            graphon,
            star,
            self.dust - other.dust,
            self.isolated_mass,
            true,
        ))
    }
}

/// Both graphexes must live on identical atom masses.
pub fn check_same_space(a: &StepGraphex, b: &StepGraphex) -> Result<()> {
    if a.masses() != b.masses() {
        return Err(GraphexError::Mismatch(format!(
            "atom masses differ ({} vs {} atoms)",
            a.atoms(),
            b.atoms()
        )));
    }
    Ok(())
}

/// Relative closeness used by algebraic identity checks.
pub fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
