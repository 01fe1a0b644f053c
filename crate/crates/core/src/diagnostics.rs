//! Tightness, uniform integrability and tail regularity functionals, and the
//! first two moments of the edge count of `G_T`.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::graphex::StepGraphex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TightnessRow {
    pub degree_bound: f64,
    /// `mu({D > degree_bound})`.
    pub excess_mass: f64,
    /// `||g restricted to {D <= degree_bound}||_1`.
    pub truncated_l1: f64,
}

fn unsigned(g: &StepGraphex) -> Result<()> {
    if g.is_signed() {
        return Err(precondition("diagnostics need an unsigned graphex"));
    }
    Ok(())
}

pub fn tightness_profile(g: &StepGraphex, grid: &[f64]) -> Result<Vec<TightnessRow>> {
    unsigned(g)?;
    grid.iter()
        .map(|&d| {
            let (h, removed) = g.truncate_by_degree(d)?;
            Ok(TightnessRow { degree_bound: d, excess_mass: removed, truncated_l1: h.l1_norm() })
        })
        .collect()
}

/// `||D 1_{D > degree_bound}||_1`.
pub fn uniform_integrability_metric(g: &StepGraphex, degree_bound: f64) -> Result<f64> {
    unsigned(g)?;
    Ok(g.marginal()
        .values
        .iter()
        .zip(g.masses())
        .filter(|(d, _)| **d > degree_bound)
        .fold(0.0, |acc, (d, r)| acc + d * r))
}

/// `||W||_1 - ||W restricted to {D > delta}||_1` for a pure graphon.
pub fn tail_regularity_gap(g: &StepGraphex, delta: f64) -> Result<f64> {
    unsigned(g)?;
    if g.dust() != 0.0 || g.star().iter().any(|&s| s != 0.0) {
        return Err(precondition("tail regularity gap is defined for pure graphons"));
    }
    let d = g.marginal().values;
    let keep: Vec<usize> = (0..g.atoms()).filter(|&i| d[i] > delta).collect();
    Ok(g.l1_norm() - g.select(&keep).l1_norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean `T^2 ||W||_1 / 2` and variance `T^2 ||W||_1 / 2 + T^3 ||D||_2^2` of
/// the edge count, with `||D||_2` taken over the atoms.
pub fn edge_moment_prediction(g: &StepGraphex, t: f64) -> Result<EdgeMoments> {
    unsigned(g)?;
    let mean = t * t * g.l1_norm() / 2.0;
    Ok(EdgeMoments { mean, variance: mean + t.powi(3) * g.marginal_l2_squared() })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub l1_norm: f64,
    pub edge_density: f64,
    pub max_marginal: f64,
    pub infinity_marginal: f64,
    pub tightness: Vec<TightnessRow>,
    /// `(degree_bound, ||D 1_{D > degree_bound}||_1)`.
    pub uniform_integrability: Vec<(f64, f64)>,
    /// Present for pure graphons: `(delta, gap)`.
    pub tail_regularity: Option<Vec<(f64, f64)>>,
    pub edge_moments: Option<(f64, EdgeMoments)>,
}

/// Default grid: the distinct positive marginal values.
pub fn default_grid(g: &StepGraphex) -> Vec<f64> {
    let mut d: Vec<f64> = g.marginal().values.into_iter().filter(|&x| x > 0.0).collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

pub fn diagnose(g: &StepGraphex, grid: &[f64], t: Option<f64>) -> Result<DiagnosticsReport> {
    unsigned(g)?;
    let pure = g.dust() == 0.0 && g.star().iter().all(|&s| s == 0.0);
    let tail = if pure {
        Some(grid.iter().map(|&d| Ok((d, tail_regularity_gap(g, d)?))).collect::<Result<_>>()?)
    } else {
        None
    };
    Ok(DiagnosticsReport {
        l1_norm: g.l1_norm(),
        edge_density: g.edge_density(),
        max_marginal: g.max_marginal(),
        infinity_marginal: g.marginal().infinity_value,
        tightness: tightness_profile(g, grid)?,
        uniform_integrability: grid
            .iter()
            .map(|&d| Ok((d, uniform_integrability_metric(g, d)?)))
            .collect::<Result<_>>()?,
        tail_regularity: tail,
        edge_moments: t.map(|t| edge_moment_prediction(g, t).map(|m| (t, m))).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn tightness_examples() {
        let c = fixtures::constant(0.5, 1.0);
        assert_eq!(tightness_profile(&c, &[1.0]).unwrap()[0], TightnessRow {
            degree_bound: 1.0,
            excess_mass: 0.0,
            truncated_l1: 0.5
        });
        let ui = fixtures::ui_family(4.0);
        let r = tightness_profile(&ui, &[2.0]).unwrap()[0];
        assert_eq!((r.excess_mass, r.truncated_l1), (0.25, 0.0));
        let empty = StepGraphex::zero();
        assert!(tightness_profile(&empty, &[0.5, 3.0]).unwrap().iter().all(|r| r.excess_mass == 0.0 && r.truncated_l1 == 0.0));
    }

    #[test]
    fn integrability_examples() {
        let c = fixtures::constant(0.5, 1.0);
        assert_eq!(uniform_integrability_metric(&c, 0.5).unwrap(), 0.0);
        assert_eq!(uniform_integrability_metric(&c, 0.4).unwrap(), 0.5);
        for n in [4.0, 8.0, 16.0] {
            assert_eq!(uniform_integrability_metric(&fixtures::ui_family(n), 2.0).unwrap(), 1.0);
        }
        // At n = 2 the large-degree atom sits exactly at D = 2 and the strict inequality excludes it.
        assert_eq!(uniform_integrability_metric(&fixtures::ui_family(2.0), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn tail_examples() {
        let ex1 = fixtures::example_ex1(0.25);
        assert_eq!(tail_regularity_gap(&ex1, 0.1).unwrap(), 0.0);
        assert!((tail_regularity_gap(&ex1, 0.5).unwrap() - 0.375).abs() < 1e-15);
        let c = fixtures::constant(0.3, 2.0);
        assert!((tail_regularity_gap(&c, 0.6).unwrap() - 1.2).abs() < 1e-15);
        assert!(tail_regularity_gap(&fixtures::star_only(1.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn edge_moment_examples() {
        let m = edge_moment_prediction(&fixtures::constant(0.5, 1.0), 10.0).unwrap();
        assert_eq!((m.mean, m.variance), (25.0, 275.0));
        let m = edge_moment_prediction(&fixtures::dust_only(0.5), 10.0).unwrap();
        assert_eq!((m.mean, m.variance), (50.0, 50.0));
        let m = edge_moment_prediction(&StepGraphex::zero(), 10.0).unwrap();
        assert_eq!((m.mean, m.variance), (0.0, 0.0));
    }

    #[test]
    fn report_shape() {
        let g = fixtures::example_ex1(0.25);
        let grid = default_grid(&g);
        let r = diagnose(&g, &grid, Some(5.0)).unwrap();
        assert_eq!(r.tightness.len(), 2);
        assert!(r.tail_regularity.is_some());
        assert!(diagnose(&fixtures::star_only(1.0, 1.0), &[1.0], None).unwrap().tail_regularity.is_none());
    }

    fn arb() -> impl Strategy<Value = StepGraphex> {
        (1usize..6).prop_flat_map(|m| {
            (
                prop::collection::vec(0.05f64..3.0, m),
                prop::collection::vec(0.0f64..1.0, m * m),
                prop::collection::vec(0.0f64..1.0, m),
                0.0f64..0.5,
            )
                .prop_map(move |(masses, w, star, dust)| {
                    let rows = (0..m).map(|i| (0..m).map(|j| w[i.min(j) * m + i.max(j)]).collect()).collect();
                    StepGraphex::new(masses, rows, star, dust).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn truncation_loss_bounded_by_integrability(g in arb(), d in 0.01f64..4.0) {
            let (h, _) = g.truncate_by_degree(d).unwrap();
            let loss = g.l1_norm() - h.l1_norm();
            prop_assert!(loss <= 2.0 * uniform_integrability_metric(&g, d).unwrap() + 1e-12);
        }

        #[test]
        fn tail_gap_monotone(g in arb(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let g = StepGraphex::graphon_only(g.masses().to_vec(), g.graphon_rows()).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(tail_regularity_gap(&g, lo).unwrap() <= tail_regularity_gap(&g, hi).unwrap() + 1e-12);
        }
    }
}
