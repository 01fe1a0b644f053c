//! Small named graphexes used throughout the tests, examples and the CLI.

use crate::graphex::StepGraphex;

/// Constant `c` on a single atom of mass `mass`.
pub fn constant(c: f64, mass: f64) -> StepGraphex {
    StepGraphex::graphon_only(vec![mass], vec![vec![c]]).expect("c in [0,1], mass > 0")
}

/// Complete bipartite graphon between parts of mass `p` and `1 - p`.
pub fn example_ex1(p: f64) -> StepGraphex {
    StepGraphex::graphon_only(vec![p, 1.0 - p], vec![vec![0.0, 1.0], vec![1.0, 0.0]])
        .expect("p in (0,1)")
}

/// The constant `sqrt(p(1-p))` on mass 1; same kernel norm as [`example_ex1`].
pub fn example_ex1_partner(p: f64) -> StepGraphex {
    constant((p * (1.0 - p)).sqrt(), 1.0)
}

/// Star intensity `s` on one atom of mass `mass`, no graphon part.
pub fn star_only(s: f64, mass: f64) -> StepGraphex {
    StepGraphex::new(vec![mass], vec![vec![0.0]], vec![s], 0.0).expect("s >= 0")
}

/// Pure dust with density `dust` and no atoms.
pub fn dust_only(dust: f64) -> StepGraphex {
    StepGraphex::new(vec![], vec![], vec![], dust).expect("dust >= 0")
}

/// Value 1 between a set of mass `1/n` and a set of mass `n`: `||W_n||_1 = 2`
/// for every `n`, yet the family tends to zero in the weak kernel metric.
pub fn ui_family(n: f64) -> StepGraphex {
    StepGraphex::graphon_only(vec![1.0 / n, n], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).expect("n > 0")
}

/// Two loop models with equal loop-count laws: the constant 1/2 with loop
/// value 1/2 on one atom, against the constant 1/2 on two half atoms whose loop
/// values are 0 and 1. Each entry pairs a graphex with its loop diagonal.
pub fn loop_pair() -> ((StepGraphex, Vec<f64>), (StepGraphex, Vec<f64>)) {
    let a = constant(0.5, 1.0);
    let b = StepGraphex::graphon_only(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    ((a, vec![0.5]), (b, vec![0.0, 1.0]))
}

/// Looks up a fixture by CLI name.
pub fn by_name(name: &str, param: Option<f64>) -> Option<StepGraphex> {
    Some(match name {
        "constant" => constant(param.unwrap_or(0.5), 1.0),
        "example-ex1" => example_ex1(param.unwrap_or(0.25)),
        "example-ex1-partner" => example_ex1_partner(param.unwrap_or(0.25)),
        "star-only" => star_only(param.unwrap_or(1.0), 1.0),
        "dust-only" => dust_only(param.unwrap_or(0.5)),
        "ui-family" => ui_family(param.unwrap_or(4.0)),
        _ => return None,
    })
}

pub const NAMES: &[&str] = &[
    "constant",
    "example-ex1",
    "example-ex1-partner",
    "star-only",
    "dust-only",
    "ui-family",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ui_family_norm_is_two() {
        for n in [2.0, 4.0, 8.0, 16.0] {
            assert_eq!(ui_family(n).l1_norm(), 2.0);
        }
    }

    #[test]
    fn every_name_resolves() {
        for name in NAMES {
            assert!(by_name(name, None).is_some(), "{name}");
        }
        assert!(by_name("nope", None).is_none());
    }

    #[test]
    fn partner_has_same_kernel_norm() {
        let p = 0.25;
        let a = crate::norms::kernel(&example_ex1(p).graphon_function());
        let b = crate::norms::kernel(&example_ex1_partner(p).graphon_function());
        assert!((a - b).abs() < 1e-12);
    }
}
