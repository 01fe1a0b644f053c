//! Canonical forms and equivalence testing.

use graphex::canonical::{canonicalize, equivalent, pull_back, DEFAULT_TOL};
use graphex::fixtures;

fn main() -> graphex::Result<()> {
    let g = fixtures::example_ex1(0.25);
    let split = g.split_atom(0, 3)?.split_atom(3, 2)?;
    let form = canonicalize(&split, DEFAULT_TOL)?;
    println!("{} atoms canonicalize to {}: map {:?}", split.atoms(), form.graphex.atoms(), form.map);
    assert_eq!(pull_back(&form, split.masses())?, split);

    let e = equivalent(&g, &split, DEFAULT_TOL)?;
    println!("ex1 vs its split: equivalent={} isomorphism={:?}", e.equivalent, e.isomorphism);

    let e = equivalent(&g, &fixtures::example_ex1_partner(0.25), DEFAULT_TOL)?;
    println!("ex1 vs partner: equivalent={}", e.equivalent);
    for m in &e.mismatches {
        println!("  {m:?}");
    }
    Ok(())
}
