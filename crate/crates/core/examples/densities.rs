//! Homomorphism densities and the injective-count moment identity.

use graphex::densities::{hom_density, inj_count, mixed_density, PatternGraph, PRESETS};
use graphex::fixtures;
use graphex::sampling::sample_trials;
use graphex::sampling::TrialOptions;
use graphex::StepGraphex;

fn main() -> graphex::Result<()> {
    let g = fixtures::example_ex1(0.25);
    for name in PRESETS {
        let f = PatternGraph::preset(name).unwrap();
        println!("t({name}, ex1) = {:.6}", hom_density(&f, &g)?);
    }

    let path = PatternGraph::preset("path2").unwrap();
    let c = StepGraphex::graphon_only(g.masses().to_vec(), vec![vec![0.5; 2]; 2])?;
    println!("mixed t(path2; ex1 on one edge, const on the other) = {:.6}", mixed_density(&path, &[&g, &c])?);

    let t: f64 = 6.0;
    let samples = sample_trials(&g, t, 2000, 3, &TrialOptions::default())?;
    let mean = samples.iter().map(|s| inj_count(&path, &s.to_plain()).unwrap() as f64).sum::<f64>() / 2000.0;
    println!("E inj(path2, G_6): sampled {mean:.2}, predicted {:.2}", t.powi(3) * hom_density(&path, &g)?);
    Ok(())
}
