//! Coupled samples of two graphexes on one space, and graphon approximation
//! of a graphex with star and dust parts.

use graphex::estimation::{coupled_sample_distance, graphon_approximation};
use graphex::StepGraphex;

fn main() -> graphex::Result<()> {
    let g1 = StepGraphex::graphon_only(vec![1.0, 1.0], vec![vec![0.5, 0.2], vec![0.2, 0.5]])?;
    let g2 = StepGraphex::graphon_only(vec![1.0, 1.0], vec![vec![0.45, 0.25], vec![0.25, 0.5]])?;
    for t in [5.0, 10.0, 20.0] {
        let r = coupled_sample_distance(&g1, &g2, t, 11, 64)?;
        println!(
            "T={t}: source d22 {:.4}, matched {:.4}, searched {:.4}, bound {:.4}",
            r.source_distance, r.matched.d22, r.estimate, r.bound
        );
    }

    let g = StepGraphex::new(vec![1.0], vec![vec![0.5]], vec![0.4], 0.1)?;
    let approx = graphon_approximation(&g, 0.1)?;
    println!(
        "graphon approximation: absorber mass {:.3}, d22 certificate {:.4}",
        approx.absorber_mass, approx.certificate
    );
    Ok(())
}
