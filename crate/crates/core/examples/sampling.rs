//! Graphex process samples: plain, with loops, and via a weighted graph.

use graphex::sampling::{realize, sample_process, sample_weighted, sample_with_loops, subsample, EdgeKind, SampledGraph};
use graphex::StepGraphex;

fn main() -> graphex::Result<()> {
    let g = StepGraphex::new(vec![1.0, 2.0], vec![vec![0.6, 0.1], vec![0.1, 0.3]], vec![0.0, 0.5], 0.2)?;
    let t = 8.0;

    let s = sample_process(&g, t, 42, false)?;
    println!(
        "G_T: {} vertices, {} edges ({} graphon, {} star, {} dust)",
        s.vertices.len(),
        s.edge_count(),
        s.count_kind(EdgeKind::Graphon),
        s.count_kind(EdgeKind::Star),
        s.count_kind(EdgeKind::Dust)
    );
    let text = s.to_text();
    assert_eq!(SampledGraph::parse(&text)?, s);

    let loops = sample_with_loops(&g, t, 42, false)?;
    println!("with loops: {} edges", loops.edge_count());

    let h = sample_weighted(&g, t, 7)?;
    let realized = realize(&h, 8)?;
    println!("weighted graph realized: {} edges", realized.edge_count());

    let thinned = subsample(&s.to_plain(), 0.5, 9)?;
    println!("p=0.5 subsample: {} edges", thinned.edges.len());
    Ok(())
}
