//! Measures the desk-scale similarity and reconstruction runs used to set
//! the thresholds checked by the acceptance suite.
//!
//!     cargo run --release --example pilot

use std::time::Instant;

use tenbed::synthetic::{reconstruction_run, similarity_run, ReconstructionSetup, SimilaritySetup};
use tenbed::MethodKind;

fn main() -> tenbed::Result<()> {
    let setup = SimilaritySetup::default();
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let t = Instant::now();
        let m = similarity_run(MethodKind::MorphTe, &setup, seed)?;
        let r = similarity_run(MethodKind::Word2ketRshare, &setup, seed)?;
        println!(
            "similarity seed={seed} morphte={m:.4} rshare={r:.4} gap={:.4} ({:.1}s)",
            m - r,
            t.elapsed().as_secs_f64()
        );
        gaps.push(m - r);
    }
    gaps.sort_by(f64::total_cmp);
    println!("similarity median gap {:.4}", gaps[2]);

    let fixture = include_str!("../tests/fixtures/synthetic_lexicon.tsv");
    let segs = tenbed::morphology::parse_segmentations(fixture)?;
    for seed in 0..3 {
        let t = Instant::now();
        let (initial, hist) = reconstruction_run(&segs, &ReconstructionSetup::default(), seed)?;
        let last = *hist.last().expect("epochs >= 1");
        let first_below = hist.iter().position(|&l| l < 0.1 * initial);
        println!(
            "reconstruction seed={seed} initial={initial:.6} final={last:.6} ratio={:.4} first_epoch_below_0.1={first_below:?} ({:.1}s)",
            last / initial,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
