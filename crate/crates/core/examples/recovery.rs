//! Induces a lexicon from the default synthetic corpus and reports where
//! the planted in-group words land in the ranking.
//!
//! cargo run --release --example recovery [seed]

use std::time::Instant;

use cryptolect::induction::induce;
use cryptolect::synthetic::{generate, induction_config, SyntheticSpec};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    let s = generate(&spec);
    let started = Instant::now();
    let run = induce(&s.corpus, spec.start_year, spec.end_year, &induction_config(seed), 3050, None).expect("induction failed");
    println!(
        "{} posts, vocabulary {}, {} epochs (best {}), {:.1?}",
        s.corpus.len(),
        run.training.vocabulary.len(),
        run.log.epochs.len(),
        run.log.best_epoch,
        started.elapsed()
    );
    let mut ranks: Vec<usize> = s.injected.iter().filter_map(|w| run.lexicon.rank_of(w)).collect();
    ranks.sort_unstable();
    let mean = ranks.iter().sum::<usize>() as f64 / ranks.len().max(1) as f64;
    println!("found {}/{} planted words, mean rank {mean:.1} of {}", ranks.len(), s.injected.len(), run.lexicon.entries.len());
    println!("ranks: {ranks:?}");
}
