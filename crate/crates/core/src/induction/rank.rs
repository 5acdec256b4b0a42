use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ClusterModel, EmbeddingSpace, InductionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedWord {
    pub word: String,
    pub score: f64,
}

/// Candidate words sorted by descending relevance, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLexicon {
    pub platform: String,
    pub year: i32,
    pub entries: Vec<RankedWord>,
    pub requested: usize,
    /// Set when fewer than `requested` words exist.
    pub short: bool,
}

impl RankedLexicon {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }

    /// 1-based rank of `word`.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.word == word).map(|i| i + 1)
    }

    /// CSV with header `word,score,rank`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["word", "score", "rank"])?;
        for (i, e) in self.entries.iter().enumerate() {
            writer.write_record([e.word.clone(), format!("{:.9}", e.score), (i + 1).to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn cosine(a: &[f32], b: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let x = x as f64;
        d += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (d / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Scores each vocabulary word by its maximum cosine similarity to any
/// cluster centroid, using the word's vector for `year`.
pub fn rank_candidates(space: &EmbeddingSpace, clusters: &ClusterModel, year: i32, top_n: usize) -> Result<RankedLexicon, InductionError> {
    let t = space.year_index(year).ok_or(InductionError::UnknownYear(year))?;
    let mut entries: Vec<RankedWord> = space
        .vocabulary
        .iter()
        .enumerate()
        .map(|(w, word)| {
            let v = space.word_vector(t, w);
            let score = clusters
                .centroids
                .iter()
                .map(|c| cosine(v, c))
                .fold(f64::NEG_INFINITY, f64::max);
            RankedWord { word: word.clone(), score }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.word.cmp(&b.word))
    });
    let short = top_n > entries.len();
    if short {
        log::warn!("requested top {top_n} but vocabulary has only {} words", entries.len());
    }
    entries.truncate(top_n);
    Ok(RankedLexicon {
        platform: space.platform.clone(),
        year,
        entries,
        requested: top_n,
        short,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(words: usize, dim: usize, seed: u64) -> (EmbeddingSpace, ClusterModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
        let wv: Vec<f32> = (0..words * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let uv: Vec<f32> = (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let space = EmbeddingSpace::new("p".into(), dim, vec!["a".into(), "b".into()], vocab, vec![2020], uv, wv).unwrap();
        let centroids: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let clusters = ClusterModel {
            users: vec!["a".into(), "b".into()],
            centroids,
            assignment: vec![0, 1],
            inertia: 0.0,
        };
        (space, clusters)
    }

    #[test]
    fn word_on_centroid_ranks_first() {
        let (space, mut clusters) = toy(10, 4, 1);
        clusters.centroids[1] = space.word_vector(0, 7).iter().map(|&x| x as f64).collect();
        let lex = rank_candidates(&space, &clusters, 2020, 10).unwrap();
        assert_eq!(lex.entries[0].word, "w7");
        assert!((lex.entries[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_matches_exhaustive_cosine_oracle() {
        for seed in 0..20 {
            let (space, clusters) = toy(10, 3, seed);
            let lex = rank_candidates(&space, &clusters, 2020, 10).unwrap();
            // oracle: all word–centroid cosines by hand, then sort
            let mut oracle: Vec<(String, f64)> = Vec::new();
            for w in 0..10 {
                let v = space.word_vector(0, w);
                let mut best = f64::NEG_INFINITY;
                for c in &clusters.centroids {
                    let d: f64 = (0..3).map(|i| v[i] as f64 * c[i]).sum();
                    let nv = (0..3).map(|i| (v[i] as f64).powi(2)).sum::<f64>().sqrt();
                    let nc = (0..3).map(|i| c[i].powi(2)).sum::<f64>().sqrt();
                    best = best.max(d / (nv * nc));
                }
                oracle.push((format!("w{w}"), best));
            }
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let got: Vec<&str> = lex.words().collect();
            let want: Vec<&str> = oracle.iter().map(|(w, _)| w.as_str()).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ties_are_lexicographic_and_scores_bounded() {
        let vocab: Vec<String> = ["delta", "alpha", "charlie", "bravo"].iter().map(|s| s.to_string()).collect();
        let mut vocab_sorted = vocab.clone();
        vocab_sorted.sort();
        let wv = vec![1.0f32, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 0.0];
        let space = EmbeddingSpace::new("p".into(), 2, vec!["u".into()], vocab_sorted, vec![2020], vec![1.0, 0.0], wv).unwrap();
        let clusters = ClusterModel {
            users: vec!["u".into()],
            centroids: vec![vec![1.0, 0.0]],
            assignment: vec![0],
            inertia: 0.0,
        };
        let lex = rank_candidates(&space, &clusters, 2020, 4).unwrap();
        let words: Vec<&str> = lex.words().collect();
        assert_eq!(words, vec!["alpha", "bravo", "delta", "charlie"]);
        for pair in lex.entries.windows(2) {
            assert!(pair[0].score > pair[1].score || (pair[0].score == pair[1].score && pair[0].word < pair[1].word));
        }
        assert!(lex.entries.iter().all(|e| (-1.0..=1.0).contains(&e.score)));
    }

    #[test]
    fn top_n_truncates_or_flags_shortfall() {
        let (space, clusters) = toy(10, 4, 2);
        let lex = rank_candidates(&space, &clusters, 2020, 3).unwrap();
        assert_eq!(lex.entries.len(), 3);
        assert!(!lex.short);
        let lex = rank_candidates(&space, &clusters, 2020, 3050).unwrap();
        assert_eq!(lex.entries.len(), 10);
        assert!(lex.short);
        assert!(matches!(rank_candidates(&space, &clusters, 1999, 3), Err(InductionError::UnknownYear(1999))));
    }

    #[test]
    fn csv_has_rank_column() {
        let (space, clusters) = toy(3, 2, 3);
        let lex = rank_candidates(&space, &clusters, 2020, 3).unwrap();
        let mut buf = Vec::new();
        lex.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "word,score,rank");
        assert!(lines[3].ends_with(",3"));
    }
}
