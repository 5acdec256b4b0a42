use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Post};
use crate::digest::derive_seed;

pub const MIN_EXAMPLE_CHARS: usize = 10;
pub const MAX_EXAMPLE_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSelection {
    pub posts: Vec<String>,
    /// Fewer eligible posts existed than were requested.
    pub shortage: bool,
}

/// Posting lists from token to the posts that contain it, built once per
/// platform so suites over thousands of words scan the corpus only once.
#[derive(Debug, Clone)]
pub struct PostIndex<'a> {
    posts: Vec<&'a Post>,
    postings: HashMap<String, Vec<u32>>,
    frequency: HashMap<String, u64>,
    min_chars: usize,
    max_chars: usize,
}

impl<'a> PostIndex<'a> {
    pub fn new(posts: impl IntoIterator<Item = &'a Post>, min_chars: usize, max_chars: usize) -> Self {
        let posts: Vec<&Post> = posts.into_iter().collect();
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut frequency: HashMap<String, u64> = HashMap::new();
        for (i, p) in posts.iter().enumerate() {
            let mut tokens = tokenize(&p.text);
            for t in &tokens {
                *frequency.entry(t.clone()).or_default() += 1;
            }
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                postings.entry(t).or_default().push(i as u32);
            }
        }
        PostIndex {
            posts,
            postings,
            frequency,
            min_chars,
            max_chars,
        }
    }

    pub fn for_corpus(corpus: &'a Corpus, min_chars: usize, max_chars: usize) -> Self {
        Self::new(corpus.iter(), min_chars, max_chars)
    }

    /// Token count of `word` over all indexed posts.
    pub fn frequency(&self, word: &str) -> u64 {
        self.frequency.get(word).copied().unwrap_or(0)
    }

    fn containing(&self, word: &str) -> impl Iterator<Item = &'a Post> + '_ {
        self.postings.get(word).into_iter().flatten().map(|&i| self.posts[i as usize])
    }

    fn in_bounds(&self, p: &Post) -> bool {
        let n = p.char_len();
        n >= self.min_chars && n <= self.max_chars
    }

    /// Posts containing `word` as a whole token with a length in bounds,
    /// in corpus order.
    pub fn eligible(&self, word: &str) -> Vec<&'a Post> {
        self.containing(word).filter(|p| self.in_bounds(p)).collect()
    }

    /// Up to `n` eligible posts sampled without replacement. The draw
    /// depends only on `seed` and `word`.
    pub fn select(&self, word: &str, n: usize, seed: u64) -> ExampleSelection {
        let eligible = self.eligible(word);
        if eligible.len() <= n {
            return ExampleSelection {
                shortage: eligible.len() < n,
                posts: eligible.into_iter().map(|p| p.text.clone()).collect(),
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, word));
        let picked = sample(&mut rng, eligible.len(), n);
        ExampleSelection {
            posts: picked.iter().map(|i| eligible[i].text.clone()).collect(),
            shortage: false,
        }
    }

    /// Shortest eligible post, earliest on ties. Falls back to the shortest
    /// post of any length when none is within bounds.
    pub fn carrier(&self, word: &str) -> Option<&'a Post> {
        let shortest = |it: Vec<&'a Post>| it.into_iter().enumerate().min_by_key(|(i, p)| (p.char_len(), *i)).map(|(_, p)| p);
        shortest(self.eligible(word)).or_else(|| shortest(self.containing(word).collect()))
    }
}

/// Samples `n` example posts for `word` from `corpus`.
pub fn select_example_posts(corpus: &Corpus, word: &str, n: usize, min_chars: usize, max_chars: usize, seed: u64) -> ExampleSelection {
    PostIndex::for_corpus(corpus, min_chars, max_chars).select(&word.to_lowercase(), n, seed)
}
