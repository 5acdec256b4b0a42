//! Seeded synthetic forum corpora with planted in-group vocabulary.
//!
//! Users belong to one of several communities. Every community mildly
//! prefers its own slice of a Zipf-distributed background vocabulary; one
//! community additionally uses a small set of injected in-group words that
//! the other communities almost never use.

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Post};
use crate::induction::InductionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub platform: String,
    pub seed: u64,
    pub start_year: i32,
    pub end_year: i32,
    pub communities: usize,
    pub users_per_community: usize,
    /// Users who post in a single year only (dropped by induction).
    pub transient_users: usize,
    pub background_words: usize,
    pub injected_words: usize,
    /// Community that uses the injected words.
    pub in_group: usize,
    pub posts_per_user_year: usize,
    pub min_words_per_post: usize,
    pub max_words_per_post: usize,
    pub zipf_exponent: f64,
    /// Probability that a token of an in-group post is an injected word.
    pub injected_rate: f64,
    /// Probability that an out-group token is an injected word.
    pub leak_rate: f64,
    /// Share of each community's tokens drawn from its own topical slice.
    pub topical_rate: f64,
    pub topical_words: usize,
    pub threads_per_year: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            platform: "incels".into(),
            seed: 42,
            start_year: 2018,
            end_year: 2020,
            communities: 5,
            users_per_community: 40,
            transient_users: 10,
            background_words: 3000,
            injected_words: 30,
            in_group: 0,
            posts_per_user_year: 15,
            min_words_per_post: 6,
            max_words_per_post: 24,
            zipf_exponent: 1.0,
            injected_rate: 0.08,
            leak_rate: 0.0005,
            topical_rate: 0.15,
            topical_words: 60,
            threads_per_year: 150,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Planted in-group words (the gold positives).
    pub injected: Vec<String>,
    pub background: Vec<String>,
    /// `(user_id, community)` for every user.
    pub communities: Vec<(String, usize)>,
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "cl", "dr", "gr", "pl", "st", "tr", "sk", "sn", "fl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ee"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "t", "m", "l", "x", "nd"];

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
    }
    w
}

fn unique_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>, syllables: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = rng.gen_range(syllables.clone());
        let w = pseudo_word(rng, s);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Training settings sized for the default synthetic corpus. The
/// production defaults (dim 100, lr 1e-5) need far more epochs than a
/// corpus this small warrants.
pub fn induction_config(seed: u64) -> InductionConfig {
    InductionConfig {
        dim: 32,
        learning_rate: 0.01,
        max_epochs: 200,
        early_stop_patience: 5,
        seed,
        ..InductionConfig::default()
    }
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let background = unique_words(&mut rng, spec.background_words, &mut taken, 1..=3);
    let injected = unique_words(&mut rng, spec.injected_words, &mut taken, 2..=3);

    let zipf: Vec<f64> = (1..=background.len()).map(|r| 1.0 / (r as f64).powf(spec.zipf_exponent)).collect();
    let background_dist = WeightedIndex::new(&zipf).expect("non-empty background");
    // topical slices are taken from the middle of the frequency range so
    // they are common enough to pass activity filters
    let topical_start = background.len() / 20;
    let topical = |c: usize, i: usize| topical_start + c * spec.topical_words + i;

    let mut communities = Vec::new();
    let mut posts = Vec::new();
    let years: Vec<i32> = (spec.start_year..=spec.end_year).collect();
    let mut next_id = 0usize;

    let mut make_post = |rng: &mut ChaCha8Rng, user: &str, community: usize, year: i32| {
        let n_words = rng.gen_range(spec.min_words_per_post..=spec.max_words_per_post);
        let words: Vec<&str> = (0..n_words)
            .map(|_| {
                let roll: f64 = rng.gen();
                let injected_p = if community == spec.in_group { spec.injected_rate } else { spec.leak_rate };
                if roll < injected_p && !injected.is_empty() {
                    injected[rng.gen_range(0..injected.len())].as_str()
                } else if roll < injected_p + spec.topical_rate && spec.topical_words > 0 {
                    let idx = topical(community, rng.gen_range(0..spec.topical_words));
                    background[idx.min(background.len() - 1)].as_str()
                } else {
                    background[background_dist.sample(rng)].as_str()
                }
            })
            .collect();
        let mut text = words.join(" ");
        if rng.gen_bool(0.3) {
            text.push_str(if rng.gen_bool(0.5) { "!!" } else { "?" });
        }
        let day = rng.gen_range(0..365);
        let ts = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(day * 86_400 + rng.gen_range(0..86_400));
        let post = Post {
            post_id: format!("{}-{}", spec.platform, next_id),
            thread_id: format!("{}-{}-{}", spec.platform, year, rng.gen_range(0..spec.threads_per_year)),
            user_id: user.to_string(),
            platform: spec.platform.clone(),
            subforum: format!("board{community}"),
            timestamp: ts,
            text,
        };
        next_id += 1;
        post
    };

    for c in 0..spec.communities {
        for i in 0..spec.users_per_community {
            let user = format!("{}_c{c}_u{i:03}", spec.platform);
            communities.push((user.clone(), c));
            for &year in &years {
                for _ in 0..spec.posts_per_user_year {
                    posts.push(make_post(&mut rng, &user, c, year));
                }
            }
        }
    }
    for i in 0..spec.transient_users {
        let c = i % spec.communities.max(1);
        let user = format!("{}_t{i:03}", spec.platform);
        communities.push((user.clone(), c));
        let year = years[i % years.len()];
        for _ in 0..spec.posts_per_user_year {
            posts.push(make_post(&mut rng, &user, c, year));
        }
    }
    posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.post_id.cmp(&b.post_id)));

    SyntheticCorpus {
        corpus: Corpus::from_posts(posts),
        injected,
        background,
        communities,
    }
}
