//! Forum corpus data model: ingestion, filtering, statistics and annual
//! snapshots.

mod ingest;
mod langid;
mod stats;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_path, ingest_posts, IngestReport, SchemaMap};
pub use langid::{LanguageIdentifier, StopwordLanguageId};
pub use stats::{compute_platform_stats, compute_platform_stats_with, stats_by_platform, stats_table, median, PlatformStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("schema error: {malformed} of {records} records are malformed (first problem: {first})")]
    Schema {
        records: usize,
        malformed: usize,
        first: String,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("canonical corpus line {line}: {message}")]
    Canonical { line: usize, message: String },
}

/// A single forum message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub thread_id: String,
    pub user_id: String,
    pub platform: String,
    pub subforum: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

impl Post {
    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn year(&self) -> i32 {
        self.timestamp.year()
    }
}

/// An immutable, id-deduplicated collection of posts in ingestion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    posts: Vec<Post>,
}

impl Corpus {
    /// Builds a corpus, keeping the first post for every repeated id.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let posts = posts
            .into_iter()
            .filter(|p| seen.insert(p.post_id.clone()))
            .collect();
        Corpus { posts }
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Post> {
        self.posts.iter()
    }

    /// Distinct platform labels, sorted.
    pub fn platforms(&self) -> Vec<String> {
        let mut out: Vec<String> = self.posts.iter().map(|p| p.platform.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn for_platform(&self, platform: &str) -> Corpus {
        Corpus {
            posts: self.posts.iter().filter(|p| p.platform == platform).cloned().collect(),
        }
    }

    /// Canonical serialization: one JSON object per line, fields in
    /// declaration order, posts in corpus order.
    pub fn write_canonical<W: Write>(&self, mut out: W) -> io::Result<()> {
        for post in &self.posts {
            serde_json::to_writer(&mut out, post)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_canonical(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_canonical<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut posts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(&line).map_err(|e| CorpusError::Canonical {
                line: i + 1,
                message: e.to_string(),
            })?;
            posts.push(post);
        }
        Ok(Corpus::from_posts(posts))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::read_canonical(BufReader::new(File::open(path)?))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Post;
    type IntoIter = std::slice::Iter<'a, Post>;

    fn into_iter(self) -> Self::IntoIter {
        self.posts.iter()
    }
}

/// Splits text into lowercase tokens. A token is a maximal run of
/// alphabetic characters; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphabetic() {
            // Lowercasing may expand to combining marks (e.g. U+0130); keep
            // only the alphabetic part so tokens stay purely alphabetic.
            current.extend(ch.to_lowercase().filter(|c| c.is_alphabetic()));
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Post-level length and content predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostFilter {
    pub min_chars: usize,
    pub max_chars: usize,
    pub drop_empty_or_one_word: bool,
}

impl Default for PostFilter {
    fn default() -> Self {
        PostFilter {
            min_chars: 0,
            max_chars: usize::MAX,
            drop_empty_or_one_word: false,
        }
    }
}

impl PostFilter {
    pub fn new(min_chars: usize, max_chars: usize, drop_empty_or_one_word: bool) -> Result<Self, CorpusError> {
        if min_chars > max_chars {
            return Err(CorpusError::InvalidRange(format!(
                "min_chars {min_chars} exceeds max_chars {max_chars}"
            )));
        }
        Ok(PostFilter {
            min_chars,
            max_chars,
            drop_empty_or_one_word,
        })
    }

    /// Length bounds are inclusive on both ends.
    pub fn accepts(&self, post: &Post) -> bool {
        let len = post.char_len();
        if len < self.min_chars || len > self.max_chars {
            return false;
        }
        if self.drop_empty_or_one_word && tokenize(&post.text).len() <= 1 {
            return false;
        }
        true
    }
}

pub fn filter_posts(corpus: &Corpus, filter: &PostFilter) -> Corpus {
    Corpus {
        posts: corpus.iter().filter(|p| filter.accepts(p)).cloned().collect(),
    }
}

/// All posts from one UTC calendar year.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    pub year: i32,
    pub posts: Vec<&'a Post>,
}

/// Splits a corpus into one snapshot per year in `start_year..=end_year`.
/// Posts outside the range are not part of any snapshot.
pub fn annual_snapshots(corpus: &Corpus, start_year: i32, end_year: i32) -> Result<Vec<Snapshot<'_>>, CorpusError> {
    if start_year > end_year {
        return Err(CorpusError::InvalidRange(format!(
            "start year {start_year} is after end year {end_year}"
        )));
    }
    let mut by_year: BTreeMap<i32, Vec<&Post>> = (start_year..=end_year).map(|y| (y, Vec::new())).collect();
    for post in corpus {
        if let Some(bucket) = by_year.get_mut(&post.year()) {
            bucket.push(post);
        }
    }
    Ok(by_year
        .into_iter()
        .map(|(year, posts)| Snapshot { year, posts })
        .collect())
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Going ER!!"), vec!["going", "er"]);
        assert_eq!(tokenize("(((them)))"), vec!["them"]);
        assert!(tokenize("123 !!").is_empty());
        assert_eq!(tokenize("Übermensch's"), vec!["übermensch", "s"]);
    }

    // Independent reference scanner: classify each char, split on class
    // changes, lowercase alphabetic runs.
    fn scan_oracle(text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_alphabetic() {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            let run: String = chars[start..i].iter().collect();
            let lowered: String = run.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
            out.push(lowered);
        }
        out
    }

    #[test]
    fn tokenize_matches_scanner_on_sentence_fixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pieces = ["Chad", "mogs", "the", "ER", "1488", "(((them)))", "cope...", "l'homme", "Straße", "—", "foid's", "hi!!", "  ", "\n", "ÉTÉ"];
        let mut all_tokens = Vec::new();
        let mut oracle_tokens = Vec::new();
        for _ in 0..50 {
            let n = rng.gen_range(3..12);
            let sentence: String = (0..n)
                .map(|_| pieces[rng.gen_range(0..pieces.len())])
                .collect::<Vec<_>>()
                .join(" ");
            all_tokens.extend(tokenize(&sentence));
            oracle_tokens.extend(scan_oracle(&sentence));
        }
        all_tokens.sort();
        oracle_tokens.sort();
        assert_eq!(all_tokens, oracle_tokens);
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_alphabetic(text in "\\PC{0,80}") {
            let first = tokenize(&text);
            prop_assert_eq!(&first, &tokenize(&text));
            for token in &first {
                prop_assert!(!token.is_empty());
                prop_assert!(token.chars().all(|c| c.is_alphabetic()), "token {:?}", token);
                prop_assert_eq!(&token.to_lowercase(), token);
            }
        }
    }

    #[test]
    fn filter_length_bounds_inclusive() {
        let corpus = Corpus::from_posts(vec![
            post("a", "u", "t", "2020-01-01T00:00:00Z", "123456789"),
            post("b", "u", "t", "2020-01-01T00:00:00Z", "1234567890"),
            post("c", "u", "t", "2020-01-01T00:00:00Z", &"x".repeat(300)),
            post("d", "u", "t", "2020-01-01T00:00:00Z", &"x".repeat(301)),
        ]);
        let kept = filter_posts(&corpus, &PostFilter::new(10, 300, false).unwrap());
        let ids: Vec<_> = kept.iter().map(|p| p.post_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c"]);
        assert_eq!(corpus.len(), 4);
    }

    #[test]
    fn filter_drops_one_word_posts() {
        let corpus = Corpus::from_posts(vec![
            post("a", "u", "t", "2020-01-01T00:00:00Z", "hello"),
            post("b", "u", "t", "2020-01-01T00:00:00Z", ""),
            post("c", "u", "t", "2020-01-01T00:00:00Z", "hello there"),
        ]);
        let kept = filter_posts(&corpus, &PostFilter::new(0, 1000, true).unwrap());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.posts()[0].post_id, "c");
    }

    #[test]
    fn filter_rejects_inverted_bounds() {
        assert!(PostFilter::new(20, 10, false).is_err());
    }

    #[test]
    fn filter_matches_predicate_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let words = ["cope", "rope", "foid", "the", "chad", "!!", "1"];
        let posts: Vec<Post> = (0..500)
            .map(|i| {
                let n = rng.gen_range(0..40);
                let text: String = (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
                post_in_year(i, 2020, &text)
            })
            .collect();
        let corpus = Corpus::from_posts(posts);
        let filter = PostFilter::new(10, 120, true).unwrap();
        let kept: Vec<String> = filter_posts(&corpus, &filter).iter().map(|p| p.post_id.clone()).collect();
        let mut oracle = Vec::new();
        for p in corpus.iter() {
            let len = p.text.chars().count();
            let words = p.text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).count();
            if (10..=120).contains(&len) && words > 1 {
                oracle.push(p.post_id.clone());
            }
        }
        assert_eq!(kept, oracle);
    }

    #[test]
    fn snapshot_year_boundary() {
        let corpus = Corpus::from_posts(vec![
            post("a", "u", "t", "2018-12-31T23:59:59Z", "x"),
            post("b", "u", "t", "2019-01-01T00:00:00Z", "y"),
        ]);
        let snaps = annual_snapshots(&corpus, 2018, 2019).unwrap();
        assert_eq!(snaps[0].posts.len(), 1);
        assert_eq!(snaps[0].posts[0].post_id, "a");
        assert_eq!(snaps[1].posts[0].post_id, "b");
    }

    #[test]
    fn snapshot_range_count() {
        let corpus = Corpus::default();
        let snaps = annual_snapshots(&corpus, 2018, 2024).unwrap();
        assert_eq!(snaps.len(), 7);
        assert!(snaps.iter().all(|s| s.posts.is_empty()));
        assert!(annual_snapshots(&corpus, 2020, 2019).is_err());
    }

    #[test]
    fn snapshots_partition_random_timestamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap().timestamp();
        let end = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap().timestamp();
        let posts: Vec<Post> = (0..600)
            .map(|i| {
                let mut p = post_in_year(i, 2018, "text");
                p.timestamp = Utc.timestamp_opt(rng.gen_range(start..end), 0).unwrap();
                p
            })
            .collect();
        let corpus = Corpus::from_posts(posts);
        let snaps = annual_snapshots(&corpus, 2018, 2020).unwrap();

        let mut oracle: BTreeMap<i32, usize> = BTreeMap::new();
        for p in corpus.iter() {
            let year: i32 = p.timestamp.format("%Y").to_string().parse().unwrap();
            *oracle.entry(year).or_default() += 1;
        }
        for s in &snaps {
            assert_eq!(s.posts.len(), oracle[&s.year]);
            assert!(s.posts.iter().all(|p| p.year() == s.year));
        }
        let mut union: Vec<&str> = snaps.iter().flat_map(|s| s.posts.iter().map(|p| p.post_id.as_str())).collect();
        let total = union.len();
        union.sort();
        union.dedup();
        assert_eq!(union.len(), total, "snapshots overlap");
        assert_eq!(total, corpus.len());
    }

    #[test]
    fn canonical_round_trip() {
        let corpus = Corpus::from_posts(vec![
            post("a", "u1", "t", "2018-12-31T23:59:59Z", "ça va, Chad?"),
            post("b", "u2", "t", "2019-01-01T00:00:00Z", "line\nbreak"),
        ]);
        let bytes = corpus.to_canonical_bytes();
        let back = Corpus::read_canonical(bytes.as_slice()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.to_canonical_bytes(), bytes);
    }
}
