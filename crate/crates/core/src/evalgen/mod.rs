//! Gold test suites for the classification, retrieval and decoding tasks,
//! plus the annotation sheets used to judge decoding output.

mod examples;
mod sheet;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus};
use crate::digest::derive_seed;

pub use examples::{select_example_posts, ExampleSelection, PostIndex, MAX_EXAMPLE_CHARS, MIN_EXAMPLE_CHARS};
pub use sheet::{
    export_annotation_sheet, import_judgments, AnnotationKey, AnnotationSheet, CandidateDefinition, DecodingJudgment, DefinitionSet, ImportOutcome, KeyRow, RowError,
    Verdict,
};

#[derive(Debug, Error)]
pub enum EvalGenError {
    #[error("invalid lexicon entry {word:?}: {reason}")]
    InvalidEntry { word: String, reason: String },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("no positive entries for a decoding suite")]
    NoPositives,
    #[error("framing {framing} is not available for {task}")]
    FramingNotAllowed { task: Task, framing: Framing },
    #[error("expected {expected} definitions for {word:?}, got {got}")]
    DefinitionCount { word: String, expected: usize, got: usize },
    #[error("annotation key: {0}")]
    Key(String),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = EvalGenError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let norm = s.trim().to_lowercase().replace(['-', ' '], "_");
                $(if norm == $text { return Ok($name::$variant); })+
                Err(EvalGenError::Parse(format!("unknown {} {s:?}", stringify!($name).to_lowercase())))
            }
        }
    };
}

string_enum!(Task { Classification => "classification", Retrieval => "retrieval", Decoding => "decoding" });
string_enum!(Framing { Definition => "definition", Instructions => "instructions", OneExample => "one_example", TenExamples => "ten_examples" });
string_enum!(Label { Positive => "positive", Negative => "negative" });
string_enum!(Source { Expert => "expert", Synthetic => "synthetic", Imported => "imported" });

impl Framing {
    pub fn n_examples(self) -> usize {
        match self {
            Framing::Definition | Framing::Instructions => 0,
            Framing::OneExample => 1,
            Framing::TenExamples => 10,
        }
    }
}

impl Task {
    /// Example posts cannot be shown without giving the answer away in
    /// retrieval, so it only supports the two context-free framings.
    pub fn framings(self) -> &'static [Framing] {
        match self {
            Task::Retrieval => &[Framing::Definition, Framing::Instructions],
            _ => Framing::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub platform: String,
    pub label: Label,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl LexiconEntry {
    pub fn new(word: &str, platform: &str, label: Label, source: Source) -> Result<Self, EvalGenError> {
        let entry = LexiconEntry {
            word: word.to_string(),
            platform: platform.to_string(),
            label,
            source,
            score: None,
        };
        entry.validate()?;
        Ok(entry)
    }

    pub fn validate(&self) -> Result<(), EvalGenError> {
        if tokenize(&self.word) != [self.word.clone()] {
            return Err(EvalGenError::InvalidEntry {
                word: self.word.clone(),
                reason: "not a single lowercase alphabetic token".into(),
            });
        }
        if self.platform.is_empty() {
            return Err(EvalGenError::InvalidEntry {
                word: self.word.clone(),
                reason: "empty platform".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    word: String,
    platform: String,
    label: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    score: Option<f64>,
}

/// Reads a lexicon CSV with columns `word,platform,label[,source][,score]`.
pub fn read_lexicon_csv<R: Read>(reader: R) -> Result<Vec<LexiconEntry>, EvalGenError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: LexiconRow = row?;
        let mut entry = LexiconEntry::new(
            &row.word,
            &row.platform,
            row.label.parse()?,
            row.source.as_deref().filter(|s| !s.is_empty()).map(str::parse).transpose()?.unwrap_or(Source::Imported),
        )?;
        entry.score = row.score;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_lexicon_csv<W: Write>(entries: &[LexiconEntry], out: W) -> Result<(), EvalGenError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "platform", "label", "source", "score"])?;
    for e in entries {
        let score = e.score.map(|s| format!("{s:.9}")).unwrap_or_default();
        w.write_record([e.word.as_str(), &e.platform, e.label.as_str(), e.source.as_str(), &score])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub task: Task,
    pub target_word: String,
    pub platform: String,
    pub gold_label: Label,
    pub framing: Framing,
    pub example_posts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_post: Option<String>,
    /// Fewer example posts were available than the framing calls for.
    #[serde(default)]
    pub shortage: bool,
}

impl TestCase {
    pub fn make_id(task: Task, platform: &str, framing: Framing, word: &str) -> String {
        format!("{task}-{platform}-{framing}-{word}")
    }

    /// Checks the structural invariants of a case.
    pub fn validate(&self, min_chars: usize, max_chars: usize) -> Result<(), String> {
        let has = |text: &str| tokenize(text).contains(&self.target_word);
        if !self.task.framings().contains(&self.framing) {
            return Err(format!("{}: framing not allowed", self.case_id));
        }
        let n = self.framing.n_examples();
        if self.example_posts.len() > n || (!self.shortage && self.example_posts.len() != n) {
            return Err(format!("{}: {} example posts for {}", self.case_id, self.example_posts.len(), self.framing));
        }
        for p in &self.example_posts {
            let len = p.chars().count();
            if !has(p) || len < min_chars || len > max_chars {
                return Err(format!("{}: ineligible example post", self.case_id));
            }
        }
        match (&self.carrier_post, self.task) {
            (Some(c), Task::Retrieval) if has(c) => {}
            (_, Task::Retrieval) => return Err(format!("{}: retrieval needs a carrier post", self.case_id)),
            (Some(_), _) => return Err(format!("{}: carrier post outside retrieval", self.case_id)),
            (None, _) => {}
        }
        if self.task == Task::Decoding && self.gold_label != Label::Positive {
            return Err(format!("{}: decoding cases are positive", self.case_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub task: Task,
    pub framings: Vec<Framing>,
    /// Words per platform for decoding suites; all positives when unset.
    pub size: Option<usize>,
    pub seed: u64,
    pub min_chars: usize,
    pub max_chars: usize,
}

impl SuiteConfig {
    pub fn new(task: Task, framings: &[Framing], seed: u64) -> Self {
        SuiteConfig {
            task,
            framings: framings.to_vec(),
            size: None,
            seed,
            min_chars: MIN_EXAMPLE_CHARS,
            max_chars: MAX_EXAMPLE_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub word: String,
    pub platform: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub task: Task,
    pub seed: u64,
    pub cases: Vec<TestCase>,
    pub rejected: Vec<Rejected>,
    /// Per platform, the number of decoding words drawn from each frequency
    /// quintile.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub frequency_bins: BTreeMap<String, Vec<usize>>,
}

impl TestSuite {
    pub fn to_json(&self) -> Result<String, EvalGenError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalGenError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One case per (entry, framing). Example posts and carriers come from the
/// posts of the entry's platform.
pub fn build_test_suite(lexicon: &[LexiconEntry], corpus: &Corpus, config: &SuiteConfig) -> Result<TestSuite, EvalGenError> {
    if lexicon.is_empty() {
        return Err(EvalGenError::EmptyLexicon);
    }
    for e in lexicon {
        e.validate()?;
    }
    for &framing in &config.framings {
        if !config.task.framings().contains(&framing) {
            return Err(EvalGenError::FramingNotAllowed { task: config.task, framing });
        }
    }
    let platforms: BTreeSet<&str> = lexicon.iter().map(|e| e.platform.as_str()).collect();
    let indexes: BTreeMap<&str, PostIndex> = platforms
        .iter()
        .map(|&p| (p, PostIndex::new(corpus.iter().filter(|post| post.platform == p), config.min_chars, config.max_chars)))
        .collect();

    let mut rejected = Vec::new();
    let mut frequency_bins = BTreeMap::new();
    let entries: Vec<&LexiconEntry> = if config.task == Task::Decoding {
        let mut positives = Vec::new();
        for e in lexicon {
            if e.label == Label::Positive {
                positives.push(e);
            } else {
                rejected.push(Rejected {
                    word: e.word.clone(),
                    platform: e.platform.clone(),
                    reason: "decoding suites take positives only".into(),
                });
            }
        }
        if positives.is_empty() {
            return Err(EvalGenError::NoPositives);
        }
        match config.size {
            Some(size) => {
                let (chosen, bins) = frequency_matched_sample(&positives, &indexes, size, config.seed);
                frequency_bins = bins;
                chosen
            }
            None => positives,
        }
    } else {
        lexicon.iter().collect()
    };

    let max_examples = config.framings.iter().map(|f| f.n_examples()).max().unwrap_or(0);
    let mut cases = Vec::with_capacity(entries.len() * config.framings.len());
    for e in entries {
        let index = &indexes[e.platform.as_str()];
        let carrier = if config.task == Task::Retrieval {
            match index.carrier(&e.word) {
                Some(p) => Some(p.text.clone()),
                None => {
                    rejected.push(Rejected {
                        word: e.word.clone(),
                        platform: e.platform.clone(),
                        reason: "no post contains the word".into(),
                    });
                    continue;
                }
            }
        } else {
            None
        };
        let selection = index.select(&e.word, max_examples, config.seed);
        for &framing in &config.framings {
            let n = framing.n_examples();
            cases.push(TestCase {
                case_id: TestCase::make_id(config.task, &e.platform, framing, &e.word),
                task: config.task,
                target_word: e.word.clone(),
                platform: e.platform.clone(),
                gold_label: e.label,
                framing,
                example_posts: selection.posts.iter().take(n).cloned().collect(),
                carrier_post: carrier.clone(),
                shortage: selection.posts.len() < n,
            });
        }
    }
    Ok(TestSuite {
        task: config.task,
        seed: config.seed,
        cases,
        rejected,
        frequency_bins,
    })
}

pub const FREQUENCY_BINS: usize = 5;

/// Quintile edges of `values` (linear interpolation between order
/// statistics).
fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    (1..bins)
        .map(|i| {
            let pos = (v.len() - 1) as f64 * i as f64 / bins as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        })
        .collect()
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.iter().filter(|&&e| x > e).count()
}

/// Splits `size` across bins as evenly as capacity allows.
fn allocate(size: usize, capacity: &[usize]) -> Vec<usize> {
    let mut quota = vec![0; capacity.len()];
    let mut left = size.min(capacity.iter().sum());
    while left > 0 {
        for (q, &c) in quota.iter_mut().zip(capacity) {
            if left > 0 && *q < c {
                *q += 1;
                left -= 1;
            }
        }
    }
    quota
}

/// Draws `size` positives per platform so that every platform takes the
/// same number of words from each pooled log-frequency quintile.
fn frequency_matched_sample<'e>(
    positives: &[&'e LexiconEntry],
    indexes: &BTreeMap<&str, PostIndex>,
    size: usize,
    seed: u64,
) -> (Vec<&'e LexiconEntry>, BTreeMap<String, Vec<usize>>) {
    let logf = |e: &LexiconEntry| (1.0 + indexes[e.platform.as_str()].frequency(&e.word) as f64).ln();
    let all: Vec<f64> = positives.iter().map(|e| logf(e)).collect();
    let edges = quantile_edges(&all, FREQUENCY_BINS);

    let mut by_platform: BTreeMap<&str, Vec<Vec<&LexiconEntry>>> = BTreeMap::new();
    for e in positives {
        let bins = by_platform.entry(e.platform.as_str()).or_insert_with(|| vec![Vec::new(); FREQUENCY_BINS]);
        bins[bin_of(&edges, logf(e))].push(e);
    }
    let capacity: Vec<usize> = (0..FREQUENCY_BINS).map(|b| by_platform.values().map(|bins| bins[b].len()).min().unwrap_or(0)).collect();
    let quota = allocate(size, &capacity);
    if quota.iter().sum::<usize>() < size {
        log::warn!("frequency matching yields {} of {size} requested words per platform", quota.iter().sum::<usize>());
    }

    let mut chosen = Vec::new();
    let mut counts = BTreeMap::new();
    for (platform, bins) in by_platform {
        for (b, mut words) in bins.into_iter().enumerate() {
            words.sort_by(|x, y| x.word.cmp(&y.word));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("decoding/{platform}/{b}")));
            words.shuffle(&mut rng);
            words.truncate(quota[b]);
            words.sort_by(|x, y| x.word.cmp(&y.word));
            chosen.extend(words);
        }
        counts.insert(platform.to_string(), quota.clone());
    }
    (chosen, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::post_in_year;

    fn entry(word: &str, platform: &str, label: Label) -> LexiconEntry {
        LexiconEntry::new(word, platform, label, Source::Synthetic).unwrap()
    }

    #[test]
    fn enums_round_trip_through_strings() {
        for f in Framing::ALL {
            assert_eq!(f.as_str().parse::<Framing>().unwrap(), *f);
        }
        assert_eq!("one-example".parse::<Framing>().unwrap(), Framing::OneExample);
        assert_eq!("Ten Examples".parse::<Framing>().unwrap(), Framing::TenExamples);
        assert!("two_examples".parse::<Framing>().is_err());
        assert_eq!(serde_json::to_string(&Task::Retrieval).unwrap(), "\"retrieval\"");
    }

    #[test]
    fn entries_must_be_single_tokens() {
        assert!(LexiconEntry::new("blackpill", "incels", Label::Positive, Source::Expert).is_ok());
        assert!(LexiconEntry::new("black pill", "incels", Label::Positive, Source::Expert).is_err());
        assert!(LexiconEntry::new("Chad", "incels", Label::Positive, Source::Expert).is_err());
        assert!(LexiconEntry::new("", "incels", Label::Positive, Source::Expert).is_err());
    }

    #[test]
    fn lexicon_csv_round_trip() {
        let mut a = entry("cope", "incels", Label::Positive);
        a.score = Some(0.5);
        let lex = vec![a, entry("internet", "incels", Label::Negative)];
        let mut buf = Vec::new();
        write_lexicon_csv(&lex, &mut buf).unwrap();
        assert_eq!(read_lexicon_csv(buf.as_slice()).unwrap(), lex);
        let bad = "word,platform,label\ncope,incels,maybe\n";
        assert!(read_lexicon_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn one_case_per_entry_and_framing() {
        let corpus = Corpus::from_posts((0..30).map(|i| post_in_year(i, 2020, &format!("the cope is strong number {i}"))));
        let lex = vec![entry("cope", "incels", Label::Positive), entry("strong", "incels", Label::Negative), entry("absent", "incels", Label::Negative)];
        let suite = build_test_suite(&lex, &corpus, &SuiteConfig::new(Task::Classification, Framing::ALL, 3)).unwrap();
        assert_eq!(suite.cases.len(), 12);
        for c in &suite.cases {
            c.validate(10, 300).unwrap();
        }
        let absent: Vec<&TestCase> = suite.cases.iter().filter(|c| c.target_word == "absent").collect();
        assert!(absent.iter().filter(|c| c.framing.n_examples() > 0).all(|c| c.shortage && c.example_posts.is_empty()));
        // one_example reuses the first of the ten
        let one = suite.cases.iter().find(|c| c.target_word == "cope" && c.framing == Framing::OneExample).unwrap();
        let ten = suite.cases.iter().find(|c| c.target_word == "cope" && c.framing == Framing::TenExamples).unwrap();
        assert_eq!(one.example_posts[0], ten.example_posts[0]);
        assert_eq!(one.case_id, "classification-incels-one_example-cope");
    }

    #[test]
    fn retrieval_rejects_example_framings_and_needs_carriers() {
        let corpus = Corpus::from_posts(vec![post_in_year(0, 2020, "a long cope post"), post_in_year(1, 2020, "cope")]);
        let lex = vec![entry("cope", "incels", Label::Positive), entry("absent", "incels", Label::Negative)];
        let err = build_test_suite(&lex, &corpus, &SuiteConfig::new(Task::Retrieval, &[Framing::OneExample], 0));
        assert!(matches!(err, Err(EvalGenError::FramingNotAllowed { .. })));
        let suite = build_test_suite(&lex, &corpus, &SuiteConfig::new(Task::Retrieval, Task::Retrieval.framings(), 0)).unwrap();
        assert_eq!(suite.cases.len(), 2);
        assert_eq!(suite.cases[0].carrier_post.as_deref(), Some("a long cope post"));
        assert_eq!(suite.rejected.len(), 1);
    }

    #[test]
    fn decoding_takes_positives_only() {
        let corpus = Corpus::from_posts(vec![post_in_year(0, 2020, "cope and rope")]);
        let lex = vec![entry("cope", "incels", Label::Positive), entry("rope", "incels", Label::Negative)];
        let suite = build_test_suite(&lex, &corpus, &SuiteConfig::new(Task::Decoding, &[Framing::Definition], 0)).unwrap();
        assert_eq!(suite.cases.len(), 1);
        assert_eq!(suite.rejected[0].word, "rope");
        let negatives = vec![entry("rope", "incels", Label::Negative)];
        let err = build_test_suite(&negatives, &corpus, &SuiteConfig::new(Task::Decoding, &[Framing::Definition], 0));
        assert!(matches!(err, Err(EvalGenError::NoPositives)));
        assert!(matches!(
            build_test_suite(&[], &corpus, &SuiteConfig::new(Task::Classification, &[Framing::Definition], 0)),
            Err(EvalGenError::EmptyLexicon)
        ));
    }

    #[test]
    fn allocation_fills_deficits_round_robin() {
        assert_eq!(allocate(10, &[5, 5, 5, 5, 5]), vec![2, 2, 2, 2, 2]);
        assert_eq!(allocate(10, &[0, 1, 5, 5, 5]), vec![0, 1, 3, 3, 3]);
        assert_eq!(allocate(100, &[1, 2, 3, 0, 0]), vec![1, 2, 3, 0, 0]);
    }

    #[test]
    fn quantile_edges_split_evenly() {
        let v: Vec<f64> = (0..101).map(f64::from).collect();
        assert_eq!(quantile_edges(&v, 5), vec![20.0, 40.0, 60.0, 80.0]);
        assert_eq!(bin_of(&[20.0, 40.0], 20.0), 0);
        assert_eq!(bin_of(&[20.0, 40.0], 20.5), 1);
    }
}
