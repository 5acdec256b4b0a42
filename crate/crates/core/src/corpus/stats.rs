use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, LanguageIdentifier, StopwordLanguageId};

/// Summary statistics for one platform. Medians stand in for averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformStats {
    pub platform: String,
    pub n_posts: usize,
    pub n_users: usize,
    pub n_threads: usize,
    pub median_posts_per_user: f64,
    pub median_posts_per_thread: f64,
    pub median_chars_per_post: f64,
    pub start_date: NaiveDate,
    /// Fraction of language-identified posts per label; undecided posts are
    /// excluded from the denominator.
    pub language_histogram: BTreeMap<String, f64>,
    pub n_language_undetected: usize,
}

/// Median of a non-empty sample; the mean of the two central values for
/// even lengths.
pub fn median(values: &mut [usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid] as f64
    } else {
        (values[mid - 1] as f64 + values[mid] as f64) / 2.0
    })
}

pub fn compute_platform_stats(corpus: &Corpus) -> Result<PlatformStats, CorpusError> {
    compute_platform_stats_with(corpus, &StopwordLanguageId::default())
}

pub fn compute_platform_stats_with(corpus: &Corpus, langid: &dyn LanguageIdentifier) -> Result<PlatformStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut per_user: HashMap<&str, usize> = HashMap::new();
    let mut per_thread: HashMap<&str, usize> = HashMap::new();
    let mut chars: Vec<usize> = Vec::with_capacity(corpus.len());
    let mut languages: BTreeMap<String, usize> = BTreeMap::new();
    let mut undetected = 0;
    for post in corpus {
        *per_user.entry(&post.user_id).or_default() += 1;
        *per_thread.entry(&post.thread_id).or_default() += 1;
        chars.push(post.char_len());
        match langid.identify(&post.text) {
            Some(label) => *languages.entry(label).or_default() += 1,
            None => undetected += 1,
        }
    }
    let detected: usize = languages.values().sum();
    let language_histogram = languages
        .into_iter()
        .map(|(label, n)| (label, n as f64 / detected as f64))
        .collect();

    let platforms = corpus.platforms();
    let platform = if platforms.len() == 1 { platforms[0].clone() } else { platforms.join("+") };

    let mut user_counts: Vec<usize> = per_user.values().copied().collect();
    let mut thread_counts: Vec<usize> = per_thread.values().copied().collect();
    Ok(PlatformStats {
        platform,
        n_posts: corpus.len(),
        n_users: per_user.len(),
        n_threads: per_thread.len(),
        median_posts_per_user: median(&mut user_counts).unwrap(),
        median_posts_per_thread: median(&mut thread_counts).unwrap(),
        median_chars_per_post: median(&mut chars).unwrap(),
        start_date: corpus.iter().map(|p| p.timestamp.date_naive()).min().unwrap(),
        language_histogram,
        n_language_undetected: undetected,
    })
}

/// One stats block per platform label, sorted by label.
pub fn stats_by_platform(corpus: &Corpus, langid: &dyn LanguageIdentifier) -> Result<Vec<PlatformStats>, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    corpus
        .platforms()
        .iter()
        .map(|p| compute_platform_stats_with(&corpus.for_platform(p), langid))
        .collect()
}

fn fmt_median(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

/// Aligned-column text rendering, one column per platform.
pub fn stats_table(stats: &[PlatformStats]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("".into(), stats.iter().map(|s| s.platform.clone()).collect()),
        ("start date".into(), stats.iter().map(|s| s.start_date.to_string()).collect()),
        ("# posts".into(), stats.iter().map(|s| s.n_posts.to_string()).collect()),
        ("# posters".into(), stats.iter().map(|s| s.n_users.to_string()).collect()),
        ("# posts / poster".into(), stats.iter().map(|s| fmt_median(s.median_posts_per_user)).collect()),
        ("# posts / thread".into(), stats.iter().map(|s| fmt_median(s.median_posts_per_thread)).collect()),
        ("# char / post".into(), stats.iter().map(|s| fmt_median(s.median_chars_per_post)).collect()),
    ];
    let mut labels: Vec<&String> = stats.iter().flat_map(|s| s.language_histogram.keys()).collect();
    labels.sort();
    labels.dedup();
    for label in labels {
        rows.push((
            format!("lang {label}"),
            stats
                .iter()
                .map(|s| format!("{:.1}%", 100.0 * s.language_histogram.get(label).copied().unwrap_or(0.0)))
                .collect(),
        ));
    }
    let head_width = rows.iter().map(|(h, _)| h.chars().count()).max().unwrap_or(0);
    let col_widths: Vec<usize> = (0..stats.len())
        .map(|i| rows.iter().map(|(_, cells)| cells[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (head, cells) in rows {
        let _ = write!(out, "{head:<head_width$}");
        for (cell, width) in cells.iter().zip(&col_widths) {
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::*;
    use crate::corpus::Post;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn odd_median_of_user_counts() {
        let mut posts = Vec::new();
        let mut id = 0;
        for (user, n) in [("a", 1), ("b", 25), ("c", 3)] {
            for _ in 0..n {
                posts.push(post(&format!("p{id}"), user, &format!("t{id}"), "2020-01-01T00:00:00Z", "hi"));
                id += 1;
            }
        }
        let stats = compute_platform_stats(&Corpus::from_posts(posts)).unwrap();
        assert_eq!(stats.median_posts_per_user, 3.0);
        assert_eq!(stats.n_users, 3);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(compute_platform_stats(&Corpus::default()), Err(CorpusError::Empty)));
    }

    fn sort_pick(mut v: Vec<usize>) -> f64 {
        v.sort();
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
        }
    }

    #[test]
    fn medians_match_sort_and_pick() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let posts: Vec<Post> = (0..200)
            .map(|i| {
                let thread = rng.gen_range(0..17);
                let user = rng.gen_range(0..31);
                let len = rng.gen_range(1..200);
                post(&format!("p{i}"), &format!("u{user}"), &format!("t{thread}"), "2019-05-05T00:00:00Z", &"a".repeat(len))
            })
            .collect();
        let corpus = Corpus::from_posts(posts);
        let stats = compute_platform_stats(&corpus).unwrap();

        let mut threads: BTreeMap<&str, usize> = BTreeMap::new();
        let mut users: BTreeMap<&str, usize> = BTreeMap::new();
        for p in corpus.iter() {
            *threads.entry(&p.thread_id).or_default() += 1;
            *users.entry(&p.user_id).or_default() += 1;
        }
        assert_eq!(stats.median_posts_per_thread, sort_pick(threads.values().copied().collect()));
        assert_eq!(stats.median_posts_per_user, sort_pick(users.values().copied().collect()));
        assert_eq!(stats.median_chars_per_post, sort_pick(corpus.iter().map(|p| p.text.chars().count()).collect()));
    }

    #[test]
    fn char_counts_are_scalar_values() {
        let stats = compute_platform_stats(&Corpus::from_posts(vec![post("a", "u", "t", "2020-01-01T00:00:00Z", "ça été")])).unwrap();
        assert_eq!(stats.median_chars_per_post, 6.0);
    }

    #[test]
    fn language_histogram_sums_to_one() {
        let corpus = Corpus::from_posts(vec![
            post("a", "u", "t", "2020-01-01T00:00:00Z", "this is the way it is"),
            post("b", "u", "t", "2020-01-01T00:00:00Z", "je ne sais pas"),
            post("c", "u", "t", "2020-01-01T00:00:00Z", "and the rest of it"),
            post("d", "u", "t", "2020-01-01T00:00:00Z", "foid"),
        ]);
        let stats = compute_platform_stats(&corpus).unwrap();
        let total: f64 = stats.language_histogram.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((stats.language_histogram["en"] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(stats.n_language_undetected, 1);

        let custom = |_: &str| Some("xx".to_string());
        let stats = compute_platform_stats_with(&corpus, &custom).unwrap();
        assert_eq!(stats.language_histogram["xx"], 1.0);
    }

    #[test]
    fn table_is_aligned() {
        let corpus = Corpus::from_posts(vec![post("a", "u", "t", "2020-01-01T00:00:00Z", "the cope")]);
        let table = stats_table(&stats_by_platform(&corpus, &StopwordLanguageId::default()).unwrap());
        let widths: Vec<usize> = table.lines().map(|l| l.chars().count()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{table}");
        assert!(table.contains("# char / post"));
    }
}
