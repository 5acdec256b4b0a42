use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{InductionConfig, InductionError};
use crate::corpus::{tokenize, Snapshot};

/// `count` uses of `word` by `user` in `snapshot` (all indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UsageEvent {
    pub snapshot: u32,
    pub user: u32,
    pub word: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub platform: String,
    pub years: Vec<i32>,
    /// Sorted.
    pub users: Vec<String>,
    /// Sorted.
    pub vocabulary: Vec<String>,
    /// Sorted by (snapshot, user, word).
    pub events: Vec<UsageEvent>,
}

impl TrainingSet {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Keeps users active in at least `min_active_timesteps_per_user` snapshots
/// and words used by more than `min_users_per_word` of those users, then
/// counts per-snapshot user–word usage.
pub fn build_training_set(snapshots: &[Snapshot<'_>], config: &InductionConfig) -> Result<TrainingSet, InductionError> {
    if snapshots.len() < 2 {
        return Err(InductionError::TooFewSnapshots(snapshots.len()));
    }
    let mut active: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    let mut platforms = BTreeSet::new();
    for (t, snap) in snapshots.iter().enumerate() {
        for post in &snap.posts {
            active.entry(post.user_id.as_str()).or_default().insert(t);
            platforms.insert(post.platform.as_str());
        }
    }
    let users: BTreeSet<&str> = active
        .iter()
        .filter(|(_, steps)| steps.len() >= config.min_active_timesteps_per_user)
        .map(|(u, _)| *u)
        .collect();
    if users.is_empty() {
        return Err(InductionError::EmptyModel("users"));
    }

    let mut counts: BTreeMap<(usize, &str, String), u32> = BTreeMap::new();
    for (t, snap) in snapshots.iter().enumerate() {
        for post in &snap.posts {
            if !users.contains(post.user_id.as_str()) {
                continue;
            }
            for token in tokenize(&post.text) {
                *counts.entry((t, post.user_id.as_str(), token)).or_default() += 1;
            }
        }
    }
    let mut word_users: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for (_, user, word) in counts.keys() {
        word_users.entry(word.as_str()).or_default().insert(user);
    }
    let mut vocabulary: Vec<String> = word_users
        .iter()
        .filter(|(_, us)| us.len() > config.min_users_per_word)
        .map(|(w, _)| w.to_string())
        .collect();
    vocabulary.sort();
    if vocabulary.is_empty() {
        return Err(InductionError::EmptyModel("words"));
    }

    let users: Vec<String> = users.into_iter().map(str::to_string).collect();
    let user_index: HashMap<&str, u32> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i as u32)).collect();
    let word_index: HashMap<&str, u32> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
    let mut events: Vec<UsageEvent> = counts
        .iter()
        .filter_map(|((t, user, word), &count)| {
            Some(UsageEvent {
                snapshot: *t as u32,
                user: user_index[user],
                word: *word_index.get(word.as_str())?,
                count,
            })
        })
        .collect();
    events.sort();

    Ok(TrainingSet {
        platform: platforms.into_iter().collect::<Vec<_>>().join("+"),
        years: snapshots.iter().map(|s| s.year).collect(),
        users,
        vocabulary,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::post;
    use crate::corpus::{annual_snapshots, Corpus, Post};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(min_users: usize) -> InductionConfig {
        InductionConfig {
            min_users_per_word: min_users,
            ..InductionConfig::default()
        }
    }

    #[test]
    fn word_threshold_is_strict() {
        let mut posts = Vec::new();
        // 21 users active in both years; "twenty" used by exactly 20 of them,
        // "many" by all 21.
        for u in 0..21 {
            for (y, year) in [2018, 2019].iter().enumerate() {
                let text = if u < 20 { "twenty many" } else { "many" };
                posts.push(post(&format!("{u}-{y}"), &format!("u{u}"), "t", &format!("{year}-03-01T00:00:00Z"), text));
            }
        }
        let corpus = Corpus::from_posts(posts);
        let snaps = annual_snapshots(&corpus, 2018, 2019).unwrap();
        let ts = build_training_set(&snaps, &config(20)).unwrap();
        assert_eq!(ts.vocabulary, vec!["many"]);
    }

    #[test]
    fn single_snapshot_users_are_dropped() {
        let corpus = Corpus::from_posts(vec![
            post("1", "a", "t", "2018-01-01T00:00:00Z", "cope"),
            post("2", "a", "t", "2019-01-01T00:00:00Z", "cope"),
            post("3", "b", "t", "2019-01-01T00:00:00Z", "cope"),
        ]);
        let snaps = annual_snapshots(&corpus, 2018, 2019).unwrap();
        let ts = build_training_set(&snaps, &config(0)).unwrap();
        assert_eq!(ts.users, vec!["a"]);
        assert_eq!(ts.events.len(), 2);
    }

    #[test]
    fn errors_on_degenerate_input() {
        let corpus = Corpus::from_posts(vec![post("1", "a", "t", "2018-01-01T00:00:00Z", "cope")]);
        let snaps = annual_snapshots(&corpus, 2018, 2018).unwrap();
        assert!(matches!(build_training_set(&snaps, &config(0)), Err(InductionError::TooFewSnapshots(1))));
        let snaps = annual_snapshots(&corpus, 2018, 2019).unwrap();
        assert!(matches!(build_training_set(&snaps, &config(0)), Err(InductionError::EmptyModel("users"))));
    }

    #[test]
    fn retained_sets_match_membership_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let words = ["cope", "rope", "chad", "foid", "the", "and", "mog", "pill", "based", "cringe"];
        let posts: Vec<Post> = (0..900)
            .map(|i| {
                let user = rng.gen_range(0..60);
                let year = 2018 + rng.gen_range(0..3);
                let n = rng.gen_range(1..5);
                // word k is used by roughly users < 6k
                let text: Vec<&str> = (0..n)
                    .map(|_| {
                        let k = rng.gen_range(0..words.len());
                        if user < 6 * (k + 1) { words[k] } else { "the" }
                    })
                    .collect();
                post(&format!("p{i}"), &format!("u{user:02}"), "t", &format!("{year}-06-01T00:00:00Z"), &text.join(" "))
            })
            .collect();
        let corpus = Corpus::from_posts(posts);
        let snaps = annual_snapshots(&corpus, 2018, 2020).unwrap();
        let cfg = config(20);
        let ts = build_training_set(&snaps, &cfg).unwrap();

        // brute force: scan every user, then every word against every user
        let mut oracle_users = Vec::new();
        let all_users: BTreeSet<String> = corpus.iter().map(|p| p.user_id.clone()).collect();
        for u in &all_users {
            let years: BTreeSet<i32> = corpus.iter().filter(|p| &p.user_id == u).map(|p| p.year()).collect();
            if years.len() >= 2 {
                oracle_users.push(u.clone());
            }
        }
        let mut oracle_words = Vec::new();
        let all_words: BTreeSet<String> = corpus.iter().flat_map(|p| tokenize(&p.text)).collect();
        for w in &all_words {
            let n = oracle_users
                .iter()
                .filter(|u| corpus.iter().any(|p| &p.user_id == *u && tokenize(&p.text).contains(w)))
                .count();
            if n > 20 {
                oracle_words.push(w.clone());
            }
        }
        assert_eq!(ts.users, oracle_users);
        assert_eq!(ts.vocabulary, oracle_words);
        let total: u32 = ts.events.iter().map(|e| e.count).sum();
        let oracle_total: usize = corpus
            .iter()
            .filter(|p| oracle_users.contains(&p.user_id))
            .map(|p| tokenize(&p.text).iter().filter(|t| oracle_words.contains(t)).count())
            .sum();
        assert_eq!(total as usize, oracle_total);
    }
}
