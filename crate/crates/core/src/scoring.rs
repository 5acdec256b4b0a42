//! Metrics: binary precision/recall/F1, decoding verdict distributions,
//! common-morpheme ablation, Cohen's kappa, cross-task agreement and
//! random baselines.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize;
use crate::evalgen::{DecodingJudgment, Framing, Label, LexiconEntry, Task, TestCase, Verdict};
use crate::llmclient::{Answer, EvalRecord};

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("no results to score")]
    Empty,
    #[error("results mix several {0} values")]
    MixedCell(&'static str),
    #[error("{0} is not a binary task")]
    NotBinary(Task),
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("kappa needs at least 2 labels")]
    TooShort,
    #[error("kappa is undefined when chance agreement is 1")]
    UndefinedKappa,
    #[error("the two result sets share no targets")]
    NoOverlap,
    #[error("the morpheme list is empty")]
    NoMorphemes,
    #[error("baseline needs at least one positive and one negative")]
    OneClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    TP,
    FP,
    TN,
    FN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    CommonMorphemesExcluded,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::CommonMorphemesExcluded => "common_morphemes_excluded",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl Confusion {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TP => self.tp += 1,
            Outcome::FP => self.fp += 1,
            Outcome::TN => self.tn += 1,
            Outcome::FN => self.fn_ += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from(self.precision(), self.recall())
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Whether a reply counts as a positive prediction. Retrieval is positive
/// exactly when the target appears in the returned list; other listed
/// words are irrelevant. Refusals and parse failures are negative.
pub fn predicts_positive(task: Task, target_word: &str, answer: &Answer) -> bool {
    match (task, answer) {
        (Task::Classification, Answer::Binary(yes)) => *yes,
        (Task::Retrieval, Answer::WordList(words)) => {
            let target = tokenize(target_word);
            words.iter().any(|w| tokenize(w) == target)
        }
        _ => false,
    }
}

pub fn outcome(task: Task, target_word: &str, gold: Label, answer: &Answer) -> Outcome {
    match (gold, predicts_positive(task, target_word, answer)) {
        (Label::Positive, true) => Outcome::TP,
        (Label::Positive, false) => Outcome::FN,
        (Label::Negative, true) => Outcome::FP,
        (Label::Negative, false) => Outcome::TN,
    }
}

pub fn record_outcome(r: &EvalRecord) -> Outcome {
    outcome(r.task, &r.target_word, r.gold_label, &r.predicted.answer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub task: Task,
    pub platform: String,
    pub framing: Framing,
    pub variant: Variant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub n_refusals: usize,
    pub n_parse_failures: usize,
}

fn single<'a, T: PartialEq + ?Sized>(mut it: impl Iterator<Item = &'a T>, name: &'static str) -> Result<&'a T, ScoringError> {
    let first = it.next().ok_or(ScoringError::Empty)?;
    if it.all(|x| x == first) {
        Ok(first)
    } else {
        Err(ScoringError::MixedCell(name))
    }
}

/// Scores results from one (model, task, platform, framing) cell.
pub fn score_binary(results: &[EvalRecord], variant: Variant) -> Result<MetricReport, ScoringError> {
    let model = single(results.iter().map(|r| r.model.as_str()), "model")?;
    let task = *single(results.iter().map(|r| &r.task), "task")?;
    let platform = single(results.iter().map(|r| r.platform.as_str()), "platform")?;
    let framing = *single(results.iter().map(|r| &r.framing), "framing")?;
    if task == Task::Decoding {
        return Err(ScoringError::NotBinary(task));
    }
    let mut confusion = Confusion::default();
    let (mut n_refusals, mut n_parse_failures) = (0, 0);
    for r in results {
        confusion.add(record_outcome(r));
        match r.predicted.answer {
            Answer::Refusal => n_refusals += 1,
            Answer::ParseFailure => n_parse_failures += 1,
            _ => {}
        }
    }
    let (precision, recall, f1) = (confusion.precision(), confusion.recall(), confusion.f1());
    debug_assert!(precision + recall == 0.0 || (f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-12);
    Ok(MetricReport {
        model: model.to_string(),
        task,
        platform: platform.to_string(),
        framing,
        variant,
        precision,
        recall,
        f1,
        confusion,
        n_refusals,
        n_parse_failures,
    })
}

/// Full and ablated reports for every binary-task cell, in sorted cell
/// order.
pub fn score_all(results: &[EvalRecord], morphemes: &[&str]) -> Result<Vec<MetricReport>, ScoringError> {
    let mut cells: BTreeMap<(String, Task, String, Framing), Vec<EvalRecord>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.task != Task::Decoding) {
        cells.entry((r.model.clone(), r.task, r.platform.clone(), r.framing)).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for records in cells.values() {
        out.push(score_binary(records, Variant::Full)?);
        let ablated = ablate_results(records, morphemes)?;
        if !ablated.is_empty() {
            out.push(score_binary(&ablated, Variant::CommonMorphemesExcluded)?);
        }
    }
    Ok(out)
}

pub const COMMON_MORPHEMES: [&str; 7] = ["pill", "mog", "maxx", "cel", "chad", "cuck", "oid"];

pub fn has_morpheme(word: &str, morphemes: &[&str]) -> bool {
    let w = word.to_lowercase();
    morphemes.iter().any(|m| w.contains(&m.to_lowercase()))
}

fn ablate<T: Clone>(items: &[T], morphemes: &[&str], key: impl Fn(&T) -> (Label, &str)) -> Result<Vec<T>, ScoringError> {
    if morphemes.is_empty() {
        return Err(ScoringError::NoMorphemes);
    }
    Ok(items
        .iter()
        .filter(|it| {
            let (label, word) = key(it);
            label == Label::Negative || !has_morpheme(word, morphemes)
        })
        .cloned()
        .collect())
}

/// Drops positives containing any of `morphemes`; negatives stay.
pub fn ablate_lexicon(entries: &[LexiconEntry], morphemes: &[&str]) -> Result<Vec<LexiconEntry>, ScoringError> {
    ablate(entries, morphemes, |e| (e.label, e.word.as_str()))
}

pub fn ablate_results(records: &[EvalRecord], morphemes: &[&str]) -> Result<Vec<EvalRecord>, ScoringError> {
    ablate(records, morphemes, |r| (r.gold_label, r.target_word.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictDistribution {
    pub platform: String,
    pub framing: Framing,
    pub n: usize,
    pub correct: f64,
    pub partially_correct: f64,
    pub incorrect: f64,
    pub no_answer: f64,
}

impl VerdictDistribution {
    pub fn fraction(&self, v: Verdict) -> f64 {
        match v {
            Verdict::Correct => self.correct,
            Verdict::PartiallyCorrect => self.partially_correct,
            Verdict::Incorrect => self.incorrect,
            Verdict::NoAnswer => self.no_answer,
        }
    }
}

/// Verdict shares per (platform, framing).
pub fn score_decoding(judgments: &[DecodingJudgment]) -> Vec<VerdictDistribution> {
    let mut counts: BTreeMap<(String, Framing), [usize; 4]> = BTreeMap::new();
    for j in judgments {
        let slot = Verdict::ALL.iter().position(|v| *v == j.verdict).unwrap_or(3);
        counts.entry((j.platform.clone(), j.framing)).or_default()[slot] += 1;
    }
    counts
        .into_iter()
        .map(|((platform, framing), c)| {
            let n: usize = c.iter().sum();
            VerdictDistribution {
                platform,
                framing,
                n,
                correct: ratio(c[0], n),
                partially_correct: ratio(c[1], n),
                incorrect: ratio(c[2], n),
                no_answer: ratio(c[3], n),
            }
        })
        .collect()
}

/// Cohen's kappa for two binary labelings.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64, ScoringError> {
    if a.len() != b.len() {
        return Err(ScoringError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(ScoringError::TooShort);
    }
    let n = a.len() as f64;
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    let neither = a.iter().zip(b).filter(|(x, y)| !**x && !**y).count() as f64;
    let pa = a.iter().filter(|x| **x).count() as f64 / n;
    let pb = b.iter().filter(|x| **x).count() as f64 / n;
    let p_o = (both + neither) / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(ScoringError::UndefinedKappa);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub model: String,
    pub platform: String,
    pub framing: Framing,
    pub n_shared: usize,
    pub n_matching: usize,
    pub fraction: f64,
}

/// Share of shared targets on which two tasks' predicted labels agree,
/// per (model, platform, framing).
pub fn cross_task_agreement(first: &[EvalRecord], second: &[EvalRecord]) -> Result<Vec<Agreement>, ScoringError> {
    type Key = (String, String, Framing);
    let index = |records: &[EvalRecord]| {
        let mut m: BTreeMap<Key, BTreeMap<String, bool>> = BTreeMap::new();
        for r in records {
            let positive = predicts_positive(r.task, &r.target_word, &r.predicted.answer);
            m.entry((r.model.clone(), r.platform.clone(), r.framing)).or_default().insert(r.target_word.clone(), positive);
        }
        m
    };
    let (a, b) = (index(first), index(second));
    let mut out = Vec::new();
    for (key, left) in &a {
        let Some(right) = b.get(key) else { continue };
        let shared: BTreeSet<&String> = left.keys().filter(|w| right.contains_key(*w)).collect();
        if shared.is_empty() {
            continue;
        }
        let n_matching = shared.iter().filter(|w| left[**w] == right[**w]).count();
        out.push(Agreement {
            model: key.0.clone(),
            platform: key.1.clone(),
            framing: key.2,
            n_shared: shared.len(),
            n_matching,
            fraction: ratio(n_matching, shared.len()),
        });
    }
    if out.is_empty() {
        return Err(ScoringError::NoOverlap);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub n_positive: usize,
    pub n_negative: usize,
    /// Says yes with probability 1/2.
    pub fair_coin: ExpectedMetrics,
    /// Says yes with probability equal to the positive share.
    pub class_prior: ExpectedMetrics,
    pub all_positive: ExpectedMetrics,
}

/// Binomial(n, q) probabilities, trimmed to where they are non-negligible.
/// Returns the first k kept and the probabilities from there on.
fn binomial_pmf(n: usize, q: f64) -> (usize, Vec<f64>) {
    if q <= 0.0 {
        return (0, vec![1.0]);
    }
    if q >= 1.0 {
        return (n, vec![1.0]);
    }
    let (lq, lp) = (q.ln(), (1.0 - q).ln());
    let mut logs = Vec::with_capacity(n + 1);
    let mut l = n as f64 * lp;
    logs.push(l);
    for k in 1..=n {
        l += ((n - k + 1) as f64 / k as f64).ln() + lq - lp;
        logs.push(l);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = logs.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let first = probs.iter().position(|&p| p > 1e-17).unwrap_or(0);
    let last = probs.iter().rposition(|&p| p > 1e-17).unwrap_or(n);
    (first, probs[first..=last].iter().map(|p| p / total).collect())
}

/// Exact expected precision, recall and F1 of a predictor that answers
/// yes independently with probability `q`.
pub fn expected_random_metrics(n_positive: usize, n_negative: usize, q: f64) -> ExpectedMetrics {
    let (tp0, tp_pmf) = binomial_pmf(n_positive, q);
    let (fp0, fp_pmf) = binomial_pmf(n_negative, q);
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for (i, &p_tp) in tp_pmf.iter().enumerate() {
        let tp = (tp0 + i) as f64;
        recall += p_tp * ratio(tp0 + i, n_positive);
        for (j, &p_fp) in fp_pmf.iter().enumerate() {
            let fp = (fp0 + j) as f64;
            let p = p_tp * p_fp;
            if tp > 0.0 {
                precision += p * tp / (tp + fp);
                f1 += p * 2.0 * tp / (tp + fp + n_positive as f64);
            }
        }
    }
    ExpectedMetrics { precision, recall, f1 }
}

pub fn random_baseline(n_positive: usize, n_negative: usize) -> Result<BaselineReport, ScoringError> {
    if n_positive == 0 || n_negative == 0 {
        return Err(ScoringError::OneClass);
    }
    let prior = n_positive as f64 / (n_positive + n_negative) as f64;
    Ok(BaselineReport {
        n_positive,
        n_negative,
        fair_coin: expected_random_metrics(n_positive, n_negative, 0.5),
        class_prior: expected_random_metrics(n_positive, n_negative, prior),
        all_positive: ExpectedMetrics {
            precision: prior,
            recall: 1.0,
            f1: f1_from(prior, 1.0),
        },
    })
}

pub fn suite_baseline(cases: &[TestCase]) -> Result<BaselineReport, ScoringError> {
    let pos = cases.iter().filter(|c| c.gold_label == Label::Positive).count();
    random_baseline(pos, cases.len() - pos)
}
