use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InductionConfig, InductionError, TrainingSet, UsageEvent};

/// Temporal user and word vectors in one `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub platform: String,
    pub dim: usize,
    pub users: Vec<String>,
    pub vocabulary: Vec<String>,
    pub years: Vec<i32>,
    user_vectors: Vec<f32>,
    word_vectors: Vec<f32>,
}

impl EmbeddingSpace {
    /// `user_vectors` is `users × dim`, `word_vectors` is
    /// `years × vocabulary × dim`, both row-major.
    pub fn new(
        platform: String,
        dim: usize,
        users: Vec<String>,
        vocabulary: Vec<String>,
        years: Vec<i32>,
        user_vectors: Vec<f32>,
        word_vectors: Vec<f32>,
    ) -> Result<Self, InductionError> {
        if dim == 0 {
            return Err(InductionError::Format("dimension must be positive".into()));
        }
        if user_vectors.len() != users.len() * dim {
            return Err(InductionError::Format(format!(
                "expected {} user components, got {}",
                users.len() * dim,
                user_vectors.len()
            )));
        }
        if word_vectors.len() != years.len() * vocabulary.len() * dim {
            return Err(InductionError::Format(format!(
                "expected {} word components, got {}",
                years.len() * vocabulary.len() * dim,
                word_vectors.len()
            )));
        }
        if !user_vectors.iter().chain(&word_vectors).all(|v| v.is_finite()) {
            return Err(InductionError::Format("non-finite vector component".into()));
        }
        Ok(EmbeddingSpace {
            platform,
            dim,
            users,
            vocabulary,
            years,
            user_vectors,
            word_vectors,
        })
    }

    pub fn user_vector(&self, user: usize) -> &[f32] {
        &self.user_vectors[user * self.dim..(user + 1) * self.dim]
    }

    pub fn word_vector(&self, year_index: usize, word: usize) -> &[f32] {
        let row = year_index * self.vocabulary.len() + word;
        &self.word_vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    pub fn user_vector_by_id(&self, user_id: &str) -> Option<&[f32]> {
        let i = self.users.binary_search_by(|u| u.as_str().cmp(user_id)).ok()?;
        Some(self.user_vector(i))
    }

    pub fn word_vector_at(&self, year: i32, word: &str) -> Option<&[f32]> {
        let t = self.year_index(year)?;
        let w = self.vocabulary.binary_search_by(|v| v.as_str().cmp(word)).ok()?;
        Some(self.word_vector(t, w))
    }

    pub(crate) fn raw_user_vectors(&self) -> &[f32] {
        &self.user_vectors
    }

    pub(crate) fn raw_word_vectors(&self) -> &[f32] {
        &self.word_vectors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub n_train_events: usize,
    pub n_validation_events: usize,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-row AdamW state with lazy (touched-rows-only) updates.
struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    lr: f32,
    weight_decay: f32,
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const EPS: f32 = 1e-8;

impl AdamW {
    fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr: lr as f32,
            weight_decay: weight_decay as f32,
        }
    }

    fn update_row(&mut self, params: &mut [f32], grads: &[f32], offset: usize, step: i32) {
        let bc1 = 1.0 - BETA1.powi(step);
        let bc2 = 1.0 - BETA2.powi(step);
        for i in 0..grads.len() {
            let j = offset + i;
            let g = grads[i];
            self.m[j] = BETA1 * self.m[j] + (1.0 - BETA1) * g;
            self.v[j] = BETA2 * self.v[j] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            params[j] -= self.lr * (m_hat / (v_hat.sqrt() + EPS) + self.weight_decay * params[j]);
        }
    }
}

/// Sparse gradient accumulator over a flat parameter array.
struct Grad {
    values: Vec<f32>,
    touched: Vec<usize>,
    is_touched: Vec<bool>,
    dim: usize,
}

impl Grad {
    fn new(rows: usize, dim: usize) -> Self {
        Grad {
            values: vec![0.0; rows * dim],
            touched: Vec::new(),
            is_touched: vec![false; rows],
            dim,
        }
    }

    fn row_mut(&mut self, row: usize) -> &mut [f32] {
        if !self.is_touched[row] {
            self.is_touched[row] = true;
            self.touched.push(row);
        }
        &mut self.values[row * self.dim..(row + 1) * self.dim]
    }

    fn apply(&mut self, params: &mut [f32], opt: &mut AdamW, step: i32) {
        for &row in &self.touched {
            let range = row * self.dim..(row + 1) * self.dim;
            opt.update_row(params, &self.values[range.clone()], range.start, step);
            self.values[range].iter_mut().for_each(|g| *g = 0.0);
            self.is_touched[row] = false;
        }
        self.touched.clear();
    }
}

fn axpy(out: &mut [f32], a: f32, x: &[f32]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

struct Model {
    dim: usize,
    n_vocab: usize,
    n_years: usize,
    users: Vec<f32>,
    words: Vec<f32>,
    /// Activity and frequency offsets, kept out of the vectors so that
    /// vector directions carry only user–word association.
    user_bias: Vec<f32>,
    word_bias: Vec<f32>,
    /// Weight of each sampled negative, before the event count.
    neg_weight: f32,
    temporal: f32,
    l2: f32,
}

impl Model {
    fn user(&self, u: usize) -> &[f32] {
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    fn word_row(&self, t: usize, w: usize) -> usize {
        t * self.n_vocab + w
    }

    fn word(&self, row: usize) -> &[f32] {
        &self.words[row * self.dim..(row + 1) * self.dim]
    }

    fn score(&self, u: usize, row: usize) -> f32 {
        dot(self.user(u), self.word(row)) + self.user_bias[u] + self.word_bias[row]
    }

    /// Data loss for one event with the given negatives.
    fn event_loss(&self, e: &UsageEvent, negatives: &[u32]) -> f64 {
        let u = e.user as usize;
        let t = e.snapshot as usize;
        let n = e.count as f64;
        let pos = self.score(u, self.word_row(t, e.word as usize)) as f64;
        let mut loss = -n * log_sigmoid(pos);
        for &neg in negatives {
            let x = self.score(u, self.word_row(t, neg as usize)) as f64;
            loss -= n * self.neg_weight as f64 * log_sigmoid(-x);
        }
        loss
    }

    /// Gradient of the regularizer with respect to one word row.
    fn word_reg_grad(&self, t: usize, w: usize, scale: f32, out: &mut [f32]) {
        let row = self.word_row(t, w);
        let own = self.word(row);
        for (o, &p) in out.iter_mut().zip(own) {
            *o += scale * self.l2 * p;
        }
        let mut neighbour = |other: usize| {
            let o_vec = &self.words[other * self.dim..(other + 1) * self.dim];
            for ((o, &p), &q) in out.iter_mut().zip(own).zip(o_vec) {
                *o += scale * self.temporal * (p - q);
            }
        };
        if t > 0 {
            neighbour(self.word_row(t - 1, w));
        }
        if t + 1 < self.n_years {
            neighbour(self.word_row(t + 1, w));
        }
    }
}

/// Trains user and per-snapshot word vectors with AdamW on a
/// negative-sampling objective plus temporal smoothing and L2 penalties.
/// Deterministic for a fixed seed.
pub fn train_embeddings(set: &TrainingSet, config: &InductionConfig) -> Result<(EmbeddingSpace, TrainingLog), InductionError> {
    config.validate()?;
    if set.events.is_empty() || set.users.is_empty() || set.vocabulary.is_empty() {
        return Err(InductionError::EmptyModel("usage events"));
    }
    let dim = config.dim;
    let n_users = set.users.len();
    let n_vocab = set.vocabulary.len();
    let n_years = set.years.len();
    let k = config.negative_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // initialization: every snapshot copy of a word starts from the same vector
    let scale = 0.5 / dim as f32;
    let users: Vec<f32> = (0..n_users * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    let base: Vec<f32> = (0..n_vocab * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    let mut words = Vec::with_capacity(n_years * n_vocab * dim);
    for _ in 0..n_years {
        words.extend_from_slice(&base);
    }

    // held-out usage events for early stopping
    let mut order: Vec<usize> = (0..set.events.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((set.events.len() as f64 * config.validation_fraction).ceil() as usize).min(set.events.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    if train_idx.is_empty() {
        return Err(InductionError::EmptyModel("training events"));
    }

    // unigram^alpha noise distribution over training counts
    let mut word_counts = vec![0f64; n_vocab];
    for &i in &train_idx {
        let e = &set.events[i];
        word_counts[e.word as usize] += e.count as f64;
    }
    let noise_weights: Vec<f64> = word_counts.iter().map(|&c| c.powf(config.noise_exponent)).collect();
    let noise_total: f64 = noise_weights.iter().sum();
    let noise = WeightedIndex::new(noise_weights.iter().map(|&w| w.max(1e-12)))
        .map_err(|e| InductionError::Config(format!("noise distribution: {e}")))?;

    // expected per-epoch occurrences of each row, used to spread the
    // regularizer gradient over the rows' appearances in minibatches
    let mut user_occ = vec![0f32; n_users];
    let mut word_occ = vec![0f32; n_years * n_vocab];
    let mut events_per_year = vec![0f32; n_years];
    for &i in &train_idx {
        let e = &set.events[i];
        user_occ[e.user as usize] += 1.0;
        word_occ[e.snapshot as usize * n_vocab + e.word as usize] += 1.0;
        events_per_year[e.snapshot as usize] += 1.0;
    }
    for t in 0..n_years {
        for w in 0..n_vocab {
            word_occ[t * n_vocab + w] += k as f32 * events_per_year[t] * (noise_weights[w] / noise_total) as f32;
        }
    }

    let mut model = Model {
        user_bias: vec![0.0; n_users],
        word_bias: vec![0.0; n_years * n_vocab],
        dim,
        n_vocab,
        n_years,
        users,
        words,
        neg_weight: (config.negative_weight * n_vocab as f64 / k as f64) as f32,
        temporal: config.temporal_weight as f32,
        l2: config.l2_weight as f32,
    };

    let val_events: Vec<UsageEvent> = val_idx.iter().map(|&i| set.events[i]).collect();
    let val_negatives: Vec<u32> = (0..val_events.len() * k).map(|_| noise.sample(&mut rng) as u32).collect();
    let val_tokens: f64 = val_events.iter().map(|e| e.count as f64).sum();
    let validation_loss = |model: &Model| -> f64 {
        let total: f64 = val_events
            .iter()
            .enumerate()
            .map(|(i, e)| model.event_loss(e, &val_negatives[i * k..(i + 1) * k]))
            .sum();
        total / val_tokens
    };

    let mut user_opt = AdamW::new(model.users.len(), config.learning_rate, config.weight_decay);
    let mut word_opt = AdamW::new(model.words.len(), config.learning_rate, config.weight_decay);
    let mut user_grad = Grad::new(n_users, dim);
    let mut word_grad = Grad::new(n_years * n_vocab, dim);
    let mut user_bias_opt = AdamW::new(n_users, config.learning_rate, 0.0);
    let mut word_bias_opt = AdamW::new(n_years * n_vocab, config.learning_rate, 0.0);
    let mut user_bias_grad = Grad::new(n_users, 1);
    let mut word_bias_grad = Grad::new(n_years * n_vocab, 1);
    let batch = config.batch_size;
    let inv_batch = 1.0 / batch as f32;
    let mut step: i32 = 0;
    let mut negatives = vec![0u32; k];
    let mut scratch = vec![0f32; dim];

    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        n_train_events: train_idx.len(),
        n_validation_events: val_events.len(),
    };
    let mut best_loss = validation_loss(&model);
    let mut best_params = (model.users.clone(), model.words.clone());
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        let mut epoch_tokens = 0f64;
        for chunk in train_idx.chunks(batch) {
            step = step.saturating_add(1);
            for &i in chunk {
                let e = set.events[i];
                let u = e.user as usize;
                let t = e.snapshot as usize;
                let n = e.count as f32;
                for slot in negatives.iter_mut() {
                    *slot = noise.sample(&mut rng) as u32;
                }
                epoch_loss += model.event_loss(&e, &negatives);
                epoch_tokens += e.count as f64;

                let pos_row = model.word_row(t, e.word as usize);
                let x = model.score(u, pos_row);
                let g = -n * sigmoid(-x) * inv_batch;
                scratch.iter_mut().for_each(|s| *s = 0.0);
                axpy(&mut scratch, g, model.word(pos_row));
                axpy(word_grad.row_mut(pos_row), g, model.user(u));
                let mut user_bias_g = g;
                word_bias_grad.row_mut(pos_row)[0] += g;
                model.word_reg_grad(t, e.word as usize, inv_batch / word_occ[pos_row], word_grad.row_mut(pos_row));

                for &neg in &negatives {
                    let row = model.word_row(t, neg as usize);
                    let x = model.score(u, row);
                    let g = n * model.neg_weight * sigmoid(x) * inv_batch;
                    axpy(&mut scratch, g, model.word(row));
                    axpy(word_grad.row_mut(row), g, model.user(u));
                    user_bias_g += g;
                    word_bias_grad.row_mut(row)[0] += g;
                    model.word_reg_grad(t, neg as usize, inv_batch / word_occ[row], word_grad.row_mut(row));
                }

                let reg = model.l2 * inv_batch / user_occ[u];
                let user_row = user_grad.row_mut(u);
                axpy(user_row, 1.0, &scratch);
                axpy(user_row, reg, &model.users[u * dim..(u + 1) * dim]);
                user_bias_grad.row_mut(u)[0] += user_bias_g;
            }
            user_grad.apply(&mut model.users, &mut user_opt, step);
            word_grad.apply(&mut model.words, &mut word_opt, step);
            user_bias_grad.apply(&mut model.user_bias, &mut user_bias_opt, step);
            word_bias_grad.apply(&mut model.word_bias, &mut word_bias_opt, step);
        }

        let train_loss = epoch_loss / epoch_tokens.max(1.0);
        let val_loss = validation_loss(&model);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            let loss = if train_loss.is_finite() { val_loss } else { train_loss };
            return Err(InductionError::Divergence { epoch, loss });
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} validation {val_loss:.5}");

        if best_loss - val_loss >= config.early_stop_tolerance {
            best_loss = val_loss;
            best_params = (model.users.clone(), model.words.clone());
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    let (users, words) = best_params;
    let space = EmbeddingSpace::new(
        set.platform.clone(),
        dim,
        set.users.clone(),
        set.vocabulary.clone(),
        set.years.clone(),
        users,
        words,
    )?;
    Ok((space, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        d / (na * nb)
    }

    /// Two user groups, each with its own vocabulary, across two snapshots.
    fn two_group_set() -> TrainingSet {
        let users: Vec<String> = (0..20).map(|i| format!("u{i:02}")).collect();
        let vocabulary: Vec<String> = (0..20).map(|i| format!("w{i:02}")).collect();
        let mut events = Vec::new();
        for t in 0..2u32 {
            for u in 0..20u32 {
                let group = u / 10;
                for w in 0..20u32 {
                    if w / 10 == group {
                        events.push(UsageEvent {
                            snapshot: t,
                            user: u,
                            word: w,
                            count: 1 + (u + w + t) % 3,
                        });
                    }
                }
            }
        }
        TrainingSet {
            platform: "test".into(),
            years: vec![2018, 2019],
            users,
            vocabulary,
            events,
        }
    }

    fn quick_config() -> InductionConfig {
        InductionConfig {
            dim: 8,
            learning_rate: 0.02,
            max_epochs: 60,
            early_stop_patience: 60,
            early_stop_tolerance: 1e-6,
            batch_size: 16,
            negative_weight: 0.1,
            ..InductionConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let set = two_group_set();
        let (a, log_a) = train_embeddings(&set, &quick_config()).unwrap();
        let (b, log_b) = train_embeddings(&set, &quick_config()).unwrap();
        assert_eq!(a.raw_user_vectors(), b.raw_user_vectors());
        assert_eq!(a.raw_word_vectors(), b.raw_word_vectors());
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn groups_align_with_their_vocabulary() {
        let set = two_group_set();
        let (space, log) = train_embeddings(&set, &quick_config()).unwrap();
        assert!(log.epochs.last().unwrap().validation_loss < log.epochs[0].validation_loss);

        // co-occurrence oracle: a user's own-group words are exactly the
        // words with non-zero counts for that user
        let mut cooc = vec![vec![0u32; 20]; 20];
        for e in &set.events {
            cooc[e.user as usize][e.word as usize] += e.count;
        }
        let (mut own, mut other, mut n_own, mut n_other) = (0.0, 0.0, 0, 0);
        for u in 0..20 {
            for w in 0..20 {
                let c = cosine(space.user_vector(u), space.word_vector(1, w));
                if cooc[u][w] > 0 {
                    own += c;
                    n_own += 1;
                } else {
                    other += c;
                    n_other += 1;
                }
            }
        }
        let (own, other) = (own / n_own as f64, other / n_other as f64);
        assert!(own > other, "own {own} other {other}");
    }

    #[test]
    fn empty_set_is_error() {
        let mut set = two_group_set();
        set.events.clear();
        assert!(matches!(train_embeddings(&set, &quick_config()), Err(InductionError::EmptyModel(_))));
    }

    #[test]
    fn divergence_reports_epoch() {
        let set = two_group_set();
        let config = InductionConfig {
            learning_rate: 1e30,
            negative_weight: 1e30,
            ..quick_config()
        };
        match train_embeddings(&set, &config) {
            Err(InductionError::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn vectors_have_dim_components_and_are_finite() {
        let (space, _) = train_embeddings(&two_group_set(), &quick_config()).unwrap();
        for u in 0..space.users.len() {
            assert_eq!(space.user_vector(u).len(), 8);
        }
        assert!(space.word_vector_at(2019, "w05").unwrap().iter().all(|v| v.is_finite()));
        assert!(space.word_vector_at(2020, "w05").is_none());
    }
}
