use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Attempt, ChatModel, ChatRequest, Completion, LlmError};
use crate::corpus::tokenize;
use crate::digest::derive_seed;
use crate::evalgen::{Label, Task};

/// Offline stand-ins for a hosted model, loaded from JSON such as
/// `{"mode": "fair_coin", "seed": 7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockScript {
    /// Canned replies by case id.
    Replies {
        replies: BTreeMap<String, String>,
        #[serde(default)]
        default: Option<String>,
    },
    /// Answers every case correctly from its gold label. Retrieval replies
    /// also list any carrier-post tokens found in `positives`.
    GroundTruth {
        #[serde(default)]
        positives: BTreeSet<String>,
    },
    /// Independent fair coin per case, seeded by case id.
    FairCoin { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct MockModel {
    name: String,
    script: MockScript,
}

impl MockModel {
    pub fn new(name: &str, script: MockScript) -> Self {
        MockModel { name: name.into(), script }
    }

    fn reply(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let positive = req.gold_label == Label::Positive;
        Ok(match &self.script {
            MockScript::Replies { replies, default } => replies
                .get(&req.case_id)
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| LlmError::Response(format!("mock has no reply for {}", req.case_id)))?,
            MockScript::GroundTruth { positives } => match req.task {
                Task::Classification => format!("ANSWER: {}", if positive { "yes" } else { "no" }),
                Task::Retrieval => {
                    let mut words: Vec<String> = Vec::new();
                    for t in tokenize(req.carrier_post.as_deref().unwrap_or("")) {
                        let hit = if t == req.target_word { positive } else { positives.contains(&t) };
                        if hit && !words.contains(&t) {
                            words.push(t);
                        }
                    }
                    format!("ANSWER: [{}]", words.join(", "))
                }
                Task::Decoding => format!("ANSWER: In this community, {} is in-group slang.", req.target_word),
            },
            MockScript::FairCoin { seed } => {
                let heads = ChaCha8Rng::seed_from_u64(derive_seed(*seed, &req.case_id)).gen_bool(0.5);
                match (req.task, heads) {
                    (Task::Classification, h) => format!("ANSWER: {}", if h { "yes" } else { "no" }),
                    (Task::Retrieval, true) => format!("ANSWER: [{}]", req.target_word),
                    (Task::Retrieval, false) => "ANSWER: []".into(),
                    (Task::Decoding, true) => format!("ANSWER: A word meaning {}.", req.target_word),
                    (Task::Decoding, false) => "I can't help with that request.".into(),
                }
            }
        })
    }
}

impl ChatModel for MockModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        Ok(Completion {
            text: self.reply(request)?,
            attempts: vec![Attempt {
                status: Some(200),
                error: None,
                latency_ms: 0,
            }],
        })
    }
}
