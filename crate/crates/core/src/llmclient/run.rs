use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{AnswerParser, ChatModel, ChatRequest, ExpectedKind, Journal, JournalEntry, LlmError, ParsedAnswer};
use crate::digest::sha256_hex;
use crate::evalgen::{Framing, Label, Task, TestCase};
use crate::prompts::{render_prompt, TemplateSet};

/// A parsed reply to one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub model: String,
    pub task: Task,
    pub platform: String,
    pub framing: Framing,
    pub target_word: String,
    pub gold_label: Label,
    pub predicted: ParsedAnswer,
    /// Set when no reply could be obtained; `predicted` is then a parse
    /// failure with empty raw text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub parser: AnswerParser,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            parser: AnswerParser::default(),
        }
    }
}

fn request_for(case: &TestCase, templates: &TemplateSet) -> Result<ChatRequest, LlmError> {
    Ok(ChatRequest {
        case_id: case.case_id.clone(),
        task: case.task,
        platform: case.platform.clone(),
        framing: case.framing,
        target_word: case.target_word.clone(),
        gold_label: case.gold_label,
        carrier_post: case.carrier_post.clone(),
        prompt: render_prompt(case, templates)?,
    })
}

fn run_one(case: &TestCase, request: &ChatRequest, model: &dyn ChatModel, journal: Option<&Journal>, parser: &AnswerParser) -> Result<EvalRecord, LlmError> {
    let started_at = Utc::now();
    let clock = Instant::now();
    let outcome = model.complete(request);
    let latency_ms = clock.elapsed().as_millis() as u64;
    let (raw, attempts, error) = match outcome {
        Ok(c) => (Some(c.text), c.attempts, None),
        Err(e @ (LlmError::Config(_) | LlmError::Request { .. } | LlmError::Prompt(_) | LlmError::Journal(_))) => return Err(e),
        Err(e) => {
            log::error!("{}: {e}", case.case_id);
            (None, Vec::new(), Some(e.to_string()))
        }
    };
    if let Some(j) = journal {
        j.append(&JournalEntry {
            case_id: case.case_id.clone(),
            model: model.name().to_string(),
            prompt_sha256: sha256_hex(request.prompt.as_bytes()),
            prompt: request.prompt.clone(),
            raw_reply: raw.clone(),
            error: error.clone(),
            started_at,
            finished_at: Utc::now(),
            latency_ms,
            attempts,
        })?;
    }
    Ok(EvalRecord {
        case_id: case.case_id.clone(),
        model: model.name().to_string(),
        task: case.task,
        platform: case.platform.clone(),
        framing: case.framing,
        target_word: case.target_word.clone(),
        gold_label: case.gold_label,
        predicted: parser.parse(raw.as_deref().unwrap_or(""), ExpectedKind::from(case.task)),
        error,
    })
}

/// Renders, sends and parses every case. Records come back in case order
/// whatever the number of workers.
pub fn run_suite(
    cases: &[TestCase],
    templates: &TemplateSet,
    model: &dyn ChatModel,
    journal: Option<&Journal>,
    options: &RunOptions,
) -> Result<Vec<EvalRecord>, LlmError> {
    let requests = cases.iter().map(|c| request_for(c, templates)).collect::<Result<Vec<_>, _>>()?;
    let workers = options.workers.clamp(1, cases.len().max(1));
    if workers == 1 {
        return cases
            .iter()
            .zip(&requests)
            .map(|(c, r)| run_one(c, r, model, journal, &options.parser))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<EvalRecord, LlmError>>>> = Mutex::new((0..cases.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cases.len() {
                    break;
                }
                let r = run_one(&cases[i], &requests[i], model, journal, &options.parser);
                let failed = r.is_err();
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                if failed {
                    next.store(cases.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut out = Vec::with_capacity(cases.len());
    for slot in slots {
        match slot {
            Some(r) => out.push(r?),
            None => continue,
        }
    }
    Ok(out)
}

pub fn write_results<W: Write>(records: &[EvalRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_results<R: BufRead>(reader: R) -> std::io::Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::{Answer, MockModel, MockScript};

    fn cases(n: usize) -> Vec<TestCase> {
        (0..n)
            .map(|i| TestCase {
                case_id: format!("classification-incels-definition-w{i}"),
                task: Task::Classification,
                target_word: format!("w{}", "x".repeat(i)),
                platform: "incels".into(),
                gold_label: if i % 3 == 0 { Label::Positive } else { Label::Negative },
                framing: Framing::Definition,
                example_posts: vec![],
                carrier_post: None,
                shortage: false,
            })
            .collect()
    }

    #[test]
    fn ground_truth_mock_answers_gold_and_journals_everything() {
        let dir = tempfile::tempdir().unwrap();
        let journal = Journal::open(&dir.path().join("j.jsonl")).unwrap();
        let model = MockModel::new("gt", MockScript::GroundTruth { positives: Default::default() });
        let cs = cases(30);
        let records = run_suite(&cs, &TemplateSet::builtin(), &model, Some(&journal), &RunOptions { workers: 4, ..Default::default() }).unwrap();
        assert_eq!(records.len(), 30);
        for (r, c) in records.iter().zip(&cs) {
            assert_eq!(r.case_id, c.case_id);
            assert_eq!(r.predicted.answer, Answer::Binary(c.gold_label == Label::Positive));
        }
        let entries = Journal::read(journal.path()).unwrap();
        assert_eq!(entries.len(), 30);
        for e in &entries {
            assert_eq!(e.prompt_sha256, sha256_hex(e.prompt.as_bytes()));
        }
        let mut buf = Vec::new();
        write_results(&records, &mut buf).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn missing_reply_becomes_an_error_record() {
        let model = MockModel::new(
            "partial",
            MockScript::Replies {
                replies: [("classification-incels-definition-w0".to_string(), "ANSWER: yes".to_string())].into(),
                default: None,
            },
        );
        let records = run_suite(&cases(2), &TemplateSet::builtin(), &model, None, &RunOptions::default()).unwrap();
        assert_eq!(records[0].predicted.answer, Answer::Binary(true));
        assert_eq!(records[1].predicted.answer, Answer::ParseFailure);
        assert!(records[1].error.is_some());
    }
}
