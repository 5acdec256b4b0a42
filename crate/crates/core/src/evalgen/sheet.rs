use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalGenError, Framing};
use crate::digest::derive_seed;

const BOM: &[u8] = "\u{feff}".as_bytes();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    PartiallyCorrect,
    Incorrect,
    NoAnswer,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::Correct, Verdict::PartiallyCorrect, Verdict::Incorrect, Verdict::NoAnswer];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::PartiallyCorrect => "partially_correct",
            Verdict::Incorrect => "incorrect",
            Verdict::NoAnswer => "no_answer",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    /// Accepts the canonical names and the labels annotators see.
    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s.trim().to_lowercase().replace(['_', '-'], " ").split_whitespace().collect::<Vec<_>>().join(" ");
        Ok(match norm.as_str() {
            "correct" | "accurate" | "accurate and complete" => Verdict::Correct,
            "partially correct" | "partial" => Verdict::PartiallyCorrect,
            "incorrect" | "inaccurate" => Verdict::Incorrect,
            "no answer" | "noanswer" => Verdict::NoAnswer,
            _ => return Err(format!("unknown verdict {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDefinition {
    pub case_id: String,
    pub framing: Framing,
    pub text: String,
    /// Written into the verdict column up front, e.g. `no_answer` for a
    /// refused request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefilled: Option<Verdict>,
}

/// All candidate definitions produced for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionSet {
    pub word: String,
    pub platform: String,
    pub definitions: Vec<CandidateDefinition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyCell {
    pub case_id: String,
    pub framing: Framing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRow {
    pub word: String,
    pub platform: String,
    /// `positions[i]` produced sheet column `def_{i+1}`.
    pub positions: Vec<KeyCell>,
}

/// Hidden mapping from shuffled sheet positions back to framings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationKey {
    pub seed: u64,
    pub definitions_per_word: usize,
    pub rows: Vec<KeyRow>,
}

impl AnnotationKey {
    pub fn load(path: &Path) -> Result<Self, EvalGenError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalGenError::Key(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| EvalGenError::Key(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String, EvalGenError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSheet {
    /// UTF-8 CSV with a byte-order mark.
    pub csv: Vec<u8>,
    pub key: AnnotationKey,
}

/// Builds a sheet with columns `word, def_1..def_N, verdict_1..verdict_N`,
/// shuffling each word's definitions independently.
pub fn export_annotation_sheet(sets: &[DefinitionSet], definitions_per_word: usize, seed: u64) -> Result<AnnotationSheet, EvalGenError> {
    let mut writer = csv::Writer::from_writer(BOM.to_vec());
    let mut header = vec!["word".to_string()];
    header.extend((1..=definitions_per_word).map(|i| format!("def_{i}")));
    header.extend((1..=definitions_per_word).map(|i| format!("verdict_{i}")));
    writer.write_record(&header)?;
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        if set.definitions.len() != definitions_per_word {
            return Err(EvalGenError::DefinitionCount {
                word: set.word.clone(),
                expected: definitions_per_word,
                got: set.definitions.len(),
            });
        }
        let mut order: Vec<usize> = (0..definitions_per_word).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{}/{}", set.platform, set.word)));
        order.shuffle(&mut rng);
        let mut record = vec![set.word.clone()];
        record.extend(order.iter().map(|&i| set.definitions[i].text.clone()));
        record.extend(order.iter().map(|&i| set.definitions[i].prefilled.map(|v| v.as_str().to_string()).unwrap_or_default()));
        writer.write_record(&record)?;
        rows.push(KeyRow {
            word: set.word.clone(),
            platform: set.platform.clone(),
            positions: order
                .iter()
                .map(|&i| KeyCell {
                    case_id: set.definitions[i].case_id.clone(),
                    framing: set.definitions[i].framing,
                })
                .collect(),
        });
    }
    let csv = writer.into_inner().map_err(|e| EvalGenError::Io(e.into_error()))?;
    Ok(AnnotationSheet {
        csv,
        key: AnnotationKey {
            seed,
            definitions_per_word,
            rows,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingJudgment {
    pub case_id: String,
    pub word: String,
    pub platform: String,
    pub framing: Framing,
    pub definition_text: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportOutcome {
    pub judgments: Vec<DecodingJudgment>,
    pub row_errors: Vec<RowError>,
}

/// Re-attaches filled-in verdicts to their framings. Bad rows are reported
/// and skipped; a sheet that does not match the key is an error.
pub fn import_judgments<R: Read>(mut sheet: R, key: &AnnotationKey) -> Result<ImportOutcome, EvalGenError> {
    let mut bytes = Vec::new();
    sheet.read_to_end(&mut bytes)?;
    let body = bytes.strip_prefix(BOM).unwrap_or(&bytes);
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body);
    let header = reader.headers()?.clone();
    let n = key.definitions_per_word;
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let word_col = column("word").ok_or_else(|| EvalGenError::Key("sheet has no word column".into()))?;
    let mut def_cols = Vec::with_capacity(n);
    let mut verdict_cols = Vec::with_capacity(n);
    for i in 1..=n {
        def_cols.push(column(&format!("def_{i}")).ok_or_else(|| EvalGenError::Key(format!("sheet has no def_{i} column")))?);
        verdict_cols.push(column(&format!("verdict_{i}")).ok_or_else(|| EvalGenError::Key(format!("sheet has no verdict_{i} column")))?);
    }

    let mut out = ImportOutcome::default();
    let mut seen = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        seen += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(RowError { row, message: e.to_string() });
                continue;
            }
        };
        let Some(key_row) = key.rows.get(i) else {
            out.row_errors.push(RowError {
                row,
                message: "row is not in the key".into(),
            });
            continue;
        };
        let word = record.get(word_col).unwrap_or("").trim();
        if word != key_row.word {
            out.row_errors.push(RowError {
                row,
                message: format!("word {word:?} does not match key word {:?}", key_row.word),
            });
            continue;
        }
        let mut parsed = Vec::with_capacity(n);
        let mut errors = Vec::new();
        for (pos, cell) in key_row.positions.iter().enumerate() {
            let raw = record.get(verdict_cols[pos]).unwrap_or("");
            match raw.parse::<Verdict>() {
                Ok(v) => parsed.push(DecodingJudgment {
                    case_id: cell.case_id.clone(),
                    word: key_row.word.clone(),
                    platform: key_row.platform.clone(),
                    framing: cell.framing,
                    definition_text: record.get(def_cols[pos]).unwrap_or("").to_string(),
                    verdict: v,
                }),
                Err(e) => errors.push(format!("verdict_{}: {e}", pos + 1)),
            }
        }
        if errors.is_empty() {
            out.judgments.extend(parsed);
        } else {
            out.row_errors.push(RowError { row, message: errors.join("; ") });
        }
    }
    if seen < key.rows.len() {
        return Err(EvalGenError::Key(format!("sheet has {seen} rows but the key lists {}", key.rows.len())));
    }
    Ok(out)
}
