use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Post};

/// Maps canonical post fields onto the field names of a particular dump.
/// Dotted names address nested objects (`"meta.author"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub post_id: String,
    pub thread_id: String,
    pub user_id: String,
    pub platform: String,
    pub subforum: String,
    pub timestamp: String,
    pub text: String,
    /// Used when a record has no platform field.
    pub default_platform: Option<String>,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            post_id: "post_id".into(),
            thread_id: "thread_id".into(),
            user_id: "user_id".into(),
            platform: "platform".into(),
            subforum: "subforum".into(),
            timestamp: "timestamp".into(),
            text: "text".into(),
            default_platform: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Non-blank input lines.
    pub records: usize,
    pub ingested: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub first_problem: Option<String>,
}

fn lookup<'a>(record: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(record, |v, key| v.get(key))
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn earliest_allowed() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(1990, 1, 1, 0, 0, 0).unwrap()
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC), bare dates and integer
/// Unix seconds.
pub(crate) fn parse_timestamp(v: &Value) -> Result<DateTime<Utc>, String> {
    let parsed = match v {
        Value::Number(n) => n
            .as_i64()
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .ok_or_else(|| format!("bad unix timestamp {n}"))?,
        Value::String(s) => {
            let s = s.trim();
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                dt.with_timezone(&Utc)
            } else if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
                Utc.from_utc_datetime(&dt)
            } else if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
                Utc.from_utc_datetime(&dt)
            } else if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
                Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap())
            } else if let Ok(secs) = s.parse::<i64>() {
                Utc.timestamp_opt(secs, 0)
                    .single()
                    .ok_or_else(|| format!("bad unix timestamp {s}"))?
            } else {
                return Err(format!("unparseable timestamp {s:?}"));
            }
        }
        other => return Err(format!("timestamp has unsupported type: {other}")),
    };
    if parsed < earliest_allowed() || parsed > Utc::now() {
        return Err(format!("timestamp {parsed} outside [1990-01-01, now]"));
    }
    Ok(parsed)
}

fn parse_record(line: &str, schema: &SchemaMap) -> Result<Post, String> {
    let record: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let required = |field: &str| -> Result<String, String> {
        lookup(&record, field)
            .and_then(scalar_string)
            .ok_or_else(|| format!("missing field {field:?}"))
    };
    let optional = |field: &str| lookup(&record, field).and_then(scalar_string);

    let text = required(&schema.text)?;
    let user_id = required(&schema.user_id)?;
    let timestamp = parse_timestamp(lookup(&record, &schema.timestamp).ok_or_else(|| format!("missing field {:?}", schema.timestamp))?)?;
    let platform = optional(&schema.platform)
        .or_else(|| schema.default_platform.clone())
        .unwrap_or_else(|| "unknown".to_string());
    let post_id = optional(&schema.post_id).unwrap_or_else(|| crate::digest::sha256_hex(line.as_bytes())[..16].to_string());

    Ok(Post {
        post_id,
        thread_id: optional(&schema.thread_id).unwrap_or_default(),
        user_id,
        platform,
        subforum: optional(&schema.subforum).unwrap_or_default(),
        timestamp,
        text,
    })
}

/// Reads one JSON object per line. Malformed records are skipped and
/// counted; more than half malformed is a schema error.
pub fn ingest_posts<R: BufRead>(reader: R, schema: &SchemaMap) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        match parse_record(&line, schema) {
            Ok(post) => {
                if seen.insert(post.post_id.clone()) {
                    posts.push(post);
                } else {
                    report.duplicates += 1;
                }
            }
            Err(problem) => {
                report.malformed += 1;
                if report.first_problem.is_none() {
                    report.first_problem = Some(format!("record {}: {problem}", report.records));
                }
            }
        }
    }
    if report.malformed * 2 > report.records {
        return Err(CorpusError::Schema {
            records: report.records,
            malformed: report.malformed,
            first: report.first_problem.unwrap_or_default(),
        });
    }
    report.ingested = posts.len();
    if report.malformed > 0 {
        log::warn!("skipped {} malformed records ({})", report.malformed, report.first_problem.as_deref().unwrap_or(""));
    }
    Ok((Corpus { posts }, report))
}

/// Like [`ingest_posts`], reading from a file. Gzip input is detected by
/// its magic bytes.
pub fn ingest_path(path: &Path, schema: &SchemaMap) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        ingest_posts(BufReader::new(MultiGzDecoder::new(file)), schema)
    } else {
        ingest_posts(BufReader::new(file), schema)
    }
}
