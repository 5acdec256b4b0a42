//! Prompt rendering from per-(task, framing, platform) text templates.
//!
//! Templates live under `templates/<task>/<framing>/<platform>.txt`, with
//! `generic.txt` as the fallback for any platform and one shared
//! `templates/<task>/output_format.txt` per task. Placeholders are
//! `{target_word}`, `{post}`, `{posts}` and `{output_format}`.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::evalgen::{Framing, Task, TestCase};

pub const PLACEHOLDERS: [&str; 4] = ["target_word", "post", "posts", "output_format"];
pub const GENERIC: &str = "generic";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no template for {task}/{framing}/{platform}")]
    MissingTemplate { task: Task, framing: Framing, platform: String },
    #[error("no output format for {0}")]
    MissingOutputFormat(Task),
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("placeholder {{{0}}} has no value for this case")]
    Unbound(String),
    #[error("template file {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    bodies: BTreeMap<(Task, Framing, String), String>,
    output_formats: BTreeMap<Task, String>,
}

const BUILTIN: &[(Task, Framing, &str, &str)] = &[
    (Task::Classification, Framing::Definition, GENERIC, include_str!("../templates/classification/definition/generic.txt")),
    (Task::Classification, Framing::Instructions, "incels", include_str!("../templates/classification/instructions/incels.txt")),
    (Task::Classification, Framing::Instructions, "stormfront", include_str!("../templates/classification/instructions/stormfront.txt")),
    (Task::Classification, Framing::OneExample, "incels", include_str!("../templates/classification/one_example/incels.txt")),
    (Task::Classification, Framing::OneExample, "stormfront", include_str!("../templates/classification/one_example/stormfront.txt")),
    (Task::Classification, Framing::TenExamples, "incels", include_str!("../templates/classification/ten_examples/incels.txt")),
    (Task::Classification, Framing::TenExamples, "stormfront", include_str!("../templates/classification/ten_examples/stormfront.txt")),
    (Task::Retrieval, Framing::Definition, GENERIC, include_str!("../templates/retrieval/definition/generic.txt")),
    (Task::Retrieval, Framing::Instructions, "incels", include_str!("../templates/retrieval/instructions/incels.txt")),
    (Task::Retrieval, Framing::Instructions, "stormfront", include_str!("../templates/retrieval/instructions/stormfront.txt")),
    (Task::Decoding, Framing::Definition, GENERIC, include_str!("../templates/decoding/definition/generic.txt")),
    (Task::Decoding, Framing::Instructions, "incels", include_str!("../templates/decoding/instructions/incels.txt")),
    (Task::Decoding, Framing::Instructions, "stormfront", include_str!("../templates/decoding/instructions/stormfront.txt")),
    (Task::Decoding, Framing::OneExample, "incels", include_str!("../templates/decoding/one_example/incels.txt")),
    (Task::Decoding, Framing::OneExample, "stormfront", include_str!("../templates/decoding/one_example/stormfront.txt")),
    (Task::Decoding, Framing::TenExamples, "incels", include_str!("../templates/decoding/ten_examples/incels.txt")),
    (Task::Decoding, Framing::TenExamples, "stormfront", include_str!("../templates/decoding/ten_examples/stormfront.txt")),
];

const BUILTIN_OUTPUT_FORMATS: &[(Task, &str)] = &[
    (Task::Classification, include_str!("../templates/classification/output_format.txt")),
    (Task::Retrieval, include_str!("../templates/retrieval/output_format.txt")),
    (Task::Decoding, include_str!("../templates/decoding/output_format.txt")),
];

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let mut set = TemplateSet::default();
        for (task, framing, platform, body) in BUILTIN {
            set.insert(*task, *framing, platform, body);
        }
        for (task, text) in BUILTIN_OUTPUT_FORMATS {
            set.output_formats.insert(*task, text.trim_end().to_string());
        }
        set
    }

    /// Loads every template found under `dir`; unknown task or framing
    /// directories are ignored.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let load_err = |path: &Path, e: std::io::Error| PromptError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut set = TemplateSet::default();
        for &task in Task::ALL {
            let task_dir = dir.join(task.as_str());
            let fmt_path = task_dir.join("output_format.txt");
            if fmt_path.is_file() {
                let text = std::fs::read_to_string(&fmt_path).map_err(|e| load_err(&fmt_path, e))?;
                set.output_formats.insert(task, text.trim_end().to_string());
            }
            for &framing in Framing::ALL {
                let framing_dir = task_dir.join(framing.as_str());
                let Ok(entries) = std::fs::read_dir(&framing_dir) else { continue };
                for entry in entries {
                    let path = entry.map_err(|e| load_err(&framing_dir, e))?.path();
                    if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                        continue;
                    }
                    let Some(platform) = path.file_stem().and_then(|s| s.to_str()) else { continue };
                    let body = std::fs::read_to_string(&path).map_err(|e| load_err(&path, e))?;
                    set.insert(task, framing, platform, &body);
                }
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, task: Task, framing: Framing, platform: &str, body: &str) {
        self.bodies.insert((task, framing, platform.to_string()), body.to_string());
    }

    /// The platform's own template, else the generic one.
    pub fn template(&self, task: Task, framing: Framing, platform: &str) -> Option<&str> {
        self.bodies
            .get(&(task, framing, platform.to_string()))
            .or_else(|| self.bodies.get(&(task, framing, GENERIC.to_string())))
            .map(String::as_str)
    }

    pub fn output_format(&self, task: Task) -> Option<&str> {
        self.output_formats.get(&task).map(String::as_str)
    }
}

/// Collapses every whitespace run (newlines included) into one space so
/// each post occupies exactly one line of the prompt.
pub fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Substitutes placeholders in one left-to-right pass. Substituted text is
/// never rescanned, so braces inside posts are left alone. A `{` that does
/// not start a placeholder is copied verbatim.
pub fn fill_template(body: &str, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len() + 256);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after.find(|c: char| !(c.is_ascii_lowercase() || c == '_')).unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            if !PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnknownPlaceholder(name.to_string()));
            }
            let value = values.get(name).ok_or_else(|| PromptError::Unbound(name.to_string()))?;
            out.push_str(value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(case: &TestCase, templates: &TemplateSet) -> Result<String, PromptError> {
    let body = templates.template(case.task, case.framing, &case.platform).ok_or_else(|| PromptError::MissingTemplate {
        task: case.task,
        framing: case.framing,
        platform: case.platform.clone(),
    })?;
    let mut values = BTreeMap::new();
    values.insert("target_word", case.target_word.clone());
    values.insert(
        "output_format",
        templates.output_format(case.task).ok_or(PromptError::MissingOutputFormat(case.task))?.to_string(),
    );
    if let Some(post) = &case.carrier_post {
        values.insert("post", one_line(post));
    }
    if case.framing.n_examples() > 0 {
        let posts: Vec<String> = case.example_posts.iter().map(|p| one_line(p)).collect();
        values.insert("posts", posts.join("\n"));
    }
    fill_template(body, &values)
}
