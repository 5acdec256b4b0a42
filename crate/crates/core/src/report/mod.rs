//! Run manifests and the report bundle: plot data, tables, figures and a
//! machine-readable summary.

mod manifest;
mod plot;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalgen::{Framing, Task, Verdict};
use crate::scoring::{Agreement, BaselineReport, MetricReport, Variant, VerdictDistribution};

pub use manifest::{Artifact, ArtifactKind, RunManifest, RunRecord, MANIFEST_VERSION};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Baseline for one (task, platform) suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBaseline {
    pub task: Task,
    pub platform: String,
    pub baseline: BaselineReport,
}

/// Output of one scoring run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreBundle {
    pub metrics: Vec<MetricReport>,
    pub decoding: Vec<VerdictDistribution>,
    pub baselines: Vec<CellBaseline>,
    pub agreement: Vec<Agreement>,
}

impl ScoreBundle {
    pub fn merge(&mut self, other: ScoreBundle) {
        RunManifest::note(&mut self.metrics, other.metrics);
        RunManifest::note(&mut self.decoding, other.decoding);
        RunManifest::note(&mut self.baselines, other.baselines);
        RunManifest::note(&mut self.agreement, other.agreement);
    }

    fn sort(&mut self) {
        self.metrics.sort_by(|a, b| {
            (a.task, &a.platform, a.variant, &a.model, a.framing).cmp(&(b.task, &b.platform, b.variant, &b.model, b.framing))
        });
        self.decoding.sort_by(|a, b| (&a.platform, a.framing).cmp(&(&b.platform, b.framing)));
        self.baselines.sort_by(|a, b| (a.task, &a.platform).cmp(&(b.task, &b.platform)));
        self.agreement.sort_by(|a, b| (&a.model, &a.platform, a.framing).cmp(&(&b.model, &b.platform, b.framing)));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub path: String,
    pub kind: ArtifactKind,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportStatus {
    #[serde(rename = "complete")]
    Complete,
    #[serde(rename = "partial")]
    Partial,
    #[serde(rename = "nothing to report")]
    NothingToReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub model: String,
    pub platform: String,
    pub framing: Framing,
    pub variant: Variant,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarFigure {
    pub task: Task,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub verdict: Verdict,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub platform: String,
    pub framing: Framing,
    pub n: usize,
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFigure {
    pub stacks: Vec<Stack>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    /// Plot data file, relative to the bundle.
    pub data: String,
    pub images: Vec<String>,
    pub table: String,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub status: ReportStatus,
    pub sections: Vec<Section>,
    pub gaps: Vec<Gap>,
    pub scores: ScoreBundle,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), ReportError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn bar_figure(task: Task, metrics: &[MetricReport]) -> BarFigure {
    BarFigure {
        task,
        bars: metrics
            .iter()
            .filter(|m| m.task == task)
            .map(|m| Bar {
                model: m.model.clone(),
                platform: m.platform.clone(),
                framing: m.framing,
                variant: m.variant,
                f1: m.f1,
                precision: m.precision,
                recall: m.recall,
            })
            .collect(),
    }
}

pub fn stack_figure(decoding: &[VerdictDistribution]) -> StackFigure {
    StackFigure {
        stacks: decoding
            .iter()
            .map(|d| Stack {
                platform: d.platform.clone(),
                framing: d.framing,
                n: d.n,
                bands: Verdict::ALL
                    .iter()
                    .map(|&v| Band {
                        verdict: v,
                        percent: 100.0 * d.fraction(v),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Builds the bundle under `out_dir` from the score artifacts listed in
/// the manifest. Unreadable or altered inputs are reported as gaps and
/// left out. `summary.json` and all data files depend only on the inputs.
pub fn generate_report(manifest: &RunManifest, base: &Path, out_dir: &Path) -> Result<ReportSummary, ReportError> {
    std::fs::create_dir_all(out_dir.join("figures"))?;
    std::fs::create_dir_all(out_dir.join("tables"))?;
    let mut gaps = manifest.verify(base);
    gaps.retain(|g| g.kind != ArtifactKind::Report);
    let bad: BTreeSet<String> = gaps.iter().map(|g| g.path.clone()).collect();

    let mut scores = ScoreBundle::default();
    let mut any_input = false;
    for a in manifest.artifacts_of(ArtifactKind::Scores) {
        any_input = true;
        if bad.contains(&a.path) {
            continue;
        }
        let text = std::fs::read_to_string(RunManifest::resolve(base, &a.path))?;
        match serde_json::from_str::<ScoreBundle>(&text) {
            Ok(b) => scores.merge(b),
            Err(e) => gaps.push(Gap {
                path: a.path.clone(),
                kind: a.kind,
                reason: format!("not a score file: {e}"),
            }),
        }
    }
    scores.sort();

    let mut sections = Vec::new();
    for task in [Task::Classification, Task::Retrieval] {
        let fig = bar_figure(task, &scores.metrics);
        if fig.bars.is_empty() {
            continue;
        }
        let name = format!("{task}_f1");
        let data = format!("figures/{name}.json");
        write_json(&out_dir.join(&data), &fig)?;
        let images = plot::bar_charts(&fig, &out_dir.join("figures"))?;
        let table = format!("tables/{task}_metrics.csv");
        write_csv(
            &out_dir.join(&table),
            &["model", "task", "platform", "framing", "variant", "precision", "recall", "f1", "tp", "fp", "tn", "fn", "refusals", "parse_failures"],
            scores.metrics.iter().filter(|m| m.task == task).map(|m| {
                vec![
                    m.model.clone(),
                    m.task.to_string(),
                    m.platform.clone(),
                    m.framing.to_string(),
                    m.variant.as_str().to_string(),
                    num(m.precision),
                    num(m.recall),
                    num(m.f1),
                    m.confusion.tp.to_string(),
                    m.confusion.fp.to_string(),
                    m.confusion.tn.to_string(),
                    m.confusion.fn_.to_string(),
                    m.n_refusals.to_string(),
                    m.n_parse_failures.to_string(),
                ]
            }),
        )?;
        sections.push(Section {
            name,
            data,
            images: images.into_iter().map(|i| format!("figures/{i}")).collect(),
            table,
            n_items: fig.bars.len(),
        });
    }
    if !scores.decoding.is_empty() {
        let fig = stack_figure(&scores.decoding);
        let data = "figures/decoding_distribution.json".to_string();
        write_json(&out_dir.join(&data), &fig)?;
        let images = plot::stacked_charts(&fig, &out_dir.join("figures"))?;
        let table = "tables/decoding_distribution.csv".to_string();
        write_csv(
            &out_dir.join(&table),
            &["platform", "framing", "n", "correct", "partially_correct", "incorrect", "no_answer"],
            scores.decoding.iter().map(|d| {
                vec![
                    d.platform.clone(),
                    d.framing.to_string(),
                    d.n.to_string(),
                    num(d.correct),
                    num(d.partially_correct),
                    num(d.incorrect),
                    num(d.no_answer),
                ]
            }),
        )?;
        sections.push(Section {
            name: "decoding_distribution".into(),
            data,
            images: images.into_iter().map(|i| format!("figures/{i}")).collect(),
            table,
            n_items: fig.stacks.len(),
        });
    }
    if !scores.baselines.is_empty() {
        let table = "tables/baselines.csv".to_string();
        write_csv(
            &out_dir.join(&table),
            &["task", "platform", "n_positive", "n_negative", "predictor", "precision", "recall", "f1"],
            scores.baselines.iter().flat_map(|b| {
                let r = &b.baseline;
                [("fair_coin", r.fair_coin), ("class_prior", r.class_prior), ("all_positive", r.all_positive)].map(|(name, m)| {
                    vec![
                        b.task.to_string(),
                        b.platform.clone(),
                        r.n_positive.to_string(),
                        r.n_negative.to_string(),
                        name.to_string(),
                        num(m.precision),
                        num(m.recall),
                        num(m.f1),
                    ]
                })
            }),
        )?;
        sections.push(Section {
            name: "baselines".into(),
            data: "summary.json".into(),
            images: vec![],
            table,
            n_items: scores.baselines.len(),
        });
    }
    if !scores.agreement.is_empty() {
        let table = "tables/cross_task_agreement.csv".to_string();
        write_csv(
            &out_dir.join(&table),
            &["model", "platform", "framing", "n_shared", "n_matching", "fraction"],
            scores.agreement.iter().map(|a| {
                vec![
                    a.model.clone(),
                    a.platform.clone(),
                    a.framing.to_string(),
                    a.n_shared.to_string(),
                    a.n_matching.to_string(),
                    num(a.fraction),
                ]
            }),
        )?;
        sections.push(Section {
            name: "cross_task_agreement".into(),
            data: "summary.json".into(),
            images: vec![],
            table,
            n_items: scores.agreement.len(),
        });
    }

    let status = if !gaps.is_empty() {
        ReportStatus::Partial
    } else if sections.is_empty() {
        if any_input {
            ReportStatus::Complete
        } else {
            ReportStatus::NothingToReport
        }
    } else {
        ReportStatus::Complete
    };
    let summary = ReportSummary {
        status,
        sections,
        gaps,
        scores,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Confusion;

    fn metric(model: &str, task: Task, platform: &str, framing: Framing, variant: Variant) -> MetricReport {
        MetricReport {
            model: model.into(),
            task,
            platform: platform.into(),
            framing,
            variant,
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
            confusion: Confusion { tp: 1, fp: 1, tn: 5, fn_: 3 },
            n_refusals: 0,
            n_parse_failures: 0,
        }
    }

    fn bundle() -> ScoreBundle {
        let mut metrics = Vec::new();
        for model in ["m1", "m2"] {
            for &framing in Framing::ALL {
                for platform in ["incels", "stormfront"] {
                    for variant in [Variant::Full, Variant::CommonMorphemesExcluded] {
                        metrics.push(metric(model, Task::Classification, platform, framing, variant));
                    }
                }
            }
        }
        let decoding = Framing::ALL
            .iter()
            .map(|&framing| VerdictDistribution {
                platform: "incels".into(),
                framing,
                n: 3,
                correct: 1.0 / 3.0,
                partially_correct: 1.0 / 3.0,
                incorrect: 1.0 / 3.0,
                no_answer: 0.0,
            })
            .collect();
        ScoreBundle {
            metrics,
            decoding,
            ..Default::default()
        }
    }

    fn setup(dir: &Path) -> RunManifest {
        let path = dir.join("scores.json");
        std::fs::write(&path, serde_json::to_string(&bundle()).unwrap()).unwrap();
        let mut m = RunManifest::new();
        m.record_artifact(dir, ArtifactKind::Scores, &path, "score").unwrap();
        m
    }

    #[test]
    fn bar_count_matches_the_cell_product() {
        let dir = tempfile::tempdir().unwrap();
        let m = setup(dir.path());
        let s = generate_report(&m, dir.path(), &dir.path().join("out")).unwrap();
        assert_eq!(s.status, ReportStatus::Complete);
        let fig: BarFigure = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/figures/classification_f1.json")).unwrap()).unwrap();
        for variant in [Variant::Full, Variant::CommonMorphemesExcluded] {
            assert_eq!(fig.bars.iter().filter(|b| b.variant == variant).count(), 2 * 4 * 2);
        }
        for section in &s.sections {
            for image in &section.images {
                let svg = std::fs::read_to_string(dir.path().join("out").join(image)).unwrap();
                assert!(svg.starts_with("<svg"));
            }
        }
    }

    #[test]
    fn decoding_stacks_sum_to_one_hundred() {
        let fig = stack_figure(&bundle().decoding);
        for s in &fig.stacks {
            let total: f64 = s.bands.iter().map(|b| b.percent).sum();
            assert!((total - 100.0).abs() < 1e-9);
            assert_eq!(s.bands.len(), 4);
        }
    }

    #[test]
    fn empty_manifest_has_nothing_to_report() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_report(&RunManifest::new(), dir.path(), &dir.path().join("out")).unwrap();
        assert_eq!(s.status, ReportStatus::NothingToReport);
        assert!(s.sections.is_empty());
        let json = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
        assert!(json.contains("\"nothing to report\""));
    }

    #[test]
    fn missing_input_is_a_flagged_gap() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = setup(dir.path());
        m.artifacts.push(Artifact {
            kind: ArtifactKind::Scores,
            path: "gone.json".into(),
            sha256: "0".repeat(64),
            produced_by: "score".into(),
        });
        let s = generate_report(&m, dir.path(), &dir.path().join("out")).unwrap();
        assert_eq!(s.status, ReportStatus::Partial);
        assert_eq!(s.gaps.len(), 1);
        assert_eq!(s.gaps[0].path, "gone.json");
        assert!(!s.sections.is_empty());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = setup(dir.path());
        generate_report(&m, dir.path(), &dir.path().join("a")).unwrap();
        generate_report(&m, dir.path(), &dir.path().join("b")).unwrap();
        for f in ["summary.json", "figures/classification_f1.json", "figures/decoding_distribution.json", "tables/classification_metrics.csv"] {
            assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        }
    }
}
