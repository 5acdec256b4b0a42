use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use cryptolect::corpus::{annual_snapshots, filter_posts, ingest_path, stats_by_platform, stats_table, Corpus, PostFilter, SchemaMap, StopwordLanguageId};
use cryptolect::digest::{derive_seed, sha256_file};
use cryptolect::evalgen::{
    build_test_suite, export_annotation_sheet, import_judgments, read_lexicon_csv, write_lexicon_csv, AnnotationKey, CandidateDefinition, DecodingJudgment,
    DefinitionSet, ImportOutcome, Label, LexiconEntry, Source, SuiteConfig, Task, TestSuite, Verdict, MAX_EXAMPLE_CHARS, MIN_EXAMPLE_CHARS,
};
use cryptolect::induction::{induce as run_induction, write_space, InductionConfig};
use cryptolect::llmclient::{read_results, run_suite, write_results, Answer, AnswerParser, ChatModel, EvalRecord, HttpModel, Journal, MockModel, MockScript, RunOptions, DEFAULT_REFUSAL_PATTERNS};
use cryptolect::prompts::TemplateSet;
use cryptolect::report::{generate_report, ArtifactKind, CellBaseline, ReportStatus, RunManifest, ScoreBundle};
use cryptolect::scoring::{cross_task_agreement, score_all, score_decoding, suite_baseline, COMMON_MORPHEMES};
use cryptolect::synthetic::{generate, SyntheticSpec};

use crate::config::read_file;
use crate::*;

impl Ctx {
    fn record(&mut self, kind: ArtifactKind, path: &Path) -> Result<()> {
        self.manifest.record_artifact(&self.base, kind, path, self.command)?;
        Ok(())
    }
}

fn parse_years(range: &str) -> Result<(i32, i32)> {
    let (a, b) = range.split_once(['-', ':']).unwrap_or((range, range));
    let start = a.trim().parse().with_context(|| format!("bad year range {range:?}"))?;
    let end = b.trim().parse().with_context(|| format!("bad year range {range:?}"))?;
    ensure!(start <= end, "year range {range:?} runs backwards");
    Ok((start, end))
}

fn post_filter(l: &LengthArgs) -> Result<Option<PostFilter>> {
    if l.min_chars.is_none() && l.max_chars.is_none() && !l.drop_short {
        return Ok(None);
    }
    Ok(Some(PostFilter::new(l.min_chars.unwrap_or(0), l.max_chars.unwrap_or(usize::MAX), l.drop_short)?))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("cannot load corpus {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            std::fs::create_dir_all(p)?;
        }
    }
    Ok(())
}

pub fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> Result<()> {
    let mut schema: SchemaMap = match &a.schema {
        Some(p) => read_file(p)?,
        None => ctx.config.schema.clone().unwrap_or_default(),
    };
    if a.platform.is_some() {
        schema.default_platform = a.platform.clone();
    }
    let mut posts = Vec::new();
    for input in &a.input {
        let (corpus, report) = ingest_path(input, &schema).with_context(|| format!("cannot ingest {}", input.display()))?;
        log::info!(
            "{}: {} records, {} ingested, {} malformed, {} duplicates",
            input.display(),
            report.records,
            report.ingested,
            report.malformed,
            report.duplicates
        );
        if let Some(problem) = &report.first_problem {
            log::warn!("{}: first problem: {problem}", input.display());
        }
        posts.extend(corpus.iter().cloned());
    }
    let mut corpus = Corpus::from_posts(posts);
    if let Some(f) = post_filter(&a.lengths)? {
        let before = corpus.len();
        corpus = filter_posts(&corpus, &f);
        log::info!("length filter kept {} of {before} posts", corpus.len());
    }
    create_parent(&a.out)?;
    corpus.save(&a.out)?;
    println!("{} posts -> {}", corpus.len(), a.out.display());
    ctx.record(ArtifactKind::Corpus, &a.out)
}

pub fn stats(ctx: &mut Ctx, a: &StatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let stats = stats_by_platform(&corpus, &StopwordLanguageId::default())?;
    create_parent(&a.out)?;
    write_json(&a.out, &stats)?;
    print!("{}", stats_table(&stats));
    ctx.record(ArtifactKind::Stats, &a.out)
}

pub fn snapshot(ctx: &mut Ctx, a: &SnapshotArgs) -> Result<()> {
    let (start, end) = parse_years(&a.years)?;
    let mut corpus = load_corpus(&a.corpus)?;
    if let Some(f) = post_filter(&a.lengths)? {
        corpus = filter_posts(&corpus, &f);
    }
    std::fs::create_dir_all(&a.out_dir)?;
    for snap in annual_snapshots(&corpus, start, end)? {
        let path = a.out_dir.join(format!("snapshot-{}.jsonl", snap.year));
        let part = Corpus::from_posts(snap.posts.into_iter().cloned());
        part.save(&path)?;
        println!("{}: {} posts -> {}", snap.year, part.len(), path.display());
        ctx.record(ArtifactKind::Snapshot, &path)?;
    }
    Ok(())
}

fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split(',').next().unwrap_or("").trim().to_lowercase())
        .filter(|w| !w.is_empty() && !w.starts_with('#') && w != "word")
        .collect())
}

pub fn induce(ctx: &mut Ctx, a: &InduceArgs) -> Result<()> {
    let (start, end) = parse_years(&a.snapshots)?;
    let mut corpus = load_corpus(&a.corpus)?;
    let platforms = corpus.platforms();
    let platform = match (&a.platform, platforms.as_slice()) {
        (Some(p), _) => p.clone(),
        (None, [only]) => only.clone(),
        (None, []) => bail!("the corpus is empty"),
        (None, _) => bail!("the corpus holds several platforms ({}); pick one with --platform", platforms.join(", ")),
    };
    corpus = corpus.for_platform(&platform);
    ensure!(!corpus.is_empty(), "no posts for platform {platform}");
    let mut config: InductionConfig = ctx.config.induction.clone().unwrap_or_default();
    config.seed = ctx.seed;

    let run = run_induction(&corpus, start, end, &config, a.top_n, a.rank_year)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let space_path = a.out_dir.join("space.bin");
    write_space(&space_path, &run.space, &config, &sha256_file(&a.corpus)?)?;
    ctx.record(ArtifactKind::Embedding, &space_path)?;
    let log_path = a.out_dir.join("training_log.json");
    write_json(&log_path, &run.log)?;
    let ranked_path = a.out_dir.join("ranked.csv");
    run.lexicon.write_csv(BufWriter::new(File::create(&ranked_path)?))?;
    ctx.record(ArtifactKind::Lexicon, &ranked_path)?;
    println!(
        "{platform}: {} words ranked from a vocabulary of {}, {} epochs (best {})",
        run.lexicon.entries.len(),
        run.training.vocabulary.len(),
        run.log.epochs.len(),
        run.log.best_epoch
    );

    if let Some(positives_path) = &a.positives {
        let positives = read_word_list(positives_path)?;
        let source: Source = a.label_source.parse()?;
        let mut entries = Vec::new();
        let mut skipped = 0;
        for w in &run.lexicon.entries {
            let label = if positives.contains(&w.word) { Label::Positive } else { Label::Negative };
            match LexiconEntry::new(&w.word, &platform, label, source) {
                Ok(mut e) => {
                    e.score = Some(w.score);
                    entries.push(e);
                }
                Err(_) => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} ranked words are not single alphabetic tokens and were left out of the lexicon");
        }
        let n_pos = entries.iter().filter(|e| e.label == Label::Positive).count();
        if n_pos < positives.len() {
            log::info!("{} of {} listed positives are not among the ranked words", positives.len() - n_pos, positives.len());
        }
        let path = a.out_dir.join("lexicon.csv");
        write_lexicon_csv(&entries, BufWriter::new(File::create(&path)?))?;
        println!("labeled lexicon: {} entries, {n_pos} positive -> {}", entries.len(), path.display());
        ctx.record(ArtifactKind::Lexicon, &path)?;
    }
    Ok(())
}

pub fn gen_suite(ctx: &mut Ctx, a: &GenSuiteArgs) -> Result<()> {
    let mut lexicon = Vec::new();
    for p in &a.lexicon {
        lexicon.extend(read_lexicon_csv(File::open(p).with_context(|| format!("cannot open {}", p.display()))?)?);
    }
    let corpus = load_corpus(&a.corpus)?;
    let framings = if a.framings.is_empty() { a.task.framings().to_vec() } else { a.framings.clone() };
    let mut config = SuiteConfig::new(a.task, &framings, ctx.seed);
    config.size = a.size;
    config.min_chars = a.min_chars.unwrap_or(MIN_EXAMPLE_CHARS);
    config.max_chars = a.max_chars.unwrap_or(MAX_EXAMPLE_CHARS);
    let suite = build_test_suite(&lexicon, &corpus, &config)?;
    create_parent(&a.out)?;
    std::fs::write(&a.out, suite.to_json()?)?;
    println!("{} {} cases, {} rejected -> {}", suite.cases.len(), a.task, suite.rejected.len(), a.out.display());
    RunManifest::note(&mut ctx.manifest.framings, framings);
    ctx.record(ArtifactKind::Suite, &a.out)?;
    let rel = ctx.manifest.artifacts.last().map(|x| x.path.clone()).unwrap_or_default();
    RunManifest::note(&mut ctx.manifest.suites, [rel]);
    Ok(())
}

fn parser(ctx: &Ctx) -> AnswerParser {
    AnswerParser::new(DEFAULT_REFUSAL_PATTERNS.iter().map(|s| s.to_string()).chain(ctx.config.refusal_patterns.iter().cloned()))
}

pub fn run_eval(ctx: &mut Ctx, a: &RunEvalArgs) -> Result<()> {
    let suite = TestSuite::from_json(&std::fs::read_to_string(&a.suite).with_context(|| format!("cannot read {}", a.suite.display()))?)?;
    let templates = match &a.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let model: Box<dyn ChatModel> = match (&a.mock, &a.model) {
        (Some(script_path), _) => {
            let script: MockScript = read_json(script_path)?;
            let name = a
                .name
                .clone()
                .or_else(|| script_path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "mock".into());
            Box::new(MockModel::new(&name, script))
        }
        (None, Some(spec)) => Box::new(HttpModel::from_env(ctx.config.model(spec)?)?),
        (None, None) => bail!("either --model or --mock is required"),
    };
    if let Some(j) = &a.journal {
        create_parent(j)?;
    }
    let journal = a.journal.as_deref().map(Journal::open).transpose()?;
    let options = RunOptions {
        workers: a.workers,
        parser: parser(ctx),
    };
    let records = run_suite(&suite.cases, &templates, model.as_ref(), journal.as_ref(), &options)?;
    create_parent(&a.out)?;
    write_results(&records, BufWriter::new(File::create(&a.out)?))?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("{}: {} replies ({failed} failed) -> {}", model.name(), records.len(), a.out.display());
    RunManifest::note(&mut ctx.manifest.models, [model.name().to_string()]);
    ctx.record(ArtifactKind::Results, &a.out)?;
    if let Some(j) = &a.journal {
        ctx.record(ArtifactKind::Journal, j)?;
    }
    Ok(())
}

fn load_results(paths: &[PathBuf]) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
        out.extend(read_results(BufReader::new(f)).with_context(|| format!("cannot read results {}", p.display()))?);
    }
    Ok(out)
}

/// Groups decoding replies into one three-definition set per word.
fn definition_sets(records: &[EvalRecord], framings: &[cryptolect::evalgen::Framing]) -> (Vec<DefinitionSet>, usize) {
    let mut by_word: BTreeMap<(String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task == Task::Decoding && framings.contains(&r.framing)) {
        by_word.entry((r.platform.clone(), r.target_word.clone())).or_default().push(r);
    }
    let mut sets = Vec::new();
    let mut incomplete = 0;
    for ((platform, word), rs) in by_word {
        let mut defs = Vec::new();
        for f in framings {
            let Some(r) = rs.iter().find(|r| r.framing == *f) else { break };
            let (text, prefilled) = match &r.predicted.answer {
                Answer::Definition(t) => (t.clone(), None),
                _ => (r.predicted.raw_text.trim().to_string(), Some(Verdict::NoAnswer)),
            };
            defs.push(CandidateDefinition {
                case_id: r.case_id.clone(),
                framing: *f,
                text,
                prefilled,
            });
        }
        if defs.len() == framings.len() {
            sets.push(DefinitionSet { word, platform, definitions: defs });
        } else {
            incomplete += 1;
        }
    }
    (sets, incomplete)
}

pub fn export_sheet(ctx: &mut Ctx, a: &ExportSheetArgs) -> Result<()> {
    ensure!(a.framings.len() == 3, "the sheet takes exactly 3 framings, got {}", a.framings.len());
    let mut records = load_results(&a.results)?;
    let models: BTreeSet<String> = records.iter().map(|r| r.model.clone()).collect();
    match &a.model {
        Some(m) => records.retain(|r| &r.model == m),
        None if models.len() > 1 => bail!("results come from several models ({}); pick one with --model", models.into_iter().collect::<Vec<_>>().join(", ")),
        None => {}
    }
    let (sets, incomplete) = definition_sets(&records, &a.framings);
    if incomplete > 0 {
        log::warn!("{incomplete} words lack a reply for one of the sheet framings and were left out");
    }
    ensure!(!sets.is_empty(), "no decoding replies to put on a sheet");
    let sheet = export_annotation_sheet(&sets, a.framings.len(), ctx.seed)?;
    create_parent(&a.out)?;
    create_parent(&a.key)?;
    std::fs::write(&a.out, &sheet.csv)?;
    std::fs::write(&a.key, sheet.key.to_json()?)?;
    println!("{} words -> {} (key {})", sets.len(), a.out.display(), a.key.display());
    ctx.record(ArtifactKind::Sheet, &a.out)?;
    ctx.record(ArtifactKind::Key, &a.key)
}

pub fn import_sheet(ctx: &mut Ctx, a: &ImportJudgmentsArgs) -> Result<()> {
    let key = AnnotationKey::load(&a.key)?;
    let sheet = File::open(&a.sheet).with_context(|| format!("cannot open {}", a.sheet.display()))?;
    let outcome: ImportOutcome = import_judgments(sheet, &key)?;
    for e in &outcome.row_errors {
        log::warn!("row {}: {}", e.row, e.message);
    }
    create_parent(&a.out)?;
    write_json(&a.out, &outcome)?;
    println!("{} judgments, {} row errors -> {}", outcome.judgments.len(), outcome.row_errors.len(), a.out.display());
    // the annotated sheet replaces the blank one written by export
    ctx.record(ArtifactKind::Sheet, &a.sheet)?;
    ctx.record(ArtifactKind::Judgments, &a.out)
}

pub fn score(ctx: &mut Ctx, a: &ScoreArgs) -> Result<()> {
    ensure!(!a.results.is_empty() || !a.judgments.is_empty(), "nothing to score: pass --results and/or --judgments");
    let results = load_results(&a.results)?;
    let morphemes: Vec<&str> = if a.morphemes.is_empty() { COMMON_MORPHEMES.to_vec() } else { a.morphemes.iter().map(String::as_str).collect() };
    let mut bundle = ScoreBundle {
        metrics: score_all(&results, &morphemes)?,
        ..Default::default()
    };

    let mut judgments: Vec<DecodingJudgment> = Vec::new();
    for p in &a.judgments {
        let outcome: ImportOutcome = read_json(p)?;
        judgments.extend(outcome.judgments);
    }
    bundle.decoding = score_decoding(&judgments);

    for p in &a.suite {
        let suite = TestSuite::from_json(&std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?)?;
        if suite.task == Task::Decoding {
            continue;
        }
        let mut per_platform: BTreeMap<String, Vec<_>> = BTreeMap::new();
        // every framing carries the same words, so one framing sets the balance
        let Some(first) = suite.cases.first().map(|c| c.framing) else { continue };
        for c in suite.cases.iter().filter(|c| c.framing == first) {
            per_platform.entry(c.platform.clone()).or_default().push(c.clone());
        }
        for (platform, cases) in per_platform {
            match suite_baseline(&cases) {
                Ok(baseline) => bundle.baselines.push(CellBaseline {
                    task: suite.task,
                    platform,
                    baseline,
                }),
                Err(e) => log::warn!("no baseline for {} {platform}: {e}", suite.task),
            }
        }
    }

    let class: Vec<EvalRecord> = results.iter().filter(|r| r.task == Task::Classification).cloned().collect();
    let retr: Vec<EvalRecord> = results.iter().filter(|r| r.task == Task::Retrieval).cloned().collect();
    if !class.is_empty() && !retr.is_empty() {
        match cross_task_agreement(&class, &retr) {
            Ok(a) => bundle.agreement = a,
            Err(e) => log::info!("no cross-task agreement: {e}"),
        }
    }

    create_parent(&a.out)?;
    write_json(&a.out, &bundle)?;
    if let Some(csv_path) = &a.csv {
        create_parent(csv_path)?;
        let mut w = BufWriter::new(File::create(csv_path)?);
        writeln!(w, "model,task,platform,framing,variant,precision,recall,f1,tp,fp,tn,fn,refusals,parse_failures")?;
        for m in &bundle.metrics {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{}",
                m.model,
                m.task,
                m.platform,
                m.framing,
                m.variant.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.confusion.tp,
                m.confusion.fp,
                m.confusion.tn,
                m.confusion.fn_,
                m.n_refusals,
                m.n_parse_failures
            )?;
        }
        w.flush()?;
    }
    for m in &bundle.metrics {
        println!(
            "{:<20} {:<14} {:<12} {:<12} {:<26} P={:.3} R={:.3} F1={:.3}",
            m.model,
            m.task.as_str(),
            m.platform,
            m.framing.as_str(),
            m.variant.as_str(),
            m.precision,
            m.recall,
            m.f1
        );
    }
    ctx.record(ArtifactKind::Scores, &a.out)
}

pub fn report(ctx: &mut Ctx, a: &ReportArgs) -> Result<()> {
    let summary = generate_report(&ctx.manifest, &ctx.base, &a.out)?;
    for g in &summary.gaps {
        log::warn!("gap: {} ({:?}): {}", g.path, g.kind, g.reason);
    }
    let status = match summary.status {
        ReportStatus::Complete => "complete",
        ReportStatus::Partial => "partial",
        ReportStatus::NothingToReport => "nothing to report",
    };
    println!("report {status}: {} sections -> {}", summary.sections.len(), a.out.display());
    ctx.record(ArtifactKind::Report, &a.out.join("summary.json"))
}

pub fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let base = ctx.config.synthetic.clone().unwrap_or_default();
    let mut posts = Vec::new();
    let mut truth = String::new();
    for (i, platform) in a.platforms.iter().enumerate() {
        let seed = if i == 0 { ctx.seed } else { derive_seed(ctx.seed, platform) };
        let spec = SyntheticSpec {
            platform: platform.clone(),
            seed,
            ..base.clone()
        };
        let s = generate(&spec);
        posts.extend(s.corpus.iter().cloned());
        for w in &s.injected {
            truth.push_str(w);
            truth.push('\n');
        }
    }
    let corpus = Corpus::from_posts(posts);
    if corpus.is_empty() {
        return Err(anyhow!("the synthetic spec produced no posts"));
    }
    create_parent(&a.out)?;
    create_parent(&a.truth)?;
    corpus.save(&a.out)?;
    std::fs::write(&a.truth, truth)?;
    println!("{} posts over {} -> {}", corpus.len(), a.platforms.join(", "), a.out.display());
    ctx.record(ArtifactKind::Corpus, &a.out)
}
