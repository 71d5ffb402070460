mod error;
mod meta;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use medmine_core::corpus::{
    bio_to_spans, chunk_document, label_stats, oversample, split_corpus, tag_document, SplitSpec,
    Token,
};
use medmine_core::ensemble::{merge, MergeStrategy, Provenance};
use medmine_core::eval::evaluate_source;
use medmine_core::metrics::render_report;
use medmine_core::standoff::{
    read_annotations, read_documents, read_token_tags_file, write_annotation_dir, write_corpus_dir,
    write_token_tags,
};
use medmine_core::synthetic::{generate, perturb_corpus, GenSpec, NoiseSpec};
use medmine_core::{
    parse_label, AnnotationSet, Corpus, Document, EvaluationReport, Label, MatchMode, NumberStyle,
    ReportFormat, Source, SurfacePolicy,
};

use error::{data, usage, CliError, CliResult};
use meta::{write_json, write_metadata, write_text};

#[derive(Debug, Parser)]
#[command(
    name = "medmine",
    version,
    about = "Medication-entity corpus tools and span-level NER evaluation"
)]
struct Cli {
    /// Worker threads for per-document work (default: all cores). Never
    /// changes results.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predictions against gold stand-off annotations.
    Evaluate(EvaluateArgs),
    /// Write train/dev/test manifests.
    Split(SplitArgs),
    /// Cut documents into token windows with remapped annotations.
    Chunk(ChunkArgs),
    /// Per-label gold counts.
    Stats(StatsArgs),
    /// Convert between stand-off and token-tag files.
    Convert(ConvertArgs),
    /// Merge predictions from several models.
    Merge(MergeArgs),
    /// Generate a synthetic corpus, optionally with perturbed predictions.
    Synth(SynthArgs),
    /// Duplicate documents holding a rare label.
    Oversample(OversampleArgs),
}

fn label_arg(s: &str) -> Result<Label, String> {
    Ok(parse_label(s.trim()))
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// Directory of gold `<id>.txt` and `<id>.ann` files.
    #[arg(long)]
    gold: PathBuf,
    /// Directory of predicted `.ann` files, or one `.tags` file.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "strict")]
    mode: MatchMode,
    /// Comma-separated labels to drop before aggregating, e.g. O,Reason,ADE.
    #[arg(long, value_delimiter = ',', value_parser = label_arg)]
    exclude_labels: Vec<Label>,
    #[arg(long, default_value = "tsv")]
    format: ReportFormat,
    /// Print percentages instead of fractions.
    #[arg(long)]
    percent: bool,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject annotations whose surface text disagrees with the document.
    #[arg(long)]
    strict_validation: bool,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    /// Corpus directory; only `<id>.txt` names are used.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.15,0.15")]
    ratios: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ChunkArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 512)]
    max_tokens: usize,
    #[arg(long, default_value_t = 0)]
    overlap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory; TSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ConvertTarget {
    /// `<id>.txt` + `<id>.ann` → one `corpus.tags` file.
    Tags,
    /// `<id>.txt` + a `.tags` file → `<id>.ann` files.
    Standoff,
}

#[derive(Debug, Args, Serialize)]
struct ConvertArgs {
    #[arg(long)]
    to: ConvertTarget,
    /// Directory of `<id>.txt` (and, for `--to tags`, `<id>.ann`) files.
    #[arg(long)]
    corpus: PathBuf,
    /// Token-tag input for `--to standoff`.
    #[arg(long)]
    tags: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StrategyArg {
    Union,
    Intersection,
    PerLabelBest,
    Priority,
}

fn named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Debug, Args, Serialize)]
struct MergeArgs {
    /// Directory of `<id>.txt` files.
    #[arg(long)]
    text: PathBuf,
    /// Prediction directory as NAME=DIR; repeat for each source, in
    /// priority order.
    #[arg(long = "pred", required = true, value_parser = named_path)]
    preds: Vec<(String, PathBuf)>,
    #[arg(long, default_value = "union")]
    strategy: StrategyArg,
    /// Matching mode deciding agreement for `intersection`.
    #[arg(long, default_value = "type")]
    mode: MatchMode,
    /// Keep overlapping spans with different labels under `union`.
    #[arg(long)]
    no_conflict_resolution: bool,
    /// Dev-set JSON report as NAME=FILE for `per-label-best`.
    #[arg(long = "dev-report", value_parser = named_path)]
    dev_reports: Vec<(String, PathBuf)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 76)]
    docs: usize,
    /// Total gold spans, split across labels in reference proportions.
    /// Defaults to the full reference counts.
    #[arg(long)]
    spans: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a perturbed copy of gold as prediction source NAME.
    #[arg(long, value_name = "NAME")]
    predict: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    deletion: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 3)]
    max_jitter: usize,
    /// Probability of swapping a label for a uniformly chosen other one.
    #[arg(long, default_value_t = 0.0)]
    confusion: f64,
    /// Expected spurious spans per document.
    #[arg(long, default_value_t = 0.0)]
    spurious: f64,
}

#[derive(Debug, Args, Serialize)]
struct OversampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = label_arg)]
    label: Label,
    #[arg(long)]
    factor: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn policy(strict: bool) -> SurfacePolicy {
    if strict {
        SurfacePolicy::Strict
    } else {
        SurfacePolicy::Lenient
    }
}

fn read_docs(dir: &Path) -> CliResult<Vec<Document>> {
    let docs = read_documents(dir).map_err(data)?;
    if docs.is_empty() {
        return Err(data(anyhow!("{}: no .txt documents", dir.display())));
    }
    Ok(docs)
}

fn sets_for(
    dir: &Path,
    docs: &[Document],
    source: &Source,
    policy: SurfacePolicy,
) -> CliResult<BTreeMap<String, AnnotationSet>> {
    let read = read_annotations(dir, docs, source, policy).map_err(data)?;
    if read.skipped_lines > 0 {
        log::info!(
            "{}: skipped {} non-entity lines",
            dir.display(),
            read.skipped_lines
        );
    }
    if read.surface_warnings > 0 {
        log::warn!(
            "{}: {} surface mismatches",
            dir.display(),
            read.surface_warnings
        );
    }
    Ok(read.sets)
}

/// Documents plus gold annotations from one directory.
fn load_corpus(dir: &Path, policy: SurfacePolicy) -> CliResult<Corpus> {
    let docs = read_docs(dir)?;
    let gold = sets_for(dir, &docs, &Source::Gold, policy)?;
    let mut corpus = Corpus::new();
    for doc in docs {
        corpus.add_document(doc).map_err(data)?;
    }
    for set in gold.into_values() {
        corpus.set_gold(set).map_err(data)?;
    }
    Ok(corpus)
}

/// Predictions from a `.tags` file, turned into spans over the gold text.
fn sets_from_tags(path: &Path, corpus: &Corpus, source: &Source) -> CliResult<Vec<AnnotationSet>> {
    let parsed = read_token_tags_file(path).map_err(data)?;
    if parsed.repairs > 0 {
        log::warn!(
            "{}: repaired {} orphan I- tags",
            path.display(),
            parsed.repairs
        );
    }
    let mut out = Vec::new();
    for tagged in &parsed.documents {
        let doc = corpus.document(&tagged.doc_id).ok_or_else(|| {
            data(anyhow!(
                "{}: document {} is not in the gold corpus",
                path.display(),
                tagged.doc_id
            ))
        })?;
        let tokens: Vec<Token> = tagged
            .records
            .iter()
            .map(|r| Token {
                text: r.token.clone(),
                start: r.start,
                end: r.end,
            })
            .collect();
        if let Some(t) = tokens.iter().find(|t| t.end > doc.char_len()) {
            return Err(data(anyhow!(
                "{}: document {}: token {:?} ends at {} beyond text length {}",
                path.display(),
                tagged.doc_id,
                t.text,
                t.end,
                doc.char_len()
            )));
        }
        let mut set = AnnotationSet::new(doc.doc_id(), source.clone());
        set.spans = bio_to_spans(doc, &tokens, &tagged.tags());
        out.push(set);
    }
    Ok(out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let policy = policy(args.strict_validation);
    let mut corpus = load_corpus(&args.gold, policy)?;
    let source = Source::Model("pred".into());
    let sets = if args.pred.is_dir() {
        let docs: Vec<Document> = corpus.documents().cloned().collect();
        sets_for(&args.pred, &docs, &source, policy)?
            .into_values()
            .collect()
    } else if args.pred.is_file() {
        sets_from_tags(&args.pred, &corpus, &source)?
    } else {
        return Err(usage(anyhow!(
            "{}: no such file or directory",
            args.pred.display()
        )));
    };
    for set in sets {
        corpus.set_prediction(set).map_err(data)?;
    }
    let report = evaluate_source(&corpus, "pred", args.mode, &args.exclude_labels).map_err(data)?;
    if !report.unknown_labels.is_empty() {
        log::warn!("labels outside the known set: {:?}", report.unknown_labels);
    }
    let style = if args.percent {
        NumberStyle::Percent
    } else {
        NumberStyle::Decimal
    };
    let rendered = render_report(&report, args.format, style);
    match &args.out {
        Some(out) => {
            write_text(
                &out.join(format!("report.{}", args.format.extension())),
                &rendered,
            )?;
            write_metadata(out, "evaluate", args, &[&args.gold, &args.pred])?;
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> CliResult<()> {
    let ratios: [f64; 3] = args
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| usage(anyhow!("--ratios needs three values")))?;
    let spec = SplitSpec::new(ratios, args.seed).map_err(usage)?;
    let mut corpus = Corpus::new();
    for doc in read_docs(&args.corpus)? {
        corpus.add_document(doc).map_err(data)?;
    }
    let split = split_corpus(&corpus, &spec).map_err(data)?;
    for (name, part) in split.parts() {
        let ids: String = part.doc_ids().map(|id| format!("{id}\n")).collect();
        write_text(&args.out.join(format!("{name}.txt")), &ids)?;
    }
    write_metadata(&args.out, "split", args, &[&args.corpus])
}

fn cmd_chunk(args: &ChunkArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus, SurfacePolicy::Lenient)?;
    let mut docs = Vec::new();
    let mut chunks = Vec::new();
    for doc in corpus.documents() {
        for chunk in chunk_document(doc, args.max_tokens, args.overlap).map_err(usage)? {
            let local = chunk.to_document(doc);
            let mut set = AnnotationSet::new(local.doc_id(), Source::Gold);
            set.spans = chunk.localize_spans(corpus.gold_spans(doc.doc_id()));
            for span in &mut set.spans {
                span.surface = local.surface_of(&span.fragments).unwrap_or_default();
            }
            docs.push((local, set));
            chunks.push(chunk);
        }
    }
    write_corpus_dir(&args.out, docs.iter().map(|(d, s)| (d, Some(s)))).map_err(data)?;
    write_json(&args.out.join("chunks.json"), &chunks)?;
    write_metadata(&args.out, "chunk", args, &[&args.corpus])
}

fn cmd_stats(args: &StatsArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus, SurfacePolicy::Lenient)?;
    let stats = label_stats(&corpus);
    match &args.out {
        Some(out) => {
            write_text(&out.join("label_stats.tsv"), &stats.to_tsv())?;
            write_text(&out.join("label_stats.json"), &stats.to_json())?;
            write_metadata(out, "stats", args, &[&args.corpus])?;
        }
        None => print!("{}", stats.to_tsv()),
    }
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> CliResult<()> {
    match args.to {
        ConvertTarget::Tags => {
            let corpus = load_corpus(&args.corpus, SurfacePolicy::Lenient)?;
            let mut tagged = Vec::new();
            for doc in corpus.documents() {
                let (t, dropped) = tag_document(doc, corpus.gold_spans(doc.doc_id()));
                if !dropped.is_empty() {
                    log::warn!(
                        "{}: overlapping spans dropped from tags: {dropped:?}",
                        doc.doc_id()
                    );
                }
                tagged.push(t);
            }
            write_text(&args.out.join("corpus.tags"), &write_token_tags(&tagged))?;
            write_metadata(&args.out, "convert", args, &[&args.corpus])
        }
        ConvertTarget::Standoff => {
            let tags = args
                .tags
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--to standoff needs --tags FILE")))?;
            let mut corpus = Corpus::new();
            for doc in read_docs(&args.corpus)? {
                corpus.add_document(doc).map_err(data)?;
            }
            let sets = sets_from_tags(tags, &corpus, &Source::Gold)?;
            write_annotation_dir(&args.out, &sets).map_err(data)?;
            write_metadata(&args.out, "convert", args, &[&args.corpus, tags])
        }
    }
}

fn read_report(path: &Path) -> CliResult<EvaluationReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("{}: cannot read", path.display()))
        .map_err(data)?;
    serde_json::from_str(&text)
        .with_context(|| format!("{}: not a JSON evaluation report", path.display()))
        .map_err(data)
}

fn cmd_merge(args: &MergeArgs) -> CliResult<()> {
    let docs = read_docs(&args.text)?;
    let names: Vec<&str> = args.preds.iter().map(|(n, _)| n.as_str()).collect();
    if names
        .iter()
        .enumerate()
        .any(|(i, n)| names[..i].contains(n))
    {
        return Err(usage(anyhow!(
            "source names given to --pred must be distinct"
        )));
    }
    let strategy = match args.strategy {
        StrategyArg::Union => MergeStrategy::Union {
            resolve_conflicts: !args.no_conflict_resolution,
        },
        StrategyArg::Intersection => MergeStrategy::Intersection { mode: args.mode },
        StrategyArg::Priority => {
            MergeStrategy::Priority(names.iter().map(|n| n.to_string()).collect())
        }
        StrategyArg::PerLabelBest => {
            let mut dev_reports = Vec::new();
            for name in &names {
                let (_, path) = args
                    .dev_reports
                    .iter()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| usage(anyhow!("no --dev-report for source {name}")))?;
                dev_reports.push((name.to_string(), read_report(path)?));
            }
            MergeStrategy::PerLabelBest { dev_reports }
        }
    };
    let mut per_source = Vec::new();
    for (name, dir) in &args.preds {
        per_source.push(sets_for(
            dir,
            &docs,
            &Source::Model(name.clone()),
            SurfacePolicy::Lenient,
        )?);
    }
    let mut merged_sets = Vec::new();
    let mut tagged = Vec::new();
    let mut provenance: BTreeMap<String, Vec<Provenance>> = BTreeMap::new();
    for doc in &docs {
        let inputs: Vec<AnnotationSet> = per_source
            .iter()
            .map(|sets| sets[doc.doc_id()].clone())
            .collect();
        let merged = merge(&inputs, &strategy).map_err(usage)?;
        let (t, dropped) = tag_document(doc, &merged.set.spans);
        if !dropped.is_empty() {
            log::warn!(
                "{}: overlapping spans dropped from tags: {dropped:?}",
                doc.doc_id()
            );
        }
        tagged.push(t);
        provenance.insert(doc.doc_id().to_string(), merged.provenance);
        merged_sets.push(merged.set);
    }
    write_annotation_dir(&args.out, &merged_sets).map_err(data)?;
    write_text(&args.out.join("merged.tags"), &write_token_tags(&tagged))?;
    write_json(&args.out.join("provenance.json"), &provenance)?;
    let mut inputs: Vec<&Path> = vec![&args.text];
    inputs.extend(args.preds.iter().map(|(_, p)| p.as_path()));
    inputs.extend(args.dev_reports.iter().map(|(_, p)| p.as_path()));
    write_metadata(&args.out, "merge", args, &inputs)
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let spec = match args.spans {
        Some(total) => GenSpec::scaled_default(args.seed, args.docs, total),
        None => GenSpec::reference(args.seed, args.docs),
    };
    let generated = generate(&spec).map_err(usage)?;
    let mut corpus = generated.corpus;
    write_corpus_dir(
        &args.out,
        corpus.documents().map(|d| (d, corpus.gold(d.doc_id()))),
    )
    .map_err(data)?;
    write_json(&args.out.join("ledger.json"), &generated.ledger)?;
    if let Some(name) = &args.predict {
        let noise = NoiseSpec {
            seed: args.seed,
            deletion: args.deletion,
            jitter_prob: args.jitter,
            max_jitter: args.max_jitter,
            confusion: if args.confusion > 0.0 {
                NoiseSpec::uniform_confusion(args.confusion)
            } else {
                BTreeMap::new()
            },
            spurious_rate: args.spurious,
            ..Default::default()
        };
        let ledgers = perturb_corpus(&mut corpus, name, &noise).map_err(usage)?;
        let sets: Vec<&AnnotationSet> = corpus
            .doc_ids()
            .filter_map(|id| corpus.prediction(name, id))
            .collect();
        write_annotation_dir(&args.out.join(name), sets).map_err(data)?;
        write_json(&args.out.join(format!("{name}_ledger.json")), &ledgers)?;
        write_json(&args.out.join(format!("{name}_noise.json")), &noise)?;
    }
    write_metadata(&args.out, "synth", args, &[])
}

fn cmd_oversample(args: &OversampleArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus, SurfacePolicy::Lenient)?;
    let out = oversample(&corpus, &args.label, args.factor, args.seed).map_err(usage)?;
    write_corpus_dir(
        &args.out,
        out.documents().map(|d| (d, out.gold(d.doc_id()))),
    )
    .map_err(data)?;
    write_text(
        &args.out.join("label_stats.tsv"),
        &label_stats(&out).to_tsv(),
    )?;
    write_metadata(&args.out, "oversample", args, &[&args.corpus])
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Split(a) => cmd_split(a),
        Command::Chunk(a) => cmd_chunk(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Oversample(a) => cmd_oversample(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDMINE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.parallel {
        Some(0) => Err(usage(anyhow!("--parallel must be at least 1"))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(usage)
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_failure(&e),
    }
}

fn report_failure(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    e.exit_code()
}
