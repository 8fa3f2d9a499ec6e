//! Subcommands of the `udseg` tool. Each `cmd_*` function is callable from
//! tests without spawning a process.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use udseg_core::conllu::{parse_document, serialize_document, Document};
use udseg_core::eval::{corpus_prf, EvalResult};
use udseg_core::model::predict;
use udseg_core::model::train::{train_main, TrainLog};
use udseg_core::model_dir::{self, ModelBundle};
use udseg_core::mwt::{
    build_table, split_pairs, train_encdec, EncDecLog, Transducer, TransductionPolicy,
    MIN_ENCDEC_PAIRS,
};
use udseg_core::numeric::TrainConfig;
use udseg_core::tags::UnitMode;
use udseg_core::typology::{
    compute_factors, huber_regress, kmeans, parse_settings, pca_project, recommend_settings,
    varying_features, Settings, Standardizer, Thresholds, TypoProfile, FEATURE_NAMES, HUBER_DELTA,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Model(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "udseg",
    version,
    about = "Universal word segmentation for CoNLL-U corpora"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a segmenter and write a model directory.
    Train(TrainArgs),
    /// Segment raw text or CoNLL-U with a trained model.
    Segment(SegmentArgs),
    /// Score a system CoNLL-U file against gold.
    Evaluate(EvaluateArgs),
    /// Compute typological factors of one or more corpora.
    Analyze(AnalyzeArgs),
    /// Write recommended settings for a training corpus.
    Recommend(RecommendArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Development data; the last 10% of the training sentences otherwise.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs of the segmenter.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs of the multiword-token encoder-decoder.
    #[arg(long)]
    pub encdec_epochs: Option<usize>,
    /// Initial learning rate of the encoder-decoder.
    #[arg(long)]
    pub encdec_lr: Option<f64>,
    /// `character` or `syllable`.
    #[arg(long)]
    pub unit_mode: Option<String>,
    /// Use bigram and trigram embeddings.
    #[arg(long)]
    pub ngrams: Option<bool>,
    /// Train the encoder-decoder when more distinct non-segmental multiword
    /// tokens than this are seen.
    #[arg(long)]
    pub mwt_threshold: Option<usize>,
    /// Settings file written by `recommend`.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    #[arg(long)]
    pub embedding_size: Option<usize>,
    #[arg(long)]
    pub state_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

impl TrainArgs {
    pub fn new(train: impl Into<PathBuf>, model: impl Into<PathBuf>) -> Self {
        TrainArgs {
            train: train.into(),
            dev: None,
            model: model.into(),
            seed: None,
            epochs: None,
            encdec_epochs: None,
            encdec_lr: None,
            unit_mode: None,
            ngrams: None,
            mwt_threshold: None,
            settings: None,
            embedding_size: None,
            state_size: None,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Raw text with one sentence per line, or CoNLL-U.
    #[arg(long)]
    pub input: PathBuf,
    /// Standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Input is already split into sentences, one per line. Sentence
    /// splitting is not supported, so this is the only raw-text mode.
    #[arg(long)]
    pub presegmented: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub system: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Training corpora, one dataset per file.
    #[arg(long, required = true, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Directory receiving the TSV files.
    #[arg(long)]
    pub output: PathBuf,
    /// `dataset<TAB>F1` lines; enables the regression.
    #[arg(long)]
    pub f1_table: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, content: &str) -> CliResult<()> {
    fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_conllu(path: &Path) -> CliResult<Document> {
    let doc = parse_document(&read_input(path)?, &path.display().to_string())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for w in &doc.warnings {
        log::warn!("{w}");
    }
    Ok(doc)
}

/// Splits off the last 10% of the sentences (at least one) as development
/// data.
pub fn carve_dev(doc: Document) -> CliResult<(Document, Document)> {
    let n = doc.sentences.len();
    if n < 2 {
        return Err(CliError::Data(format!(
            "{}: at least two sentences are needed to carve a development split",
            doc.source_name
        )));
    }
    let n_dev = n.div_ceil(10).max(1);
    let mut train = doc;
    let dev_sents = train.sentences.split_off(n - n_dev);
    let dev = Document::new(format!("{} (dev split)", train.source_name), dev_sents);
    Ok((train, dev))
}

/// What `train` produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub settings: Settings,
    pub profile: TypoProfile,
    pub log: TrainLog,
    pub encdec_log: Option<EncDecLog>,
    pub mwt_types: usize,
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let full = read_conllu(&args.train)?;
    let (train, dev) = match &args.dev {
        Some(p) => (full, read_conllu(p)?),
        None => carve_dev(full)?,
    };
    let profile = compute_factors([&train])
        .map_err(|e| CliError::Data(format!("{}: {e}", args.train.display())))?;

    let mut settings = match &args.settings {
        Some(p) => parse_settings(&read_input(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => recommend_settings(&profile, &Thresholds::default()),
    };
    if let Some(m) = &args.unit_mode {
        settings.unit_mode =
            UnitMode::parse(m).ok_or_else(|| CliError::Usage(format!("unknown unit mode {m}")))?;
    }
    if let Some(n) = args.ngrams {
        settings.uses_ngrams = n;
    }

    let table = build_table([&train]);
    if let Some(t) = args.mwt_threshold {
        settings.encdec = TransductionPolicy::decide(&table, t).has_encdec;
    }
    if settings.encdec && table.len() < MIN_ENCDEC_PAIRS {
        log::warn!(
            "only {} distinct multiword tokens; using the dictionary alone",
            table.len()
        );
        settings.encdec = false;
    }

    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        seed: args.seed.unwrap_or(defaults.seed),
        main_epochs: args.epochs.unwrap_or(defaults.main_epochs),
        encdec_epochs: args.encdec_epochs.unwrap_or(defaults.encdec_epochs),
        initial_lr_encdec: args.encdec_lr.unwrap_or(defaults.initial_lr_encdec),
        char_embedding_size: args.embedding_size.unwrap_or(defaults.char_embedding_size),
        rnn_state_size: args.state_size.unwrap_or(defaults.rnn_state_size),
        dropout_rate: args.dropout.unwrap_or(defaults.dropout_rate),
        ..defaults
    };
    cfg.validate().map_err(CliError::Usage)?;

    let policy = TransductionPolicy {
        has_encdec: settings.encdec,
    };
    let (model, encdec_log) = if policy.has_encdec {
        let (tr, val) = split_pairs(&table, cfg.seed);
        let encdec_cfg = TrainConfig {
            dropout_rate: 0.0,
            ..cfg.clone()
        };
        let (m, l) = train_encdec(&tr, &val, &encdec_cfg, true)
            .map_err(|e| CliError::Data(e.to_string()))?;
        (Some(m), Some(l))
    } else {
        (None, None)
    };
    let mwt_types = table.len();
    let transducer = Transducer {
        policy,
        table,
        model,
    };

    let (segmenter, log) = train_main(
        &train,
        &dev,
        settings.unit_mode,
        settings.uses_ngrams,
        &cfg,
        &transducer,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let bundle = ModelBundle {
        segmenter,
        transducer,
    };
    model_dir::save(&args.model, &bundle, &log, encdec_log.as_ref())
        .map_err(|e| CliError::Model(e.to_string()))?;
    Ok(TrainSummary {
        settings,
        profile,
        log,
        encdec_log,
        mwt_types,
    })
}

pub fn load_model(dir: &Path) -> CliResult<ModelBundle> {
    model_dir::load(dir).map_err(|e| CliError::Model(e.to_string()))
}

fn looks_like_conllu(text: &str) -> bool {
    text.lines()
        .any(|l| !l.starts_with('#') && l.split('\t').count() == 10)
}

/// Sentences of the input: the reconstructed text of every CoNLL-U
/// sentence, or the non-blank lines of raw text.
pub fn input_sentences(path: &Path) -> CliResult<Vec<String>> {
    let text = read_input(path)?;
    if looks_like_conllu(&text) {
        let doc = parse_document(&text, &path.display().to_string())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(doc
            .sentences
            .iter()
            .map(udseg_core::conllu::reconstruct_text)
            .collect())
    } else {
        Ok(text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect())
    }
}

/// Segments with an already loaded model and returns CoNLL-U.
pub fn segment_texts(bundle: &ModelBundle, texts: &[String]) -> String {
    let predictions = predict(&bundle.segmenter, texts);
    let sentences = predictions
        .iter()
        .filter(|p| !p.segments.is_empty())
        .map(|p| p.to_sentence(&bundle.transducer))
        .collect();
    serialize_document(&Document::new("segmented", sentences))
}

pub fn cmd_segment(args: &SegmentArgs) -> CliResult<String> {
    let bundle = load_model(&args.model)?;
    let texts = input_sentences(&args.input)?;
    let out = segment_texts(&bundle, &texts);
    if let Some(p) = &args.output {
        write_output(p, &out)?;
    }
    Ok(out)
}

pub fn format_report(r: &EvalResult) -> String {
    format!(
        "metric\tvalue\nprecision\t{}\nrecall\t{}\nf1\t{}\nmatched\t{}\nsystem_words\t{}\ngold_words\t{}\n",
        r.precision, r.recall, r.f1, r.matched, r.candidate_len, r.reference_len
    )
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<(EvalResult, String)> {
    let gold = read_conllu(&args.gold)?;
    let system = read_conllu(&args.system)?;
    let r = corpus_prf(&system, &gold).map_err(|e| CliError::Data(e.to_string()))?;
    let report = format_report(&r);
    if let Some(p) = &args.report {
        write_output(p, &report)?;
    }
    Ok((r, report))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_f1_table(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in read_input(path)?.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            CliError::Data(format!(
                "{} line {}: expected dataset<TAB>F1",
                path.display(),
                i + 1
            ))
        };
        let (name, f1) = line.split_once('\t').ok_or_else(bad)?;
        let Ok(f1) = f1.trim().parse::<f64>() else {
            // a header row
            if i == 0 {
                continue;
            }
            return Err(bad());
        };
        out.insert(name.trim().to_string(), f1);
    }
    Ok(out)
}

/// Files written by `analyze`, keyed by name.
pub type AnalysisFiles = BTreeMap<String, String>;

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<AnalysisFiles> {
    let mut names = Vec::new();
    let mut profiles = Vec::new();
    let mut ambiguity = String::from("dataset\tmwt_types\tunambiguous_ratio\n");
    for path in &args.train {
        let doc = read_conllu(path)?;
        let p = compute_factors([&doc])
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let name = dataset_name(path);
        let table = build_table([&doc]);
        let _ = writeln!(
            ambiguity,
            "{name}\t{}\t{}",
            table.len(),
            table.unambiguous_ratio()
        );
        names.push(name);
        profiles.push(p);
    }
    let mut files = AnalysisFiles::new();
    let mut factors = String::from("dataset\tTS\tCS\tLS\tAL\tSF\tMP\tMS\n");
    for (n, p) in names.iter().zip(&profiles) {
        let _ = writeln!(
            factors,
            "{n}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.train_size, p.cs, p.ls, p.al, p.sf, p.mp, p.ms
        );
    }
    files.insert("factors.tsv".into(), factors);
    files.insert("mwt_ambiguity.tsv".into(), ambiguity);

    let raw: Vec<Vec<f64>> = profiles.iter().map(|p| p.features().to_vec()).collect();
    let keep = varying_features(&raw);
    let reduced: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    if names.len() >= 2 && !keep.is_empty() {
        let std = Standardizer::fit(&reduced).map_err(|e| CliError::Data(e.to_string()))?;
        let z = std.transform_all(&reduced);
        let k = names.len().min(6);
        let km =
            kmeans(&z, k, args.seed.unwrap_or(1)).map_err(|e| CliError::Data(e.to_string()))?;
        let mut clusters = String::from("dataset\tcluster\n");
        for (n, c) in names.iter().zip(&km.assignments) {
            let _ = writeln!(clusters, "{n}\t{c}");
        }
        files.insert("clusters.tsv".into(), clusters);

        let dims = keep.len().min(2);
        let pca = pca_project(&z, dims).map_err(|e| CliError::Data(e.to_string()))?;
        let header: Vec<String> = (1..=dims).map(|i| format!("PC{i}")).collect();
        let mut out = format!("dataset\t{}\n", header.join("\t"));
        for (n, p) in names.iter().zip(&pca.projected) {
            let vals: Vec<String> = p.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{n}\t{}", vals.join("\t"));
        }
        let ratios: Vec<String> = pca.explained_ratio.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "#explained\t{}", ratios.join("\t"));
        files.insert("pca.tsv".into(), out);

        if let Some(f1_path) = &args.f1_table {
            let f1 = read_f1_table(f1_path)?;
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for (n, row) in names.iter().zip(&z) {
                if let Some(&y) = f1.get(n) {
                    rows.push(row.clone());
                    ys.push(y);
                }
            }
            let fit = huber_regress(&rows, &ys, HUBER_DELTA)
                .map_err(|e| CliError::Data(format!("regression: {e}")))?;
            let mut out = String::from("feature\tcoefficient\n");
            for (&j, c) in keep.iter().zip(&fit.coefficients) {
                let _ = writeln!(out, "{}\t{c}", FEATURE_NAMES[j]);
            }
            let _ = writeln!(out, "intercept\t{}", fit.intercept);
            files.insert("regression.tsv".into(), out);
        }
    } else if args.f1_table.is_some() {
        return Err(CliError::Data(
            "regression needs at least two datasets with varying factors".into(),
        ));
    }

    fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.output.display())))?;
    for (name, content) in &files {
        write_output(&args.output.join(name), content)?;
    }
    Ok(files)
}

pub fn cmd_recommend(args: &RecommendArgs) -> CliResult<Settings> {
    let doc = read_conllu(&args.train)?;
    let p = compute_factors([&doc])
        .map_err(|e| CliError::Data(format!("{}: {e}", args.train.display())))?;
    let s = recommend_settings(&p, &Thresholds::default());
    if let Some(out) = &args.output {
        write_output(out, &s.to_string())?;
    }
    Ok(s)
}

/// Runs a parsed command; text meant for standard output is returned.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Train(a) => {
            let s = cmd_train(a)?;
            let mut out = String::new();
            let _ = writeln!(out, "unit_mode\t{}", s.settings.unit_mode.as_str());
            let _ = writeln!(out, "uses_ngrams\t{}", s.settings.uses_ngrams);
            let _ = writeln!(out, "encdec\t{}", s.settings.encdec);
            if let Some(f1) = s.log.best_f1() {
                let _ = writeln!(out, "best_dev_f1\t{f1}");
            }
            Ok(out)
        }
        Command::Segment(a) => {
            let out = cmd_segment(a)?;
            Ok(if a.output.is_some() {
                String::new()
            } else {
                out
            })
        }
        Command::Evaluate(a) => Ok(cmd_evaluate(a)?.1),
        Command::Analyze(a) => {
            let files = cmd_analyze(a)?;
            Ok(files.get("factors.tsv").cloned().unwrap_or_default())
        }
        Command::Recommend(a) => {
            let s = cmd_recommend(a)?;
            Ok(if a.output.is_some() {
                String::new()
            } else {
                s.to_string()
            })
        }
    }
}
