use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use cnlaug::cfm::depth_prefilter;
use cnlaug::cnlc::{delinearize as decode, linearize as encode, parse_sequences, write_sequences};
use cnlaug::corpus::{
    corpus_stats, label_correlation, parse_corpus, write_corpus, CorpusStats, Format, LabelSet, NestedAnnotation,
    Schema, StopList, DEFAULT_MAX_DEPTH,
};
use cnlaug::error::{FilterError, PipelineError};
use cnlaug::eval::{render_report, span_prf, ReportInput};
use cnlaug::gateway::{NgramModel, ScoreBackend, WorkerClient, DEFAULT_SMOOTHING, DEFAULT_TIMEOUT};
use cnlaug::pipeline::{augment as run_augment, filter_generated, sample_report, select, Backends, Builtin};

use crate::config::{Backend, RunConfig, WORKER_ENV};
use crate::CorpusOpts;

pub const RUNTIME: u8 = 1;
pub const INPUT: u8 = 2;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn input(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Outcome<T> {
        self.map_err(|e| Failure {
            code: INPUT,
            error: e.into(),
        })
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure {
            code: RUNTIME,
            error: e.into(),
        })
    }
}

fn pipeline(e: PipelineError) -> Failure {
    let code = match &e {
        PipelineError::InvalidConfig(_)
        | PipelineError::UnknownSource(_)
        | PipelineError::Filter(FilterError::InvalidRate(_) | FilterError::IdCollision(_)) => INPUT,
        _ => RUNTIME,
    };
    Failure { code, error: e.into() }
}

fn worker_env() -> Option<String> {
    std::env::var(WORKER_ENV).ok().filter(|s| !s.trim().is_empty())
}

fn max_depth(value: Option<&str>, default: Option<usize>) -> Outcome<Option<usize>> {
    match value {
        None => Ok(default),
        Some("none") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("--max-depth must be a number or none, got {v:?}"))
            .input(),
    }
}

fn stoplist(path: Option<&Path>) -> Outcome<StopList> {
    match path {
        None => Ok(StopList::default()),
        Some(p) => {
            let file = fs::File::open(p)
                .with_context(|| format!("cannot open stopword list {}", p.display()))
                .input()?;
            StopList::from_reader(std::io::BufReader::new(file))
                .with_context(|| format!("cannot read {}", p.display()))
                .input()
        }
    }
}

fn labels(names: Option<&str>) -> Outcome<LabelSet> {
    match names {
        None => Ok(LabelSet::default()),
        Some(s) => LabelSet::new(s.split(',').map(str::trim).filter(|l| !l.is_empty())).input(),
    }
}

fn schema(opts: &CorpusOpts, default_depth: Option<usize>) -> Outcome<Schema> {
    Ok(Schema {
        labels: labels(opts.labels.as_deref())?,
        stopwords: stoplist(opts.stopwords.as_deref())?,
        max_depth: max_depth(opts.max_depth.as_deref(), default_depth)?,
    })
}

fn format_of(name: Option<&str>, path: &Path) -> Outcome<Format> {
    match name {
        Some(n) => n.parse().map_err(|e: String| anyhow!(e)).input(),
        None => Ok(Format::from_path(path)),
    }
}

fn read_corpus(path: &Path, format: Option<&str>, schema: &Schema) -> Outcome<Vec<NestedAnnotation>> {
    let format = format_of(format, path)?;
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .input()?;
    parse_corpus(file, format, schema)
        .with_context(|| format!("{}", path.display()))
        .input()
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .input()
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()).runtime(),
    }
}

fn summary(stats: &CorpusStats) -> String {
    format!(
        "silver *S={} *NS={} *E={} *NE={}",
        stats.num_sentences, stats.num_nested_sentences, stats.num_entities, stats.num_nested_entities
    )
}

pub fn stats(path: &Path, opts: &CorpusOpts, jsonl: Option<&Path>, correlate: bool) -> Outcome {
    let schema = schema(opts, None)?;
    let corpus = read_corpus(path, opts.format.as_deref(), &schema)?;
    let (stats, corr) = (corpus_stats(&corpus), label_correlation(&corpus));
    let input = if correlate {
        ReportInput::<f64> {
            correlation: Some(&corr),
            ..Default::default()
        }
    } else {
        ReportInput {
            stats: Some(&stats),
            ..Default::default()
        }
    };
    let report = render_report(&schema.labels, &input);
    emit(None, &report.text)?;
    if let Some(p) = jsonl {
        write_file(p, &report.jsonl)?;
    }
    Ok(())
}

pub fn linearize(path: &Path, opts: &CorpusOpts, output: Option<&Path>) -> Outcome {
    let schema = schema(opts, None)?;
    let corpus = read_corpus(path, opts.format.as_deref(), &schema)?;
    let seqs: Vec<_> = corpus.iter().map(encode).collect();
    emit(output, &write_sequences(&seqs))
}

pub fn delinearize(path: &Path, opts: &CorpusOpts, output: Option<&Path>) -> Outcome {
    let schema = schema(opts, None)?;
    let text = read_text(path)?;
    let line_numbers = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1);
    let mut corpus = Vec::new();
    let mut seen = HashSet::new();
    for (seq, line) in parse_sequences(&text).into_iter().zip(line_numbers) {
        let ann = decode(&seq, &schema)
            .with_context(|| format!("{} line {line}: sequence {}", path.display(), seq.source_id))
            .input()?;
        if !seen.insert(seq.source_id.clone()) {
            return Err(anyhow!(
                "{} line {line}: duplicate sentence id {}",
                path.display(),
                seq.source_id
            ))
            .input();
        }
        corpus.push(ann);
    }
    let format = match (opts.format.as_deref(), output) {
        (None, None) => Format::Jsonl,
        (name, out) => format_of(name, out.unwrap_or(Path::new("")))?,
    };
    emit(output, &write_corpus(&corpus, format).input()?)
}

/// Worker clients shared between capabilities that name the same command.
struct Workers(Vec<(String, WorkerClient)>);

impl Workers {
    fn start(commands: &[Option<String>], timeout: std::time::Duration) -> Outcome<Workers> {
        let mut out: Vec<(String, WorkerClient)> = Vec::new();
        for cmd in commands.iter().flatten() {
            if out.iter().any(|(c, _)| c == cmd) {
                continue;
            }
            log::info!("starting worker {cmd}");
            out.push((cmd.clone(), WorkerClient::spawn_shell(cmd, timeout).runtime()?));
        }
        Ok(Workers(out))
    }

    fn get(&self, cmd: &str) -> &WorkerClient {
        &self.0.iter().find(|(c, _)| c == cmd).expect("started above").1
    }
}

pub fn augment(config: Option<&Path>, overrides: &[String], workers: Option<usize>) -> Outcome {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p).input()?,
        None => RunConfig::default(),
    };
    for pair in overrides {
        cfg.apply_override(pair, Path::new(".")).input()?;
    }
    cfg.validate().input()?;
    let (corpus_path, out_dir) = (cfg.corpus.clone().unwrap(), cfg.out_dir.clone().unwrap());

    let unbounded = Schema {
        labels: cfg.labels.clone(),
        stopwords: stoplist(cfg.stopwords.as_deref())?,
        max_depth: None,
    };
    let format = cfg.format.unwrap_or_else(|| Format::from_path(&corpus_path));
    let file = fs::File::open(&corpus_path)
        .with_context(|| format!("cannot open {}", corpus_path.display()))
        .input()?;
    let corpus = parse_corpus(file, format, &unbounded)
        .with_context(|| format!("{}", corpus_path.display()))
        .input()?;
    let (corpus, removed) = match cfg.max_depth {
        Some(d) => depth_prefilter(corpus, d),
        None => (corpus, Vec::new()),
    };
    if !removed.is_empty() {
        eprintln!(
            "removed {} sentences nested deeper than {}",
            removed.len(),
            cfg.max_depth.unwrap_or(DEFAULT_MAX_DEPTH)
        );
    }
    if corpus.is_empty() {
        return Err(anyhow!("{} has no sentences to augment", corpus_path.display())).input();
    }
    let schema = unbounded.with_max_depth(cfg.max_depth);

    let env = worker_env();
    let choices = [&cfg.attention, &cfg.embedding, &cfg.fill, &cfg.score];
    let commands = choices
        .iter()
        .map(|b| b.command(env.as_deref()))
        .collect::<anyhow::Result<Vec<_>>>()
        .input()?;
    let builtin = if commands.iter().any(Option::is_none) {
        Some(Builtin::<f64>::fit(&corpus).runtime()?)
    } else {
        None
    };
    let clients = Workers::start(&commands, cfg.worker_timeout)?;
    let local = || builtin.as_ref().expect("fitted when some capability is builtin");
    let backends = Backends {
        attention: match &commands[0] {
            None => &local().attention,
            Some(c) => clients.get(c),
        },
        embedding: match &commands[1] {
            None => &local().embedder,
            Some(c) => clients.get(c),
        },
        fill: match &commands[2] {
            None => &local().generator,
            Some(c) => clients.get(c),
        },
        score: match &commands[3] {
            None => local().generator.model(),
            Some(c) => clients.get(c),
        },
    };

    let threads = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let output = run_augment(&corpus, &schema, &cfg.augment, &backends, threads).map_err(pipeline)?;
    let run = output.render();

    fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))
        .runtime()?;
    for (name, text) in [
        ("silver.jsonl", &run.silver),
        ("aug_golden.jsonl", &run.aug_golden),
        ("report.jsonl", &run.report),
        ("templates.txt", &run.templates),
        ("templates.meta.jsonl", &run.template_meta),
        ("embeddings.jsonl", &run.embeddings),
        ("retrieval.jsonl", &run.retrieval),
        ("run.conf", &cfg.to_text()),
    ] {
        write_file(&out_dir.join(name), text)?;
    }
    let generated = output.generations.len();
    let silver = output.samples().filter(|s| s.is_silver()).count();
    println!(
        "{} sentences, {generated} generated, {silver} silver, {} kept",
        corpus.len(),
        output.kept.len()
    );
    println!("{}", summary(&output.silver_stats()));
    Ok(())
}

pub struct FilterArgs<'a> {
    pub corpus: &'a Path,
    pub generated: &'a Path,
    pub out_dir: &'a Path,
    pub silver_rate: f64,
    pub match_mode: &'a str,
    pub score: &'a str,
    pub silver_prefix: &'a str,
    pub opts: &'a CorpusOpts,
}

pub fn filter(args: FilterArgs<'_>) -> Outcome {
    let schema = schema(args.opts, Some(DEFAULT_MAX_DEPTH))?;
    let mode = crate::config::parse_match(args.match_mode).input()?;
    cnlaug::cfm::FilterConfig::new(args.silver_rate).input()?;
    let golden = read_corpus(args.corpus, args.opts.format.as_deref(), &schema)?;
    let generated = parse_sequences(&read_text(args.generated)?);

    let command = Backend::parse(args.score)
        .and_then(|b| b.command(worker_env().as_deref()))
        .input()?;
    let model;
    let client;
    let scorer: &dyn ScoreBackend<f64> = match command {
        None => {
            let sentences: Vec<Vec<&str>> = golden.iter().map(|a| a.words().collect()).collect();
            model = NgramModel::<f64>::train(&sentences, DEFAULT_SMOOTHING).input()?;
            &model
        }
        Some(cmd) => {
            client = WorkerClient::spawn_shell(&cmd, DEFAULT_TIMEOUT).runtime()?;
            &client
        }
    };
    let samples = filter_generated(&golden, generated, &schema, mode, scorer).map_err(pipeline)?;
    let selection = select(&golden, &samples, args.silver_rate, args.silver_prefix, &schema).map_err(pipeline)?;

    fs::create_dir_all(args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))
        .runtime()?;
    let jsonl = |c: &[NestedAnnotation]| write_corpus(c, Format::Jsonl).runtime();
    write_file(&args.out_dir.join("silver.jsonl"), &jsonl(&selection.silver)?)?;
    write_file(&args.out_dir.join("aug_golden.jsonl"), &jsonl(&selection.aug_golden)?)?;
    write_file(
        &args.out_dir.join("report.jsonl"),
        &sample_report(&samples, &selection.kept),
    )?;
    let silver = samples.iter().filter(|s| s.is_silver()).count();
    println!(
        "{} generated, {silver} silver, {} kept",
        samples.len(),
        selection.kept.len()
    );
    println!("{}", summary(&corpus_stats(&selection.silver)));
    Ok(())
}

pub fn evaluate(gold: &Path, pred: &Path, opts: &CorpusOpts, jsonl: Option<&Path>) -> Outcome {
    let schema = schema(opts, None)?;
    let gold = read_corpus(gold, opts.format.as_deref(), &schema)?;
    let pred = read_corpus(pred, opts.format.as_deref(), &schema)?;
    let eval = span_prf::<f64>(&gold, &pred, &schema.labels).input()?;
    let report = render_report(
        &schema.labels,
        &ReportInput {
            prf: Some(&eval),
            ..Default::default()
        },
    );
    emit(None, &report.text)?;
    if let Some(p) = jsonl {
        write_file(p, &report.jsonl)?;
    }
    Ok(())
}

/// Micro and macro F1 from a report jsonl.
fn read_metrics(path: &Path) -> Outcome<(f64, f64)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("missing metric file {}", path.display()))
        .input()?;
    let (mut micro, mut macro_) = (None, None);
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), n + 1))
            .input()?;
        if v["metric"] != "f1" {
            continue;
        }
        let slot = match v["section"].as_str() {
            Some("micro") => &mut micro,
            Some("macro") => &mut macro_,
            _ => continue,
        };
        *slot = v["value"].as_f64();
    }
    match (micro, macro_) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(anyhow!("{} lacks micro and macro f1 records", path.display())).input(),
    }
}

pub fn sweep(rates: &[f64], dir: &Path, pattern: &str) -> Outcome {
    let mut seen = HashSet::new();
    for &r in rates {
        if !(r > 0.0 && r <= 1.0) {
            return Err(anyhow!("silver rate {r} is outside (0, 1]")).input();
        }
        if !seen.insert(format!("{r:.2}")) {
            return Err(anyhow!("silver rate {r:.2} is listed twice")).input();
        }
    }
    let mut table = format!("{:<6}{:>9}{:>9}\n", "rate", "F-micro", "F-macro");
    for &r in rates {
        let file = dir.join(pattern.replace("{rate}", &format!("{r:.2}")));
        let (micro, macro_) = read_metrics(&file)?;
        let _ = writeln!(table, "{r:<6.2}{:>9.2}{:>9.2}", micro * 100.0, macro_ * 100.0);
    }
    emit(None, &table)
}

pub fn synth(sentences: usize, seed: u64, deep_every: usize, output: Option<&Path>) -> Outcome {
    let corpus = cnlaug::synth::synthetic_corpus(sentences, seed, deep_every);
    let format = output.map_or(Format::Jsonl, Format::from_path);
    emit(output, &write_corpus(&corpus, format).runtime()?)
}
