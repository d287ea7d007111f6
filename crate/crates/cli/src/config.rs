//! Run configuration: a `key = value` file, overridable key by key.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use cnlaug::cfm::MatchMode;
use cnlaug::corpus::{Format, LabelSet, DEFAULT_MAX_DEPTH};
use cnlaug::pipeline::AugmentConfig;

/// Overrides the command of every worker-backed capability.
pub const WORKER_ENV: &str = "CNLAUG_WORKER";

/// Files an augment run writes into `out_dir`.
pub const OUTPUTS: [&str; 8] = [
    "silver.jsonl",
    "aug_golden.jsonl",
    "report.jsonl",
    "templates.txt",
    "templates.meta.jsonl",
    "embeddings.jsonl",
    "retrieval.jsonl",
    "run.conf",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Builtin,
    /// `None` means the command comes from the environment.
    Worker(Option<String>),
}

impl Backend {
    pub fn parse(s: &str) -> Result<Backend> {
        match s.trim() {
            "builtin" => Ok(Backend::Builtin),
            "worker" => Ok(Backend::Worker(None)),
            other => match other.strip_prefix("worker:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Backend::Worker(Some(cmd.trim().to_string()))),
                _ => bail!("backend must be builtin, worker or worker:<command>, got {other:?}"),
            },
        }
    }

    /// The command line to run, if this is a worker.
    pub fn command(&self, env: Option<&str>) -> Result<Option<String>> {
        match (self, env) {
            (Backend::Builtin, _) => Ok(None),
            (Backend::Worker(_), Some(cmd)) => Ok(Some(cmd.to_string())),
            (Backend::Worker(Some(cmd)), None) => Ok(Some(cmd.clone())),
            (Backend::Worker(None), None) => bail!("backend `worker` needs a command or {WORKER_ENV}"),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Builtin => f.write_str("builtin"),
            Backend::Worker(None) => f.write_str("worker"),
            Backend::Worker(Some(cmd)) => write!(f, "worker:{cmd}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub format: Option<Format>,
    pub out_dir: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub labels: LabelSet,
    pub max_depth: Option<usize>,
    pub augment: AugmentConfig,
    pub attention: Backend,
    pub embedding: Backend,
    pub fill: Backend,
    pub score: Backend,
    pub worker_timeout: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            format: None,
            out_dir: None,
            stopwords: None,
            labels: LabelSet::default(),
            max_depth: Some(DEFAULT_MAX_DEPTH),
            augment: AugmentConfig::default(),
            attention: Backend::Builtin,
            embedding: Backend::Builtin,
            fill: Backend::Builtin,
            score: Backend::Builtin,
            worker_timeout: cnlaug::gateway::DEFAULT_TIMEOUT,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("{key}: cannot parse {value:?} as a number"))
}

fn path(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Read a config file. Relative paths in it are taken from the file's
    /// directory.
    pub fn load(file: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
        let base = file.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, base)
            .with_context(|| format!("in {}", file.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            self.set(key.trim(), value.trim(), base)
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    /// `key=value` from the command line; paths relative to `base`.
    pub fn apply_override(&mut self, pair: &str, base: &Path) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override {pair:?} is not key=value"))?;
        self.set(key.trim(), value.trim(), base)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let a = &mut self.augment;
        match key {
            "corpus" => self.corpus = Some(path(base, value)),
            "format" => self.format = Some(value.parse().map_err(|e: String| anyhow!(e))?),
            "out_dir" => self.out_dir = Some(path(base, value)),
            "stopwords" => self.stopwords = (!value.is_empty()).then(|| path(base, value)),
            "labels" => self.labels = LabelSet::new(value.split(',').map(str::trim).filter(|s| !s.is_empty()))?,
            "max_depth" => {
                self.max_depth = match value {
                    "none" => None,
                    v => Some(number(key, v)?),
                }
            }
            "seed" => a.seed = number(key, value)?,
            "keyword_ratio" => a.keyword_ratio = number(key, value)?,
            "mask_rate" => a.mask_rate = number(key, value)?,
            "fusion_mask_rate" => a.fusion_mask_rate = number(key, value)?,
            "top_n" => a.top_n = number(key, value)?,
            "silver_rate" => a.silver_rate = number(key, value)?,
            "max_len" => a.max_len = number(key, value)?,
            "match" => a.match_mode = parse_match(value)?,
            "silver_prefix" => a.silver_prefix = value.to_string(),
            "attention" => self.attention = Backend::parse(value)?,
            "embedding" => self.embedding = Backend::parse(value)?,
            "fill" => self.fill = Backend::parse(value)?,
            "score" => self.score = Backend::parse(value)?,
            "worker_timeout_ms" => self.worker_timeout = Duration::from_millis(number(key, value)?),
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    /// Check everything an augment run needs before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        let corpus = self.corpus.as_ref().ok_or_else(|| anyhow!("no corpus configured"))?;
        let out = self.out_dir.as_ref().ok_or_else(|| anyhow!("no out_dir configured"))?;
        let inputs: Vec<&PathBuf> = std::iter::once(corpus).chain(&self.stopwords).collect();
        for name in OUTPUTS {
            let target = out.join(name);
            for input in &inputs {
                if same_file(input, &target) {
                    bail!("output {} would overwrite input {}", target.display(), input.display());
                }
            }
        }
        Ok(())
    }

    /// The configuration as a file that [`RunConfig::load`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        put("corpus", show(&self.corpus));
        if let Some(f) = self.format {
            put("format", format_name(f).into());
        }
        put("out_dir", show(&self.out_dir));
        put("stopwords", show(&self.stopwords));
        let labels: Vec<&str> = self.labels.iter().map(|l| l.as_str()).collect();
        put("labels", labels.join(","));
        put("max_depth", self.max_depth.map_or("none".into(), |d| d.to_string()));
        let a = &self.augment;
        put("seed", a.seed.to_string());
        put("keyword_ratio", a.keyword_ratio.to_string());
        put("mask_rate", a.mask_rate.to_string());
        put("fusion_mask_rate", a.fusion_mask_rate.to_string());
        put("top_n", a.top_n.to_string());
        put("silver_rate", a.silver_rate.to_string());
        put("max_len", a.max_len.to_string());
        put(
            "match",
            match a.match_mode {
                MatchMode::LabelMultiset => "labels".into(),
                MatchMode::Exact => "exact".into(),
            },
        );
        put("silver_prefix", a.silver_prefix.clone());
        put("attention", self.attention.to_string());
        put("embedding", self.embedding.to_string());
        put("fill", self.fill.to_string());
        put("score", self.score.to_string());
        put("worker_timeout_ms", self.worker_timeout.as_millis().to_string());
        out
    }
}

pub fn parse_match(value: &str) -> Result<MatchMode> {
    match value {
        "labels" => Ok(MatchMode::LabelMultiset),
        "exact" => Ok(MatchMode::Exact),
        other => bail!("match must be labels or exact, got {other:?}"),
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Jsonl => "jsonl",
        Format::Inline => "inline",
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
