//! The augmentation run: retrieval, templates, generation, filtering and
//! merge, over a whole corpus.
//!
//! Every random draw for a sentence comes from a stream keyed by the run
//! seed, the sentence id and the draw's purpose, and results are collected
//! in corpus order. The output therefore does not depend on the number of
//! threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::cfm::{
    classify_against, merge_aug_golden, rank_and_select, AugmentedSample, Expectation, FilterConfig, MatchMode,
    DEFAULT_SILVER_RATE, SILVER_PREFIX,
};
use crate::cnlc::{write_sequences, LinearizedSequence};
use crate::corpus::{corpus_stats, write_corpus, CorpusStats, Format, NestedAnnotation, Schema};
use crate::error::{GatewayError, PipelineError};
use crate::gateway::{
    fill_template, AttentionBackend, CooccurrenceAttention, EmbeddingBackend, FillBackend, NgramGenerator, NgramModel,
    ScoreBackend, DEFAULT_SMOOTHING,
};
use crate::retrieval::{
    fuse_templates, RetrievalConfig, RetrievalIndex, SentenceEmbedding, TfIdfEmbedder, DEFAULT_MAX_LEN,
};
use crate::scalar::Real;
use crate::seed::stream_rng;
use crate::template::{
    build_template, dynamic_mask, select_keywords, GaussianMaskConfig, Template, TemplateMetadata,
    DEFAULT_KEYWORD_RATIO, DEFAULT_MASK_RATE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub seed: u64,
    pub keyword_ratio: f64,
    /// Centre of the masking-rate distribution for single-sentence templates.
    pub mask_rate: f64,
    /// Same, for the two halves of a fused template.
    pub fusion_mask_rate: f64,
    /// Neighbours fused with each sentence; 0 disables fusion.
    pub top_n: usize,
    pub silver_rate: f64,
    pub max_len: usize,
    pub match_mode: MatchMode,
    pub silver_prefix: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            seed: 0,
            keyword_ratio: DEFAULT_KEYWORD_RATIO,
            mask_rate: DEFAULT_MASK_RATE,
            fusion_mask_rate: DEFAULT_MASK_RATE,
            top_n: 1,
            silver_rate: DEFAULT_SILVER_RATE,
            max_len: DEFAULT_MAX_LEN,
            match_mode: MatchMode::LabelMultiset,
            silver_prefix: SILVER_PREFIX.to_string(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.keyword_ratio > 0.0 && self.keyword_ratio <= 1.0) {
            return bad(format!("keyword_ratio {} is outside (0, 1]", self.keyword_ratio));
        }
        for (name, v) in [
            ("mask_rate", self.mask_rate),
            ("fusion_mask_rate", self.fusion_mask_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} is outside [0, 1]"));
            }
        }
        FilterConfig::new(self.silver_rate)?;
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        if self.silver_prefix.is_empty() {
            return bad("silver_prefix must not be empty".into());
        }
        Ok(())
    }
}

/// One model per capability.
pub struct Backends<'a, F> {
    pub attention: &'a dyn AttentionBackend<F>,
    pub embedding: &'a dyn EmbeddingBackend<F>,
    pub fill: &'a dyn FillBackend,
    pub score: &'a dyn ScoreBackend<F>,
}

/// In-process stand-ins fitted to the corpus: sentence co-occurrence
/// attention, TF-IDF embeddings and a smoothed bigram model.
pub struct Builtin<F> {
    pub attention: CooccurrenceAttention<F>,
    pub embedder: TfIdfEmbedder<F>,
    pub generator: NgramGenerator<F>,
}

impl<F: Real> Builtin<F> {
    pub fn fit(corpus: &[NestedAnnotation]) -> Result<Self, GatewayError> {
        let sentences: Vec<Vec<&str>> = corpus.iter().map(|a| a.words().collect()).collect();
        let model = NgramModel::train(&sentences, F::of(DEFAULT_SMOOTHING))?;
        Ok(Builtin {
            attention: CooccurrenceAttention::fit(corpus, F::one()),
            embedder: TfIdfEmbedder::fit_corpus(corpus),
            generator: NgramGenerator::new(model),
        })
    }

    pub fn backends(&self) -> Backends<'_, F> {
        Backends {
            attention: &self.attention,
            embedding: &self.embedder,
            fill: &self.generator,
            score: self.generator.model(),
        }
    }
}

/// A generated sample together with the template it was filled from.
#[derive(Debug, Clone)]
pub struct Generation<F> {
    pub template: Template,
    pub sample: AugmentedSample<F>,
}

#[derive(Debug, Clone)]
pub struct AugmentOutput<F> {
    pub index: RetrievalIndex<F>,
    /// Corpus order, then variant.
    pub generations: Vec<Generation<F>>,
    /// Indices into `generations`, best first.
    pub kept: Vec<usize>,
    /// Kept silver sentences under their final ids.
    pub silver: Vec<NestedAnnotation>,
    pub aug_golden: Vec<NestedAnnotation>,
}

fn at(id: &str) -> impl Fn(GatewayError) -> PipelineError + '_ {
    move |source| PipelineError::Sentence {
        id: id.to_string(),
        source,
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Run the whole augmentation on `threads` worker threads. `corpus` should
/// already be depth-filtered.
pub fn augment<F: Real>(
    corpus: &[NestedAnnotation],
    schema: &Schema,
    cfg: &AugmentConfig,
    backends: &Backends<'_, F>,
    threads: usize,
) -> Result<AugmentOutput<F>, PipelineError> {
    cfg.validate()?;
    let invalid = |e: crate::error::TemplateError| PipelineError::InvalidConfig(e.to_string());
    let mask = GaussianMaskConfig::new(cfg.mask_rate).map_err(invalid)?;
    let fusion_mask = GaussianMaskConfig::new(cfg.fusion_mask_rate).map_err(invalid)?;
    let pool = pool(threads)?;
    pool.install(|| {
        let embeddings = corpus
            .par_iter()
            .map(|ann| {
                let words: Vec<&str> = ann.words().collect();
                let v = backends.embedding.embed(&words).map_err(at(ann.id()))?;
                Ok(SentenceEmbedding::new(ann.id(), v))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let index = if cfg.top_n > 0 {
            RetrievalIndex::build(embeddings, &RetrievalConfig::new(cfg.top_n)?)?
        } else {
            RetrievalIndex::without_neighbors(embeddings)
        };

        let bases = corpus
            .par_iter()
            .map(|ann| {
                let attention = backends.attention.attention(ann).map_err(at(ann.id()))?;
                let keywords = select_keywords(ann, &attention, cfg.keyword_ratio)
                    .map_err(GatewayError::from)
                    .map_err(at(ann.id()))?;
                Ok(build_template(ann, &keywords))
            })
            .collect::<Result<Vec<Template>, PipelineError>>()?;

        let position: std::collections::HashMap<&str, usize> =
            corpus.iter().enumerate().map(|(i, a)| (a.id(), i)).collect();

        let per_sentence = (0..corpus.len())
            .into_par_iter()
            .map(|i| {
                let ann = &corpus[i];
                let id = ann.id();
                let mut out = Vec::new();

                let mut rng = stream_rng(cfg.seed, &[id, "mask"]);
                let template = dynamic_mask(&bases[i], &mask, &mut rng).template;
                let mut rng = stream_rng(cfg.seed, &[id, "fill", "0"]);
                let filled = fill_template(&template, backends.fill, &mut rng).map_err(at(id))?;
                let expected = Expectation::from_source(ann);
                let sample = classify_against(filled, 0, &expected, cfg.match_mode, schema);
                out.push(Generation { template, sample });

                for (v, (partner, _)) in index.neighbors(i).iter().enumerate() {
                    let variant = (v + 1).to_string();
                    let j = position[partner.as_str()];
                    let mut rng = stream_rng(cfg.seed, &[id, "fuse", &variant]);
                    let a = dynamic_mask(&bases[i], &fusion_mask, &mut rng).template;
                    let b = dynamic_mask(&bases[j], &fusion_mask, &mut rng).template;
                    let fused = fuse_templates(&a, &b, cfg.max_len);
                    let mut rng = stream_rng(cfg.seed, &[id, "fill", &variant]);
                    let filled = fill_template(&fused, backends.fill, &mut rng).map_err(at(id))?;
                    let expected = Expectation::from_template(&fused);
                    let mut sample = classify_against(filled.without_fuse(), v + 1, &expected, cfg.match_mode, schema);
                    sample.partner = Some(partner.clone());
                    out.push(Generation {
                        template: fused,
                        sample,
                    });
                }

                for g in &mut out {
                    g.sample.score_with(backends.score).map_err(at(id))?;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let generations: Vec<Generation<F>> = per_sentence.into_iter().flatten().collect();

        let samples: Vec<AugmentedSample<F>> = generations.iter().map(|g| g.sample.clone()).collect();
        let selection = select(corpus, &samples, cfg.silver_rate, &cfg.silver_prefix, schema)?;
        Ok(AugmentOutput {
            index,
            generations,
            kept: selection.kept,
            silver: selection.silver,
            aug_golden: selection.aug_golden,
        })
    })
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub kept: Vec<usize>,
    pub silver: Vec<NestedAnnotation>,
    pub aug_golden: Vec<NestedAnnotation>,
}

/// Keep the top share of the silver samples and append them to `golden`.
pub fn select<F: Real>(
    golden: &[NestedAnnotation],
    samples: &[AugmentedSample<F>],
    silver_rate: f64,
    prefix: &str,
    schema: &Schema,
) -> Result<Selection, PipelineError> {
    let kept = rank_and_select(samples, &FilterConfig::new(silver_rate)?);
    let chosen: Vec<NestedAnnotation> = kept
        .iter()
        .map(|&k| {
            let s = &samples[k];
            s.recovered
                .clone()
                .expect("silver samples carry their recovered annotation")
                .with_id(s.sample_id())
        })
        .collect();
    let aug_golden = merge_aug_golden(golden, &chosen, prefix, schema)?;
    let silver = aug_golden[golden.len()..].to_vec();
    Ok(Selection {
        kept,
        silver,
        aug_golden,
    })
}

/// Classify and rank externally generated sequences against the sentences
/// they were generated from, matched by `source_id`. Sequences whose source
/// is unknown are an error.
pub fn filter_generated<F: Real>(
    golden: &[NestedAnnotation],
    generated: Vec<LinearizedSequence>,
    schema: &Schema,
    mode: MatchMode,
    scorer: &dyn ScoreBackend<F>,
) -> Result<Vec<AugmentedSample<F>>, PipelineError> {
    let by_id: std::collections::HashMap<&str, &NestedAnnotation> = golden.iter().map(|a| (a.id(), a)).collect();
    let mut variants: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut samples = Vec::with_capacity(generated.len());
    for seq in generated {
        let id = seq.source_id.clone();
        let source = by_id
            .get(id.as_str())
            .ok_or_else(|| PipelineError::UnknownSource(id.clone()))?;
        let variant = variants.entry(id.clone()).or_insert(0);
        let mut sample = classify_against(seq, *variant, &Expectation::from_source(source), mode, schema);
        *variant += 1;
        sample.score_with(scorer).map_err(at(&id))?;
        samples.push(sample);
    }
    Ok(samples)
}

#[derive(Serialize)]
struct TemplateRecord<'a> {
    sample: String,
    #[serde(flatten)]
    meta: TemplateMetadata<'a>,
}

/// Output files of a run, as strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedRun {
    pub silver: String,
    pub aug_golden: String,
    pub report: String,
    pub templates: String,
    pub template_meta: String,
    pub embeddings: String,
    pub retrieval: String,
}

pub fn sample_report<F: Real + Serialize>(samples: &[AugmentedSample<F>], kept: &[usize]) -> String {
    let mut flags = vec![false; samples.len()];
    for &k in kept {
        flags[k] = true;
    }
    let mut out = String::new();
    for (s, kept) in samples.iter().zip(flags) {
        out.push_str(&serde_json::to_string(&s.record(kept)).expect("records serialize"));
        out.push('\n');
    }
    out
}

impl<F: Real + Serialize> AugmentOutput<F> {
    pub fn samples(&self) -> impl Iterator<Item = &AugmentedSample<F>> {
        self.generations.iter().map(|g| &g.sample)
    }

    pub fn silver_stats(&self) -> CorpusStats {
        corpus_stats(&self.silver)
    }

    pub fn render(&self) -> RenderedRun {
        let samples: Vec<AugmentedSample<F>> = self.samples().cloned().collect();
        let mut template_meta = String::new();
        for g in &self.generations {
            let record = TemplateRecord {
                sample: g.sample.sample_id(),
                meta: g.template.metadata(),
            };
            template_meta.push_str(&serde_json::to_string(&record).expect("records serialize"));
            template_meta.push('\n');
        }
        let templates: Vec<LinearizedSequence> = self.generations.iter().map(|g| g.template.to_sequence()).collect();
        RenderedRun {
            silver: write_corpus(&self.silver, Format::Jsonl).expect("silver ids are valid"),
            aug_golden: write_corpus(&self.aug_golden, Format::Jsonl).expect("merged ids are valid"),
            report: sample_report(&samples, &self.kept),
            templates: write_sequences(&templates),
            template_meta,
            embeddings: self.index.embedding_cache(),
            retrieval: self.index.report(),
        }
    }
}
