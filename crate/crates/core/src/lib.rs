//! Augmentation toolkit for nested named-entity corpora.
//!
//! Nested annotations are written as flat token sequences with bracketing
//! label sentinels (`<GPE> France </GPE>`). Non-keyword context is masked
//! into templates, which are optionally fused with a similar sentence and
//! refilled by a generator. The results are kept only when the entity
//! labels come back intact, ranked by fluency.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`). The
//! aliases below fix it to `f64`.

pub mod cfm;
pub mod cnlc;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod template;

pub type Attention = template::AttentionMap<f64>;
pub type Embedding = retrieval::SentenceEmbedding<f64>;
pub type Embedder = retrieval::TfIdfEmbedder<f64>;
pub type Index = retrieval::RetrievalIndex<f64>;
pub type Model = gateway::NgramModel<f64>;
pub type Sample = cfm::AugmentedSample<f64>;
pub type Prf = eval::Prf<f64>;
pub type Evaluation = eval::SpanEvaluation<f64>;
pub type Output = pipeline::AugmentOutput<f64>;
