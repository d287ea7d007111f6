//! Model capabilities behind one interface.
//!
//! Four capabilities feed the pipeline: attention maps (keyword selection),
//! sentence embeddings (retrieval), mask filling (generation) and sentence
//! scoring (confidence filtering). Each has a deterministic in-process
//! backend built from corpus statistics, and each can instead be served by
//! an external worker speaking the line protocol in [`protocol`].

mod attention;
mod ngram;
pub mod protocol;
mod worker;

use rand::RngCore;

use crate::cnlc::{Item, LinearizedSequence, Sentinel};
use crate::corpus::NestedAnnotation;
use crate::error::GatewayError;
use crate::retrieval::TfIdfEmbedder;
use crate::template::{AttentionMap, Template};

pub use attention::CooccurrenceAttention;
pub use ngram::{train_ngram, NgramGenerator, NgramModel, DEFAULT_SMOOTHING, MAX_EXPANSION};
pub use protocol::{BackendRequest, BackendResponse, Capability};
pub use worker::{WorkerClient, DEFAULT_TIMEOUT};

pub trait AttentionBackend<F>: Send + Sync {
    fn attention(&self, ann: &NestedAnnotation) -> Result<AttentionMap<F>, GatewayError>;
}

pub trait EmbeddingBackend<F>: Send + Sync {
    fn embed(&self, words: &[&str]) -> Result<Vec<F>, GatewayError>;
}

pub trait FillBackend: Send + Sync {
    /// Replace every `<mask>` with generated words.
    fn fill(&self, seq: &LinearizedSequence, rng: &mut dyn RngCore) -> Result<LinearizedSequence, GatewayError>;
}

pub trait ScoreBackend<F>: Send + Sync {
    /// Length-normalized log-likelihood; higher is more fluent.
    fn score(&self, words: &[&str]) -> Result<F, GatewayError>;
}

impl<F: crate::scalar::Real> EmbeddingBackend<F> for TfIdfEmbedder<F> {
    fn embed(&self, words: &[&str]) -> Result<Vec<F>, GatewayError> {
        Ok(TfIdfEmbedder::embed(self, words))
    }
}

/// Fill a template and check the generator kept to the contract: no mask
/// survives, and every sentinel in the output was in the request.
pub fn fill_template(
    template: &Template,
    backend: &dyn FillBackend,
    rng: &mut dyn RngCore,
) -> Result<LinearizedSequence, GatewayError> {
    let request = template.to_sequence();
    let filled = backend.fill(&request, rng)?;
    for item in &filled.items {
        match item {
            Item::Sentinel(Sentinel::Mask) => return Err(GatewayError::UnfilledMask),
            Item::Sentinel(s) if !request.items.contains(item) => {
                return Err(GatewayError::GeneratedSentinel(s.surface()))
            }
            _ => {}
        }
    }
    Ok(filled)
}

pub fn score_sentence<F>(words: &[&str], backend: &dyn ScoreBackend<F>) -> Result<F, GatewayError> {
    if words.is_empty() {
        return Err(GatewayError::EmptyInput);
    }
    backend.score(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Rogue(&'static str);

    impl FillBackend for Rogue {
        fn fill(&self, seq: &LinearizedSequence, _: &mut dyn RngCore) -> Result<LinearizedSequence, GatewayError> {
            let items = seq
                .items
                .iter()
                .map(|i| {
                    if i.is_mask() {
                        Item::from_surface(self.0)
                    } else {
                        i.clone()
                    }
                })
                .collect();
            Ok(LinearizedSequence::new(seq.source_id.clone(), items))
        }
    }

    fn masked_template() -> Template {
        Template {
            source_id: "t".into(),
            items: vec![Item::Word("a".into()), Item::Sentinel(Sentinel::Mask)],
            origins: vec![Some(0), None],
            keywords: Default::default(),
            masked: vec![],
            partner: None,
        }
    }

    #[test]
    fn generated_sentinels_are_protocol_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = masked_template();
        assert!(matches!(
            fill_template(&t, &Rogue("<PER>"), &mut rng),
            Err(GatewayError::GeneratedSentinel(_))
        ));
        assert!(matches!(
            fill_template(&t, &Rogue("<mask>"), &mut rng),
            Err(GatewayError::UnfilledMask)
        ));
        assert_eq!(fill_template(&t, &Rogue("b"), &mut rng).unwrap().to_text(), "a b");
    }
}
