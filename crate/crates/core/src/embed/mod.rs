//! Paragraph-vector representations for products and queries in one shared
//! latent space.

mod pvdm;
mod sampler;

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use pvdm::{Document, PvdmConfig};
pub use sampler::UnigramSampler;

use crate::checkpoint::{read_container, tensors_digest, write_container};
use crate::corpus::{tokenize, SplitCorpus};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EMBEDDINGS_STEM: &str = "embeddings";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "key", rename_all = "lowercase")]
pub enum DocKey {
    Product(String),
    Query(String),
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub config: PvdmConfig,
    /// Row index of `doc_vectors` to document key.
    pub docs: Vec<DocKey>,
    pub doc_vectors: Tensor,
    pub words: Vec<String>,
    pub word_freq: Vec<u64>,
    pub word_vectors: Tensor,
    /// Negative-sampling output weights, needed to fit vectors for new queries.
    pub output_vectors: Tensor,
    pub epoch_loss: Vec<f64>,
    doc_index: HashMap<DocKey, usize>,
    word_index: HashMap<String, usize>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl EmbeddingTable {
    fn assemble(
        config: PvdmConfig,
        docs: Vec<DocKey>,
        doc_vectors: Tensor,
        words: Vec<String>,
        word_freq: Vec<u64>,
        word_vectors: Tensor,
        output_vectors: Tensor,
        epoch_loss: Vec<f64>,
    ) -> Self {
        let doc_index = docs.iter().cloned().enumerate().map(|(i, d)| (d, i)).collect();
        let word_index = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        EmbeddingTable {
            config,
            docs,
            doc_vectors,
            words,
            word_freq,
            word_vectors,
            output_vectors,
            epoch_loss,
            doc_index,
            word_index,
        }
    }

    /// Trains directly on token documents over a given vocabulary.
    pub fn train_documents(
        keys: Vec<DocKey>,
        token_docs: &[Vec<String>],
        vocab: &[(String, u64)],
        config: &PvdmConfig,
    ) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if keys.len() != token_docs.len() {
            return Err(Error::Config("one key per document required".into()));
        }
        let word_index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, (w, _))| (w.as_str(), i)).collect();
        let docs: Vec<Document> = token_docs
            .iter()
            .enumerate()
            .map(|(i, toks)| Document {
                doc_id: i,
                tokens: toks.iter().filter_map(|t| word_index.get(t.as_str()).copied()).collect(),
            })
            .collect();
        let word_freq: Vec<u64> = vocab.iter().map(|(_, c)| (*c).max(1)).collect();
        let (state, losses) = pvdm::train(&docs, docs.len(), &word_freq, config);
        let k = config.k;
        Ok(Self::assemble(
            config.clone(),
            keys,
            Tensor::new(vec![docs.len().max(1), k], state.docs)?,
            vocab.iter().map(|(w, _)| w.clone()).collect(),
            word_freq,
            Tensor::new(vec![vocab.len(), k], state.words)?,
            Tensor::new(vec![vocab.len(), k], state.outputs)?,
            losses,
        ))
    }

    /// One document per product (its training reviews) and one per query.
    pub fn train(corpus: &SplitCorpus, config: &PvdmConfig) -> Result<Self> {
        let mut keys: Vec<DocKey> = corpus.products.iter().cloned().map(DocKey::Product).collect();
        let mut token_docs = corpus.product_documents();
        for (q, text) in corpus.queries.iter().enumerate() {
            keys.push(DocKey::Query(text.clone()));
            token_docs.push(corpus.query_tokens(q));
        }
        Self::train_documents(keys, &token_docs, &corpus.vocab, config)
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn row(&self, key: &DocKey) -> Option<&[f32]> {
        let k = self.k();
        self.doc_index
            .get(key)
            .map(|&i| &self.doc_vectors.data()[i * k..(i + 1) * k])
    }

    pub fn product_vector(&self, product_id: &str) -> Option<&[f32]> {
        self.row(&DocKey::Product(product_id.to_string()))
    }

    pub fn query_vector(&self, query_text: &str) -> Option<&[f32]> {
        self.row(&DocKey::Query(query_text.to_string()))
    }

    /// Vector for a query string. Queries seen during training return their
    /// stored row; others get a fresh document vector fitted against the
    /// frozen word and output vectors.
    pub fn infer_query_vector(&self, query_text: &str, seed: u64) -> Result<Vec<f32>> {
        if let Some(v) = self.query_vector(query_text) {
            return Ok(v.to_vec());
        }
        let tokens: Vec<usize> = tokenize(query_text)
            .iter()
            .filter_map(|t| self.word_index.get(t).copied())
            .collect();
        if tokens.is_empty() {
            return Err(Error::UntrainableQuery(query_text.to_string()));
        }
        let k = self.k();
        let mut rng = ChaCha8Rng::seed_from_u64(pvdm::stream_seed(seed, fnv1a(query_text), 0));
        let mut doc = pvdm::init_rows(1, k, &mut rng);
        let mut words = self.word_vectors.data().to_vec();
        let mut outputs = self.output_vectors.data().to_vec();
        let sampler = UnigramSampler::new(&self.word_freq);
        let epochs = self.config.infer_epochs;
        for epoch in 0..epochs {
            let lr = pvdm::learning_rate(&self.config, epoch, epochs);
            pvdm::train_document(
                &mut doc, &tokens, &mut words, &mut outputs, &sampler, &self.config, lr, false, &mut rng,
            );
        }
        Ok(doc)
    }

    pub fn checksum(&self) -> String {
        tensors_digest(&[
            ("doc_vectors", &self.doc_vectors),
            ("word_vectors", &self.word_vectors),
            ("output_vectors", &self.output_vectors),
        ])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = json!({
            "k": self.k(),
            "config": self.config,
            "docs": self.docs,
            "words": self.words,
            "word_freq": self.word_freq,
            "epoch_loss": self.epoch_loss,
        });
        write_container(
            dir,
            EMBEDDINGS_STEM,
            &[
                ("doc_vectors", &self.doc_vectors),
                ("word_vectors", &self.word_vectors),
                ("output_vectors", &self.output_vectors),
            ],
            meta,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (tensors, meta) = read_container(dir, EMBEDDINGS_STEM)?;
        let path = dir.join(format!("{EMBEDDINGS_STEM}.json"));
        let bad = |m: &str| Error::format(&path, m.to_string());
        let field = |name: &str| meta.get(name).cloned().ok_or_else(|| bad(name));
        let config: PvdmConfig = serde_json::from_value(field("config")?).map_err(|e| bad(&e.to_string()))?;
        let docs: Vec<DocKey> = serde_json::from_value(field("docs")?).map_err(|e| bad(&e.to_string()))?;
        let words: Vec<String> = serde_json::from_value(field("words")?).map_err(|e| bad(&e.to_string()))?;
        let word_freq: Vec<u64> = serde_json::from_value(field("word_freq")?).map_err(|e| bad(&e.to_string()))?;
        let epoch_loss: Vec<f64> = serde_json::from_value(field("epoch_loss")?).map_err(|e| bad(&e.to_string()))?;
        let get = |name: &str| -> Result<Tensor> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| bad(&format!("missing tensor {name}")))
        };
        let doc_vectors = get("doc_vectors")?;
        let word_vectors = get("word_vectors")?;
        let output_vectors = get("output_vectors")?;
        if doc_vectors.shape() != [docs.len(), config.k] || word_vectors.shape() != [words.len(), config.k] {
            return Err(bad("tensor shapes disagree with manifest"));
        }
        Ok(Self::assemble(
            config,
            docs,
            doc_vectors,
            words,
            word_freq,
            word_vectors,
            output_vectors,
            epoch_loss,
        ))
    }
}
