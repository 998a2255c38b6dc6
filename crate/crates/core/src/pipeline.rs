//! File-level pipeline stages. Each stage reads its inputs from disk, writes
//! its artifacts into one output directory and records a [`RunManifest`]
//! there.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::baselines::{uql_rank, LanguageModelIndex, UserWordProfile};
use crate::config::Settings;
use crate::corpus::{build_corpus, parse_meta, parse_reviews, CorpusSummary, Split, SplitCorpus};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{self, AttentionRecord, EvalResult, Significance, ATTENTION_FILE, SIGNIFICANCE_FILE};
use crate::model::{Features, Model, Pair, UserContext, Variant, MODEL_STEM};
use crate::synth::{self, Profile, SynthConfig};
use crate::trainer::{self, TrainOptions, TrainReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub config: Settings,
    pub seed: u64,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

/// SHA-256 of a file, or of every file under a directory (relative path
/// and content, in sorted order, manifests excluded).
pub fn hash_path(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(hex::encode(Sha256::digest(&bytes)));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let full = path.join(&rel);
        let bytes = fs::read(&full).map_err(|e| Error::io(&full, e))?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, inputs: &[&Path]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: hash_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunManifest {
            version: MANIFEST_VERSION,
            command: command.to_string(),
            config: settings.clone(),
            seed: settings.seed,
            inputs,
            outputs: Vec::new(),
            wall_seconds: 0.0,
        })
    }

    /// Lists the directory's files as outputs and writes the manifest.
    pub fn finish(mut self, dir: &Path, started: Instant) -> Result<Self> {
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.sort();
        self.outputs = files.iter().map(|p| p.display().to_string()).collect();
        self.wall_seconds = started.elapsed().as_secs_f64();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn preprocess(reviews: &Path, meta: &Path, out: &Path, settings: &Settings) -> Result<CorpusSummary> {
    let started = Instant::now();
    for p in [reviews, meta] {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
        }
    }
    let manifest = RunManifest::new("preprocess", settings, &[reviews, meta])?;
    let (raw, rstats) = parse_reviews(reviews)?;
    let (meta_rows, mstats) = parse_meta(meta)?;
    log::info!(
        "parsed {} reviews ({} malformed), {} products ({} malformed)",
        raw.len(),
        rstats.malformed,
        meta_rows.len(),
        mstats.malformed
    );
    let corpus = build_corpus(&raw, &meta_rows, &settings.corpus)?;
    corpus.write(out)?;
    manifest.finish(out, started)?;
    Ok(corpus.summary())
}

/// Writes a synthetic raw corpus (reviews, metadata, ground truth).
pub fn synth(profile: Profile, out: &Path, seed: u64, users: Option<usize>) -> Result<synth::GroundTruth> {
    let started = Instant::now();
    let mut cfg = SynthConfig::new(profile, seed);
    if let Some(u) = users {
        cfg.users = u;
    }
    let corpus = synth::generate(&cfg)?;
    corpus.write(out)?;
    let settings = Settings { seed, ..Settings::default() };
    RunManifest::new(&format!("synth {}", profile.name()), &settings, &[])?.finish(out, started)?;
    Ok(corpus.truth)
}

pub fn embed(corpus_dir: &Path, out: &Path, settings: &Settings) -> Result<EmbeddingTable> {
    let started = Instant::now();
    let manifest = RunManifest::new("embed", settings, &[corpus_dir])?;
    let corpus = SplitCorpus::load(corpus_dir)?;
    let table = EmbeddingTable::train(&corpus, &settings.embed)?;
    table.save(out)?;
    manifest.finish(out, started)?;
    Ok(table)
}

fn load_inputs(corpus_dir: &Path, emb_dir: &Path) -> Result<(SplitCorpus, EmbeddingTable, Features)> {
    let corpus = SplitCorpus::load(corpus_dir)?;
    let table = EmbeddingTable::load(emb_dir)?;
    let features = Features::from_embeddings(&corpus, &table)?;
    Ok((corpus, table, features))
}

/// Trains with per-epoch validation and keeps the best epoch's parameters.
pub fn train(corpus_dir: &Path, emb_dir: &Path, out: &Path, variant: Variant, settings: &Settings) -> Result<TrainReport> {
    let started = Instant::now();
    let manifest = RunManifest::new(&format!("train {variant}"), settings, &[corpus_dir, emb_dir])?;
    let (corpus, _, features) = load_inputs(corpus_dir, emb_dir)?;
    make_dir(out)?;
    let options = TrainOptions {
        cutoff: settings.cutoff,
        ..TrainOptions::with_validation()
    };
    let report = trainer::train(&corpus, &features, &settings.model, variant, &options, Some(&out.join(TRAIN_LOG_FILE)))?;
    let prefs = report.model.user_preferences(&corpus, &features)?;
    let extra = json!({ "best_epoch": report.best_epoch });
    report.model.save(out, MODEL_STEM, Some(&prefs), extra)?;
    manifest.finish(out, started)?;
    Ok(report)
}

pub fn evaluate(corpus_dir: &Path, emb_dir: &Path, model_dir: &Path, out: &Path, split: Split, settings: &Settings) -> Result<EvalResult> {
    let started = Instant::now();
    let manifest = RunManifest::new("eval", settings, &[corpus_dir, emb_dir, model_dir])?;
    let (corpus, _, features) = load_inputs(corpus_dir, emb_dir)?;
    let (model, _, _) = Model::load(model_dir, MODEL_STEM)?;
    let mut result = eval::evaluate(&model, &corpus, &features, split, settings.cutoff)?;
    result.dataset = dataset_name(corpus_dir);
    result.write(out)?;
    manifest.finish(out, started)?;
    Ok(result)
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub product: String,
    pub score: f64,
}

/// Loaded corpus, embeddings and model for answering queries.
#[derive(Debug, Clone)]
pub struct Searcher {
    pub corpus: SplitCorpus,
    pub table: EmbeddingTable,
    pub features: Features,
    pub model: Model,
    catalog: Vec<Vec<f64>>,
}

impl Searcher {
    pub fn open(corpus_dir: &Path, emb_dir: &Path, model_dir: &Path) -> Result<Self> {
        let (corpus, table, features) = load_inputs(corpus_dir, emb_dir)?;
        let (model, _, _) = Model::load(model_dir, MODEL_STEM)?;
        let catalog = model.project_catalog(&features)?;
        Ok(Searcher {
            corpus,
            table,
            features,
            model,
            catalog,
        })
    }

    /// Ranks the catalog for `user_id` issuing `query_text`. The user's full
    /// history forms the context; an unknown user gets the cold-start
    /// context (no window, zero preference).
    pub fn search(&self, user_id: &str, query_text: &str, top: usize) -> Result<Vec<Hit>> {
        let query = self.table.infer_query_vector(query_text, self.model.config.seed)?;
        let ctx = match self.corpus.user_index(user_id) {
            Some(u) => {
                let history: Vec<Pair> = self.corpus.users[u].interactions.iter().map(Pair::from).collect();
                self.model.context(&self.features, &history, history.len())?
            }
            None => {
                log::warn!("unknown user `{user_id}`; ranking without personal context");
                UserContext {
                    pref: vec![0.0; self.model.config.k],
                    window: Vec::new(),
                }
            }
        };
        let repr = self.model.represent(&self.features, &ctx, &query)?;
        let ranked = self.model.rank(&repr, &self.catalog)?;
        Ok(ranked
            .top(top)
            .iter()
            .map(|&i| Hit {
                product: self.corpus.products[i].clone(),
                score: ranked.scores[i],
            })
            .collect())
    }
}

pub fn search(
    corpus_dir: &Path,
    emb_dir: &Path,
    model_dir: &Path,
    user_id: &str,
    query_text: &str,
    top: usize,
) -> Result<Vec<Hit>> {
    Searcher::open(corpus_dir, emb_dir, model_dir)?.search(user_id, query_text, top)
}

pub fn attention(corpus_dir: &Path, emb_dir: &Path, model_dir: &Path, out: &Path, split: Split, settings: &Settings) -> Result<Vec<AttentionRecord>> {
    let started = Instant::now();
    let manifest = RunManifest::new("attn-dump", settings, &[corpus_dir, emb_dir, model_dir])?;
    let (corpus, _, features) = load_inputs(corpus_dir, emb_dir)?;
    let (model, _, _) = Model::load(model_dir, MODEL_STEM)?;
    let records = eval::dump_attention(&model, &corpus, &features, split)?;
    eval::write_jsonl(&out.join(ATTENTION_FILE), &records)?;
    manifest.finish(out, started)?;
    Ok(records)
}

/// Query likelihood; with `lambda` below 1 the user word profile is mixed in.
pub fn baseline(corpus_dir: &Path, out: &Path, split: Split, lambda: Option<f64>, settings: &Settings) -> Result<EvalResult> {
    let started = Instant::now();
    let name = if lambda.is_some() { "UQL" } else { "QL" };
    let manifest = RunManifest::new(&format!("baseline {name}"), settings, &[corpus_dir])?;
    let corpus = SplitCorpus::load(corpus_dir)?;
    let index = LanguageModelIndex::build(&corpus);
    let profile = UserWordProfile::build(&corpus, settings.profile_threshold);
    let mu = settings.mu;
    let mut result = eval::evaluate_with(name, &corpus, split, settings.cutoff, |u, history, pos| {
        let query = corpus.query_tokens(history[pos].query);
        match lambda {
            Some(l) => uql_rank(&index, profile.user(u), &query, mu, l),
            None => index.rank(&query, mu),
        }
    })?;
    result.dataset = dataset_name(corpus_dir);
    result.write(out)?;
    manifest.finish(out, started)?;
    Ok(result)
}

/// Paired t-test between two evaluation directories.
pub fn significance(a_dir: &Path, b_dir: &Path, metric: &str, out: &Path, settings: &Settings) -> Result<Significance> {
    let started = Instant::now();
    let manifest = RunManifest::new("significance", settings, &[a_dir, b_dir])?;
    let name = |d: &Path| -> Result<String> {
        let path = d.join(eval::METRICS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: EvalResult = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(r.model)
    };
    let a = EvalResult::read_instances(a_dir)?;
    let b = EvalResult::read_instances(b_dir)?;
    let s = eval::significance(&name(a_dir)?, &a, &name(b_dir)?, &b, metric)?;
    make_dir(out)?;
    let path = out.join(SIGNIFICANCE_FILE);
    let text = serde_json::to_string_pretty(&s).expect("serializable");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    manifest.finish(out, started)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_hash_ignores_manifest_and_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "x").unwrap();
        let h1 = hash_path(dir.path()).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        assert_eq!(hash_path(dir.path()).unwrap(), h1);
        fs::write(dir.path().join("a.txt"), "y").unwrap();
        assert_ne!(hash_path(dir.path()).unwrap(), h1);
    }
}
