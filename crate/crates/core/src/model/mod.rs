//! The ranking model: projection, GRU short-term encoding, both attention
//! mechanisms, the long-term state and the fusion tower.

mod config;
pub mod forward;
mod params;
mod rank;
mod variant;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::Config;
pub use params::{ModelParams, ParamVars};
pub use rank::{cosine, RankedList};
pub use variant::{Variant, Wiring};

use crate::checkpoint::{read_container, tensors_digest, write_container};
use crate::corpus::{Interaction, SplitCorpus};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use forward::{ContextVars, ReprVars};

pub const MODEL_STEM: &str = "model";
const CHECKPOINT_VERSION: u32 = 1;

/// A purchase reduced to the ids the model reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub query: usize,
    pub product: usize,
}

impl From<&Interaction> for Pair {
    fn from(it: &Interaction) -> Self {
        Pair {
            query: it.query_id,
            product: it.product,
        }
    }
}

/// Fixed query and product input vectors, row-major `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    k: usize,
    products: Vec<f32>,
    queries: Vec<f32>,
}

impl Features {
    pub fn new(k: usize, products: Vec<f32>, queries: Vec<f32>) -> Result<Self> {
        if k == 0 || products.len() % k != 0 || queries.len() % k != 0 || products.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "features",
                left: vec![products.len(), queries.len()],
                right: vec![k],
            });
        }
        Ok(Features { k, products, queries })
    }

    /// Looks up every corpus product and query in the embedding table.
    pub fn from_embeddings(corpus: &SplitCorpus, table: &EmbeddingTable) -> Result<Self> {
        let mut products = Vec::with_capacity(corpus.products.len() * table.k());
        for pid in &corpus.products {
            let row = table.product_vector(pid).ok_or_else(|| Error::Unknown {
                kind: "product embedding",
                key: pid.clone(),
            })?;
            products.extend_from_slice(row);
        }
        let mut queries = Vec::with_capacity(corpus.queries.len() * table.k());
        for q in &corpus.queries {
            let row = table.query_vector(q).ok_or_else(|| Error::Unknown {
                kind: "query embedding",
                key: q.clone(),
            })?;
            queries.extend_from_slice(row);
        }
        Features::new(table.k(), products, queries)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_products(&self) -> usize {
        self.products.len() / self.k
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len() / self.k
    }

    pub fn product(&self, i: usize) -> &[f32] {
        &self.products[i * self.k..(i + 1) * self.k]
    }

    pub fn query(&self, q: usize) -> &[f32] {
        &self.queries[q * self.k..(q + 1) * self.k]
    }
}

/// Per-user long-term preference and purchases since its last update.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTermState {
    pub g: Vec<f64>,
    pub pending: usize,
}

impl LongTermState {
    pub fn new(k: usize) -> Self {
        LongTermState {
            g: vec![0.0; k],
            pending: 0,
        }
    }

    /// Counts one purchase; true when it completes a window of `m`.
    pub fn record(&mut self, m: usize) -> bool {
        self.pending += 1;
        if self.pending == m {
            self.pending = 0;
            true
        } else {
            false
        }
    }
}

/// `(1 - beta) g + beta h`.
pub fn update_long_term(g: &[f64], h: &[f64], beta: f64) -> Vec<f64> {
    g.iter().zip(h).map(|(&a, &b)| (1.0 - beta) * a + beta * b).collect()
}

/// What the model knows about a user right before a query.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub pref: Vec<f64>,
    /// The `m` most recent purchases, oldest first; empty for cold users.
    pub window: Vec<Pair>,
}

/// Output of the tower plus the attention weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub vector: Vec<f64>,
    pub short_alpha: Option<Vec<f64>>,
    pub long_alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: Config,
    pub variant: Variant,
    pub params: ModelParams,
}

fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

impl Model {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: Config, variant: Variant) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(&config, variant, &mut rng)?;
        Ok(Model {
            config,
            variant,
            params,
        })
    }

    pub fn wiring(&self) -> Wiring {
        self.variant.wiring()
    }

    /// Loads inputs for one (context, query) into the graph.
    pub fn context_vars(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        features: &Features,
        ctx: &UserContext,
        query: &[f32],
    ) -> Result<ContextVars> {
        let k = self.config.k;
        if query.len() != k || ctx.pref.len() != k || features.k() != k {
            return Err(Error::ShapeMismatch {
                op: "context",
                left: vec![query.len(), ctx.pref.len(), features.k()],
                right: vec![k],
            });
        }
        let q = g.vector(to_f64(query))?;
        let query = forward::project_query(g, p, q)?;
        let mut window_queries = Vec::new();
        let mut window_products = Vec::new();
        let wiring = self.wiring();
        if wiring.short_term && !ctx.window.is_empty() {
            for pair in &ctx.window {
                if wiring.short_attention {
                    let wq = g.vector(to_f64(features.query(pair.query)))?;
                    window_queries.push(forward::project_query(g, p, wq)?);
                }
                let wp = g.vector(to_f64(features.product(pair.product)))?;
                window_products.push(forward::project_product(g, p, wp)?);
            }
        }
        let pref = g.vector(ctx.pref.clone())?;
        let zero = g.vector(vec![0.0; k])?;
        Ok(ContextVars {
            query,
            window_queries,
            window_products,
            pref,
            zero,
        })
    }

    /// Builds the full query representation in `g`.
    pub fn build(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        features: &Features,
        ctx: &UserContext,
        query: &[f32],
    ) -> Result<ReprVars> {
        let vars = self.context_vars(g, p, features, ctx, query)?;
        forward::represent(g, p, self.wiring(), self.config.m, &vars)
    }

    /// Final GRU state over `window` starting from `h0`, without gradients.
    pub fn final_hidden(&self, features: &Features, window: &[Pair], h0: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.load_into(&mut g);
        let mut xs = Vec::with_capacity(window.len());
        for pair in window {
            let x = g.vector(to_f64(features.product(pair.product)))?;
            xs.push(forward::project_product(&mut g, &p, x)?);
        }
        let h = g.vector(h0.to_vec())?;
        let hidden = forward::encode_short_term(&mut g, &p, &xs, h, self.config.m)?;
        Ok(g.value(*hidden.last().expect("m >= 1")).to_vec())
    }

    /// Consumes `history[i]`; every `m`th purchase folds the final hidden state
    /// of the just-completed window into `g`.
    pub fn observe(&self, state: &mut LongTermState, features: &Features, history: &[Pair], i: usize) -> Result<()> {
        let m = self.config.m;
        if !state.record(m) || !self.wiring().long_term {
            return Ok(());
        }
        if self.config.beta == 0.0 {
            return Ok(());
        }
        let h = self.final_hidden(features, &history[i + 1 - m..=i], &state.g)?;
        state.g = update_long_term(&state.g, &h, self.config.beta);
        Ok(())
    }

    /// State after consuming `history[..position]`, plus the window that
    /// precedes `position`.
    pub fn context(&self, features: &Features, history: &[Pair], position: usize) -> Result<UserContext> {
        let mut state = LongTermState::new(self.config.k);
        for i in 0..position {
            self.observe(&mut state, features, history, i)?;
        }
        let m = self.config.m;
        let window = if position >= m {
            history[position - m..position].to_vec()
        } else {
            log::warn!("only {position} earlier purchases (window is {m}); scoring without short-term context");
            Vec::new()
        };
        Ok(UserContext {
            pref: state.g,
            window,
        })
    }

    pub fn represent(&self, features: &Features, ctx: &UserContext, query: &[f32]) -> Result<Representation> {
        let mut g = Graph::new();
        let p = self.params.load_into(&mut g);
        let r = self.build(&mut g, &p, features, ctx, query)?;
        Ok(Representation {
            vector: g.value(r.output).to_vec(),
            short_alpha: r.short_alpha.map(|a| g.value(a).to_vec()),
            long_alpha: r.long_alpha.map(|a| g.value(a).to_vec()),
        })
    }

    /// Projected vectors of every product; these do not depend on the user.
    pub fn project_catalog(&self, features: &Features) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let p = self.params.load_into(&mut g);
        let mut out = Vec::with_capacity(features.n_products());
        for i in 0..features.n_products() {
            let x = g.vector(to_f64(features.product(i)))?;
            let y = forward::project_product(&mut g, &p, x)?;
            out.push(g.value(y).to_vec());
        }
        Ok(out)
    }

    pub fn rank(&self, repr: &Representation, catalog: &[Vec<f64>]) -> Result<RankedList> {
        let scores = catalog
            .iter()
            .map(|p| cosine(&repr.vector, p))
            .collect::<Result<Vec<_>>>()?;
        RankedList::from_scores(scores)
    }

    /// Long-term preference of every user after their training purchases.
    pub fn user_preferences(&self, corpus: &SplitCorpus, features: &Features) -> Result<Tensor> {
        let k = self.config.k;
        let mut data = Vec::with_capacity(corpus.users.len() * k);
        for u in &corpus.users {
            let history: Vec<Pair> = u.train().iter().map(Pair::from).collect();
            let ctx = self.context(features, &history, history.len())?;
            data.extend(ctx.pref.iter().map(|&x| x as f32));
        }
        Tensor::new(vec![corpus.users.len().max(1), k], if data.is_empty() { vec![0.0; k] } else { data })
    }

    pub fn checksum(&self) -> String {
        let named = self.params.named();
        let refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        tensors_digest(&refs)
    }

    /// Writes parameters, an optional per-user preference table and `extra`
    /// metadata under `dir/<stem>.{bin,json}`.
    pub fn save(&self, dir: &Path, stem: &str, user_prefs: Option<&Tensor>, extra: Value) -> Result<()> {
        let named = self.params.named();
        let mut refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        if let Some(t) = user_prefs {
            refs.push(("user_pref", t));
        }
        let meta = json!({
            "version": CHECKPOINT_VERSION,
            "variant": self.variant,
            "config": self.config,
            "extra": extra,
        });
        write_container(dir, stem, &refs, meta)
    }

    /// Reads a checkpoint; returns the model, the preference table if stored
    /// and the `extra` metadata.
    pub fn load(dir: &Path, stem: &str) -> Result<(Model, Option<Tensor>, Value)> {
        let (mut tensors, meta) = read_container(dir, stem)?;
        let path = dir.join(format!("{stem}.json"));
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::format(&path, format!("missing `{name}`")))
        };
        let config: Config = serde_json::from_value(field("config")?).map_err(|e| Error::format(&path, e.to_string()))?;
        let variant: Variant = serde_json::from_value(field("variant")?).map_err(|e| Error::format(&path, e.to_string()))?;
        let extra = meta.get("extra").cloned().unwrap_or(Value::Null);
        let prefs = tensors
            .iter()
            .position(|(n, _)| n == "user_pref")
            .map(|i| tensors.swap_remove(i).1);
        let params = ModelParams::from_named(tensors)?;
        Ok((Model { config, variant, params }, prefs, extra))
    }
}
