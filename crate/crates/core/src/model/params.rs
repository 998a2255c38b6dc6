use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Config, Variant};
use crate::numerics::{CheckInput, Graph, Tensor, Var};

/// Every trainable tensor of the ranking model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Shared projection for products (and queries when shared), `k x k`.
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    /// Separate query projection, present only when projection is unshared.
    pub query_proj: Option<(Tensor, Tensor)>,
    pub gru_wz: Tensor,
    pub gru_uz: Tensor,
    pub gru_w: Tensor,
    pub gru_u: Tensor,
    pub gru_wr: Tensor,
    pub gru_ur: Tensor,
    /// Short-term attention: `f x k` current-query weights.
    pub attn_w0: Tensor,
    /// Short-term attention: `f x k` previous-query weights.
    pub attn_w1: Tensor,
    pub attn_b: Tensor,
    pub attn_v: Tensor,
    /// Long-term factor attention weights (`k`) and scalar bias.
    pub long_w: Tensor,
    pub long_b: Tensor,
    /// Fusion tower `(weight, bias)` per layer.
    pub tower: Vec<(Tensor, Tensor)>,
}

/// Graph handles mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub proj_w: Var,
    pub proj_b: Var,
    pub query_proj: Option<(Var, Var)>,
    pub gru_wz: Var,
    pub gru_uz: Var,
    pub gru_w: Var,
    pub gru_u: Var,
    pub gru_wr: Var,
    pub gru_ur: Var,
    pub attn_w0: Var,
    pub attn_w1: Var,
    pub attn_b: Var,
    pub attn_v: Var,
    pub long_w: Var,
    pub long_b: Var,
    pub tower: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Rebuilds the handles from a flat list in [`ModelParams::named`] order.
    pub fn from_slice(vars: &[Var], unshared: bool, tower_layers: usize) -> ParamVars {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("parameter count mismatch");
        let proj_w = next();
        let proj_b = next();
        let query_proj = unshared.then(|| (next(), next()));
        ParamVars {
            proj_w,
            proj_b,
            query_proj,
            gru_wz: next(),
            gru_uz: next(),
            gru_w: next(),
            gru_u: next(),
            gru_wr: next(),
            gru_ur: next(),
            attn_w0: next(),
            attn_w1: next(),
            attn_b: next(),
            attn_v: next(),
            long_w: next(),
            long_b: next(),
            tower: (0..tower_layers).map(|_| (next(), next())).collect(),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.proj_w, self.proj_b];
        if let Some((w, b)) = self.query_proj {
            out.extend([w, b]);
        }
        out.extend([
            self.gru_wz,
            self.gru_uz,
            self.gru_w,
            self.gru_u,
            self.gru_wr,
            self.gru_ur,
            self.attn_w0,
            self.attn_w1,
            self.attn_b,
            self.attn_v,
            self.long_w,
            self.long_b,
        ]);
        for (w, b) in &self.tower {
            out.extend([*w, *b]);
        }
        out
    }
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &Config, variant: Variant, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        let f = config.attention_width();
        let sq = |rng: &mut R| Tensor::xavier(&[k, k], rng);
        let proj_w = sq(rng);
        let query_proj = (!config.shared_projection).then(|| (sq(rng), Tensor::zeros(&[k])));
        let gru = [sq(rng), sq(rng), sq(rng), sq(rng), sq(rng), sq(rng)];
        let attn_w0 = Tensor::xavier(&[f, k], rng);
        let attn_w1 = Tensor::xavier(&[f, k], rng);
        let attn_v = Tensor::xavier(&[f], rng);
        let long_w = Tensor::xavier(&[k], rng);
        let input = variant.wiring().parts() * k;
        let mut tower = Vec::with_capacity(config.layers);
        let mut width = input;
        for out in config.tower_widths(input) {
            tower.push((Tensor::xavier(&[out, width], rng), Tensor::zeros(&[out])));
            width = out;
        }
        let [gru_wz, gru_uz, gru_w, gru_u, gru_wr, gru_ur] = gru;
        Ok(ModelParams {
            proj_w,
            proj_b: Tensor::zeros(&[k]),
            query_proj,
            gru_wz,
            gru_uz,
            gru_w,
            gru_u,
            gru_wr,
            gru_ur,
            attn_w0,
            attn_w1,
            attn_b: Tensor::zeros(&[f]),
            attn_v,
            long_w,
            long_b: Tensor::zeros(&[1]),
            tower,
        })
    }

    /// Canonical (name, tensor) order used by checkpoints, the optimizer and
    /// gradient checks.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("proj_w".into(), &self.proj_w), ("proj_b".into(), &self.proj_b)];
        if let Some((w, b)) = &self.query_proj {
            out.push(("query_proj_w".into(), w));
            out.push(("query_proj_b".into(), b));
        }
        out.extend([
            ("gru_wz".into(), &self.gru_wz),
            ("gru_uz".into(), &self.gru_uz),
            ("gru_w".into(), &self.gru_w),
            ("gru_u".into(), &self.gru_u),
            ("gru_wr".into(), &self.gru_wr),
            ("gru_ur".into(), &self.gru_ur),
            ("attn_w0".into(), &self.attn_w0),
            ("attn_w1".into(), &self.attn_w1),
            ("attn_b".into(), &self.attn_b),
            ("attn_v".into(), &self.attn_v),
            ("long_w".into(), &self.long_w),
            ("long_b".into(), &self.long_b),
        ]);
        for (i, (w, b)) in self.tower.iter().enumerate() {
            out.push((format!("tower{i}_w"), w));
            out.push((format!("tower{i}_b"), b));
        }
        out
    }

    /// Mutable tensors in [`named`](Self::named) order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.proj_w, &mut self.proj_b];
        if let Some((w, b)) = &mut self.query_proj {
            out.push(w);
            out.push(b);
        }
        out.extend([
            &mut self.gru_wz,
            &mut self.gru_uz,
            &mut self.gru_w,
            &mut self.gru_u,
            &mut self.gru_wr,
            &mut self.gru_ur,
            &mut self.attn_w0,
            &mut self.attn_w1,
            &mut self.attn_b,
            &mut self.attn_v,
            &mut self.long_w,
            &mut self.long_b,
        ]);
        for (w, b) in &mut self.tower {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Rebuilds parameters from named tensors (checkpoint loading).
    pub fn from_named(mut named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut take = |name: &str| -> Result<Tensor> {
            let pos = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Unknown { kind: "parameter", key: name.to_string() })?;
            Ok(named.swap_remove(pos).1)
        };
        let proj_w = take("proj_w")?;
        let proj_b = take("proj_b")?;
        let query_proj = match take("query_proj_w") {
            Ok(w) => Some((w, take("query_proj_b")?)),
            Err(_) => None,
        };
        let mut p = ModelParams {
            proj_w,
            proj_b,
            query_proj,
            gru_wz: take("gru_wz")?,
            gru_uz: take("gru_uz")?,
            gru_w: take("gru_w")?,
            gru_u: take("gru_u")?,
            gru_wr: take("gru_wr")?,
            gru_ur: take("gru_ur")?,
            attn_w0: take("attn_w0")?,
            attn_w1: take("attn_w1")?,
            attn_b: take("attn_b")?,
            attn_v: take("attn_v")?,
            long_w: take("long_w")?,
            long_b: take("long_b")?,
            tower: Vec::new(),
        };
        let mut i = 0;
        while let Ok(w) = take(&format!("tower{i}_w")) {
            p.tower.push((w, take(&format!("tower{i}_b"))?));
            i += 1;
        }
        if p.tower.is_empty() {
            return Err(Error::Unknown { kind: "parameter", key: "tower0_w".into() });
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Σ‖θ‖² over every trainable tensor.
    pub fn norm_sq(&self) -> f64 {
        self.named().iter().map(|(_, t)| t.norm_sq()).sum()
    }

    /// Loads every tensor as a trainable leaf.
    pub fn load_into(&self, g: &mut Graph) -> ParamVars {
        let vars: Vec<Var> = self.named().iter().map(|(_, t)| g.param(t)).collect();
        ParamVars::from_slice(&vars, self.query_proj.is_some(), self.tower.len())
    }

    pub fn check_inputs(&self) -> Vec<CheckInput> {
        self.named().iter().map(|(_, t)| CheckInput::from(*t)).collect()
    }
}
