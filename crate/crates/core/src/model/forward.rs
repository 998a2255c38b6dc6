//! Graph-building pieces of the ranking model.

use crate::error::{Error, Result};
use crate::model::{ParamVars, Wiring};
use crate::numerics::{Graph, Var};

/// `elu(W x + b)`.
pub fn project(g: &mut Graph, w: Var, b: Var, x: Var) -> Result<Var> {
    let wx = g.matvec(w, x)?;
    let pre = g.add(wx, b)?;
    Ok(g.elu(pre))
}

/// Projects a query through the query-side layer (the shared one by default).
pub fn project_query(g: &mut Graph, p: &ParamVars, x: Var) -> Result<Var> {
    match p.query_proj {
        Some((w, b)) => project(g, w, b, x),
        None => project(g, p.proj_w, p.proj_b, x),
    }
}

pub fn project_product(g: &mut Graph, p: &ParamVars, x: Var) -> Result<Var> {
    project(g, p.proj_w, p.proj_b, x)
}

/// One bias-free GRU step.
pub fn gru_step(g: &mut Graph, p: &ParamVars, x: Var, h: Var) -> Result<Var> {
    let gate = |g: &mut Graph, w: Var, u: Var, h: Var| -> Result<Var> {
        let a = g.matvec(w, x)?;
        let b = g.matvec(u, h)?;
        g.add(a, b)
    };
    let z_pre = gate(g, p.gru_wz, p.gru_uz, h)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.gru_wr, p.gru_ur, h)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h)?;
    let cand_pre = gate(g, p.gru_w, p.gru_u, rh)?;
    let cand = g.tanh(cand_pre);
    // (1 - z) h + z cand  ==  h + z (cand - h)
    let diff = g.sub(cand, h)?;
    let step = g.mul(z, diff)?;
    g.add(h, step)
}

/// Runs the GRU over exactly `m` projected products starting from `h0`;
/// returns every hidden state in order.
pub fn encode_short_term(g: &mut Graph, p: &ParamVars, products: &[Var], h0: Var, m: usize) -> Result<Vec<Var>> {
    if products.len() != m {
        return Err(Error::ShortWindow { got: products.len(), want: m });
    }
    let mut h = h0;
    let mut out = Vec::with_capacity(m);
    for &x in products {
        h = gru_step(g, p, x, h)?;
        out.push(h);
    }
    Ok(out)
}

/// Attention over previous queries, applied to the hidden states.
/// Returns `(c_l, alpha)`.
pub fn short_term_attention(
    g: &mut Graph,
    p: &ParamVars,
    query: Var,
    previous: &[Var],
    hidden: &[Var],
) -> Result<(Var, Var)> {
    if previous.len() != hidden.len() || previous.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "short_term_attention",
            left: vec![previous.len()],
            right: vec![hidden.len()],
        });
    }
    let current = g.matvec(p.attn_w0, query)?;
    let current = g.add(current, p.attn_b)?;
    let mut scores = Vec::with_capacity(previous.len());
    for &q in previous {
        let prev = g.matvec(p.attn_w1, q)?;
        let pre = g.add(current, prev)?;
        let act = g.elu(pre);
        scores.push(g.dot(p.attn_v, act)?);
    }
    let a = g.concat(&scores)?;
    let alpha = g.softmax(a)?;
    let c = g.weighted_sum(alpha, hidden)?;
    Ok((c, alpha))
}

/// Equal weights over the hidden states.
pub fn uniform_short_term(g: &mut Graph, hidden: &[Var]) -> Result<(Var, Var)> {
    if hidden.is_empty() {
        return Err(Error::EmptyInput("uniform_short_term"));
    }
    let n = hidden.len();
    let alpha = g.vector(vec![1.0 / n as f64; n])?;
    let c = g.weighted_sum(alpha, hidden)?;
    Ok((c, alpha))
}

/// Factor attention on the long-term preference. Returns `(c_g, alpha_g)`.
pub fn long_term_attention(g: &mut Graph, p: &ParamVars, pref: Var, query: Var) -> Result<(Var, Var)> {
    let wq = g.dot(p.long_w, query)?;
    let scaled = g.scale(pref, wq)?;
    let a = g.add_scalar(scaled, p.long_b)?;
    let alpha = g.softmax(a)?;
    let c = g.mul(pref, alpha)?;
    Ok((c, alpha))
}

/// ELU layers from the fused input down to `k`.
pub fn tower(g: &mut Graph, p: &ParamVars, input: Var) -> Result<Var> {
    let mut x = input;
    for &(w, b) in &p.tower {
        x = project(g, w, b, x)?;
    }
    Ok(x)
}

/// Inputs for one query representation. Query and window vectors are
/// already projected.
#[derive(Debug, Clone)]
pub struct ContextVars {
    pub query: Var,
    /// Projected previous queries, oldest first.
    pub window_queries: Vec<Var>,
    /// Projected previous products, oldest first.
    pub window_products: Vec<Var>,
    /// Long-term preference (non-trainable state).
    pub pref: Var,
    /// Zero vector used when the short-term part has no window.
    pub zero: Var,
}

/// Graph handles of a built query representation.
#[derive(Debug, Clone)]
pub struct ReprVars {
    pub output: Var,
    pub short_alpha: Option<Var>,
    pub long_alpha: Option<Var>,
}

/// Fuses query, short-term and long-term parts and runs the tower.
pub fn represent(
    g: &mut Graph,
    p: &ParamVars,
    wiring: Wiring,
    m: usize,
    ctx: &ContextVars,
) -> Result<ReprVars> {
    let mut parts = vec![ctx.query];
    let mut short_alpha = None;
    let mut long_alpha = None;
    if wiring.short_term {
        if ctx.window_products.is_empty() {
            // cold user: no window yet
            parts.push(ctx.zero);
        } else {
            // without a long-term part the GRU starts from zero
            let h0 = if wiring.long_term { ctx.pref } else { ctx.zero };
            let hidden = encode_short_term(g, p, &ctx.window_products, h0, m)?;
            let (c, alpha) = if wiring.short_attention {
                short_term_attention(g, p, ctx.query, &ctx.window_queries, &hidden)?
            } else {
                uniform_short_term(g, &hidden)?
            };
            parts.push(c);
            short_alpha = Some(alpha);
        }
    }
    if wiring.long_term {
        if wiring.long_attention {
            let (c, alpha) = long_term_attention(g, p, ctx.pref, ctx.query)?;
            parts.push(c);
            long_alpha = Some(alpha);
        } else {
            parts.push(ctx.pref);
        }
    }
    let fused = if parts.len() == 1 { parts[0] } else { g.concat(&parts)? };
    let output = tower(g, p, fused)?;
    Ok(ReprVars {
        output,
        short_alpha,
        long_alpha,
    })
}
