//! Bidirectional GRU encoder with word attention.
//!
//! Each direction runs a gated recurrent unit over the embedded tokens; the
//! per-token states are concatenated, scored against a learned bilinear
//! query, softmax-normalized into word weights, and the reweighted states
//! are piecewise max pooled around the entity heads.

use crate::corpus::{EncodedInstance, RelationSchema, Vocabulary};
use crate::encoders::{
    add_embeddings, embed_instance, linear_head, EmbedIds, ForwardVars, ModelConfig,
};
use crate::error::Result;
use crate::params::{ParamId, ParamSet};
use crate::rng::Rng;
use crate::tape::{Tape, VarId};
use crate::tensor::Mode;

/// One direction's gate parameters: update (z), reset (r) and candidate (h)
/// each have an input matrix, a state matrix and a bias.
pub struct GruDir {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

pub(crate) struct Handles {
    pub emb: EmbedIds,
    pub fwd: GruDir,
    pub bwd: GruDir,
    pub attn_w: ParamId,
    pub attn_q: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

fn gru_params(params: &mut ParamSet, prefix: &str, cfg: &ModelConfig, rng: &mut Rng) -> GruDir {
    let d = cfg.input_dim();
    let h = cfg.hidden;
    let mat = |params: &mut ParamSet, gate: &str, part: &str, cols: usize, rng: &mut Rng| {
        params.add_matrix(&format!("{prefix}_{gate}_{part}"), h, cols, rng)
    };
    let bias = |params: &mut ParamSet, gate: &str, rng: &mut Rng| {
        params.add_zeros(&format!("{prefix}_{gate}_b"), vec![h], rng)
    };
    GruDir {
        wz: mat(params, "update", "w", d, rng),
        uz: mat(params, "update", "u", h, rng),
        bz: bias(params, "update", rng),
        wr: mat(params, "reset", "w", d, rng),
        ur: mat(params, "reset", "u", h, rng),
        br: bias(params, "reset", rng),
        wh: mat(params, "cand", "w", d, rng),
        uh: mat(params, "cand", "u", h, rng),
        bh: bias(params, "cand", rng),
    }
}

pub(crate) fn build(
    params: &mut ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    schema: &RelationSchema,
    rng: &mut Rng,
) -> Handles {
    let emb = add_embeddings(params, cfg, vocab, rng);
    let fwd = gru_params(params, "gru_fwd", cfg, rng);
    let bwd = gru_params(params, "gru_bwd", cfg, rng);
    let g = 2 * cfg.hidden;
    let attn_w = params.add_matrix("attn_bilinear", g, g, rng);
    let attn_q = params.add_vector("attn_query", g, rng);
    let out_w = params.add_matrix("out_weight", schema.len(), 3 * g, rng);
    let out_b = params.add_zeros("out_bias", vec![schema.len()], rng);
    Handles {
        emb,
        fwd,
        bwd,
        attn_w,
        attn_q,
        out_w,
        out_b,
    }
}

/// One GRU step. With all-zero parameters both gates sit at 1/2 and the
/// candidate at zero, so the state halves exactly: `h = 0.5 * h_prev`.
pub fn gru_cell(
    tape: &mut Tape,
    params: &ParamSet,
    g: &GruDir,
    x_t: VarId,
    h_prev: VarId,
) -> Result<VarId> {
    let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId, state: VarId| -> Result<VarId> {
        let wv = tape.param(params, w);
        let uv = tape.param(params, u);
        let bv = tape.param(params, b);
        let wx = tape.matvec(wv, x_t)?;
        let uh = tape.matvec(uv, state)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, bv)
    };
    let z_pre = gate(tape, g.wz, g.uz, g.bz, h_prev)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, g.wr, g.ur, g.br, h_prev)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let c_pre = gate(tape, g.wh, g.uh, g.bh, rh)?;
    let cand = tape.tanh(c_pre);
    let keep = tape.one_minus(z);
    let carried = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(carried, fresh)
}

/// States for every token, in sentence order. `reverse` runs the recurrence
/// from the last token backwards (the state at position i then summarizes
/// the suffix starting at i).
pub(crate) fn gru_direction(
    tape: &mut Tape,
    params: &ParamSet,
    g: &GruDir,
    x_rows: &[VarId],
    hidden: usize,
    reverse: bool,
) -> Result<Vec<VarId>> {
    let n = x_rows.len();
    let mut states = vec![0usize; n];
    let mut h = tape.zeros(hidden);
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for i in order {
        h = gru_cell(tape, params, g, x_rows[i], h)?;
        states[i] = h;
    }
    Ok(states)
}

/// Token states `[M, 2*hidden]`: forward and backward GRU states joined.
pub(crate) fn encode_sequence(
    tape: &mut Tape,
    params: &ParamSet,
    h: &Handles,
    cfg: &ModelConfig,
    x: VarId,
    len: usize,
) -> Result<VarId> {
    let rows: Vec<VarId> = (0..len)
        .map(|i| tape.row(x, i))
        .collect::<Result<Vec<_>>>()?;
    let f = gru_direction(tape, params, &h.fwd, &rows, cfg.hidden, false)?;
    let b = gru_direction(tape, params, &h.bwd, &rows, cfg.hidden, true)?;
    let joined: Vec<VarId> = (0..len)
        .map(|i| tape.concat(&[f[i], b[i]]))
        .collect::<Result<Vec<_>>>()?;
    tape.stack_rows(&joined)
}

/// Bilinear attention over token states: score each row of `w` against the
/// transformed query, normalize, and reweight the rows.
pub fn word_attention(
    tape: &mut Tape,
    params: &ParamSet,
    attn_w: ParamId,
    attn_q: ParamId,
    w: VarId,
) -> Result<(VarId, VarId)> {
    let a = tape.param(params, attn_w);
    let q = tape.param(params, attn_q);
    let key = tape.matvec(a, q)?;
    let scores = tape.matvec(w, key)?;
    let weights = tape.softmax(scores)?;
    let scaled = tape.scale_rows(w, weights)?;
    Ok((weights, scaled))
}

pub(crate) fn forward(
    tape: &mut Tape,
    params: &ParamSet,
    h: &Handles,
    cfg: &ModelConfig,
    inst: &EncodedInstance,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardVars> {
    let x = embed_instance(tape, params, &h.emb, inst)?;
    let w = encode_sequence(tape, params, h, cfg, x, inst.len())?;
    let (weights, scaled) = word_attention(tape, params, h.attn_w, h.attn_q, w)?;
    let (lo, hi) = inst.pool_bounds();
    let pooled = tape.piecewise_max_pool(scaled, lo, hi)?;
    let feat = tape.tanh(pooled);
    let feat = tape.dropout(feat, cfg.dropout, mode, rng)?;
    let (logits, probs) = linear_head(tape, params, h.out_w, h.out_b, feat)?;
    Ok(ForwardVars {
        logits,
        probs,
        word_attention: Some(weights),
        entity_attention: None,
    })
}
