//! Convolutional encoder with per-entity attention.
//!
//! Runs the same convolution branch as the piecewise CNN, and in parallel
//! two attention heads, one per entity: each token is scored against the
//! entity's average word embedding (appended column-wise to the token
//! matrix), the normalized weights rescale the token embeddings, and the
//! result is piecewise pooled. The classifier sees the convolution feature
//! and both entity features side by side.

use crate::corpus::{EncodedInstance, RelationSchema, Vocabulary};
use crate::encoders::{
    add_embeddings, embed_instance, linear_head, pcnn, EmbedIds, ForwardVars, ModelConfig,
};
use crate::error::Result;
use crate::params::{ParamId, ParamSet};
use crate::rng::Rng;
use crate::tape::{Tape, VarId};
use crate::tensor::Mode;

pub(crate) struct Handles {
    pub emb: EmbedIds,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    /// Bilinear matrix and query per entity head.
    pub ent_w: [ParamId; 2],
    pub ent_q: [ParamId; 2],
    pub out_w: ParamId,
    pub out_b: ParamId,
}

pub(crate) fn build(
    params: &mut ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    schema: &RelationSchema,
    rng: &mut Rng,
) -> Handles {
    let emb = add_embeddings(params, cfg, vocab, rng);
    let d = cfg.input_dim();
    let conv_w = params.add_matrix("conv_filters", cfg.filters, cfg.window * d, rng);
    let conv_b = params.add_zeros("conv_bias", vec![cfg.filters], rng);
    // attention scores live in the concatenated space: token plus entity
    let c = d + cfg.word_dim;
    let ent_w = [
        params.add_matrix("ent1_attn_bilinear", c, c, rng),
        params.add_matrix("ent2_attn_bilinear", c, c, rng),
    ];
    let ent_q = [
        params.add_vector("ent1_attn_query", c, rng),
        params.add_vector("ent2_attn_query", c, rng),
    ];
    let feat_len = 3 * cfg.filters + 6 * d;
    let out_w = params.add_matrix("out_weight", schema.len(), feat_len, rng);
    let out_b = params.add_zeros("out_bias", vec![schema.len()], rng);
    Handles {
        emb,
        conv_w,
        conv_b,
        ent_w,
        ent_q,
        out_w,
        out_b,
    }
}

/// Attention weights for one entity head and the reweighted token matrix.
/// `x` is the embedded sentence `[M, input_dim]`, `e_emb` the entity's
/// averaged word embedding.
pub fn entity_attention(
    tape: &mut Tape,
    params: &ParamSet,
    attn_w: ParamId,
    attn_q: ParamId,
    x: VarId,
    e_emb: VarId,
) -> Result<(VarId, VarId)> {
    let cat = tape.concat_cols_broadcast(x, e_emb)?;
    let a = tape.param(params, attn_w);
    let q = tape.param(params, attn_q);
    let key = tape.matvec(a, q)?;
    let scores = tape.matvec(cat, key)?;
    let weights = tape.softmax(scores)?;
    let scaled = tape.scale_rows(x, weights)?;
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
    let conv_feat = pcnn::pooled_feature(tape, params, h.conv_w, h.conv_b, cfg.window, x, inst)?;

    let word_table = tape.param(params, h.emb.word);
    let (lo, hi) = inst.pool_bounds();
    let mut ent_feats = Vec::with_capacity(2);
    let mut ent_weights = Vec::with_capacity(2);
    for (k, span) in [inst.e1_span, inst.e2_span].into_iter().enumerate() {
        let e_emb = tape.embed_avg(word_table, inst.span_ids(span))?;
        let (weights, scaled) =
            entity_attention(tape, params, h.ent_w[k], h.ent_q[k], x, e_emb)?;
        let pooled = tape.piecewise_max_pool(scaled, lo, hi)?;
        ent_feats.push(tape.tanh(pooled));
        ent_weights.push(weights);
    }

    let feat = tape.concat(&[conv_feat, ent_feats[0], ent_feats[1]])?;
    let feat = tape.dropout(feat, cfg.dropout, mode, rng)?;
    let (logits, probs) = linear_head(tape, params, h.out_w, h.out_b, feat)?;
    Ok(ForwardVars {
        logits,
        probs,
        word_attention: None,
        entity_attention: Some((ent_weights[0], ent_weights[1])),
    })
}
