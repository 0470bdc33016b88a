//! Piecewise convolutional encoder.
//!
//! A width-`window` convolution slides over the embedded sentence; the
//! resulting feature map is max-pooled separately over the three segments
//! delimited by the entity head tokens, so the feature keeps before/between/
//! after structure instead of collapsing the whole sentence into one max.

use crate::corpus::{EncodedInstance, RelationSchema, Vocabulary};
use crate::encoders::{
    add_embeddings, embed_instance, linear_head, EmbedIds, ForwardVars, ModelConfig,
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
    let out_w = params.add_matrix("out_weight", schema.len(), 3 * cfg.filters, rng);
    let out_b = params.add_zeros("out_bias", vec![schema.len()], rng);
    Handles {
        emb,
        conv_w,
        conv_b,
        out_w,
        out_b,
    }
}

/// Convolve, pool piecewise around the entity heads, and squash: the
/// `[3 * filters]` sentence feature. Shared with the entity-attention
/// encoder, whose convolution branch is exactly this.
pub fn pooled_feature(
    tape: &mut Tape,
    params: &ParamSet,
    conv_w: ParamId,
    conv_b: ParamId,
    window: usize,
    x: VarId,
    inst: &EncodedInstance,
) -> Result<VarId> {
    let cols = tape.im2col(x, window)?;
    let w = tape.param(params, conv_w);
    let b = tape.param(params, conv_b);
    let conv = tape.matmul_transpose_b(cols, w)?;
    let conv = tape.add_row_broadcast(conv, b)?;
    let (lo, hi) = inst.pool_bounds();
    let pooled = tape.piecewise_max_pool(conv, lo, hi)?;
    Ok(tape.tanh(pooled))
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
    let feat = pooled_feature(tape, params, h.conv_w, h.conv_b, cfg.window, x, inst)?;
    let feat = tape.dropout(feat, cfg.dropout, mode, rng)?;
    let (logits, probs) = linear_head(tape, params, h.out_w, h.out_b, feat)?;
    Ok(ForwardVars {
        logits,
        probs,
        word_attention: None,
        entity_attention: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::test_support::*;
    use crate::encoders::{Handles as ModelHandles, Model, ModelKind};

    fn pcnn_handles(model: &Model) -> &Handles {
        match &model.handles {
            ModelHandles::Pcnn(h) => h,
            _ => unreachable!(),
        }
    }

    /// Direct sliding-window convolution, independent of im2col + matmul.
    fn conv_oracle(x: &[Vec<f64>], filters: &[f64], channels: usize, window: usize) -> Vec<f64> {
        let m = x.len();
        let d = x[0].len();
        let half = window / 2;
        let mut out = vec![0.0; m * channels];
        for j in 0..m {
            for c in 0..channels {
                let mut acc = 0.0;
                for t in 0..window {
                    let src = j as i64 + t as i64 - half as i64;
                    if src < 0 || src >= m as i64 {
                        continue;
                    }
                    for k in 0..d {
                        acc += filters[c * (window * d) + t * d + k] * x[src as usize][k];
                    }
                }
                out[j * channels + c] = acc;
            }
        }
        out
    }

    #[test]
    fn convolution_matches_direct_sliding_window() {
        let (model, bags) = tiny_model(ModelKind::Pcnn, 17);
        let h = pcnn_handles(&model);
        let inst = first_instance(&bags);
        let cfg = &model.config;

        let mut tape = Tape::new();
        let x = embed_instance(&mut tape, &model.params, &h.emb, inst).unwrap();
        let cols = tape.im2col(x, cfg.window).unwrap();
        let w = tape.param(&model.params, h.conv_w);
        let conv = tape.matmul_transpose_b(cols, w).unwrap();

        let xt = tape.value(x);
        let rows: Vec<Vec<f64>> = (0..xt.rows()).map(|i| xt.row(i).to_vec()).collect();
        let expect = conv_oracle(
            &rows,
            model.params.value(h.conv_w).data(),
            cfg.filters,
            cfg.window,
        );
        for (got, want) in tape.value(conv).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_feature_has_three_segments_of_filters() {
        let (model, bags) = tiny_model(ModelKind::Pcnn, 2);
        let h = pcnn_handles(&model);
        let inst = first_instance(&bags);
        let mut tape = Tape::new();
        let x = embed_instance(&mut tape, &model.params, &h.emb, inst).unwrap();
        let feat = pooled_feature(
            &mut tape,
            &model.params,
            h.conv_w,
            h.conv_b,
            model.config.window,
            x,
            inst,
        )
        .unwrap();
        assert_eq!(tape.value(feat).len(), 3 * model.config.filters);
        assert!(tape.value(feat).data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1, 2, 3] {
            let worst = model_grad_check(ModelKind::Pcnn, seed);
            assert!(worst < 1e-4, "seed {seed}: worst rel error {worst}");
        }
    }

    #[test]
    fn single_token_sentence_still_encodes() {
        let (model, _) = tiny_model(ModelKind::Pcnn, 4);
        let inst = EncodedInstance {
            word_ids: vec![2],
            pos1: vec![10],
            pos2: vec![10],
            e1_idx: 0,
            e2_idx: 0,
            e1_span: (0, 1),
            e2_span: (0, 1),
            raw_tokens: vec!["solo".into()],
        };
        let out = model.predict_instance(&inst).unwrap();
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
