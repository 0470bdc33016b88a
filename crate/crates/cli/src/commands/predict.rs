//! `predict`: score a test corpus with one checkpoint, or blend the three
//! ensemble members under fitted weights. Writes ranked `predictions.tsv`.

use std::path::Path;

use dsre_core::corpus::{encode_bags, load_raw_bags};
use dsre_core::encoders::Model;
use dsre_core::ensemble::{load_weights, score_combined, MEMBER_KINDS};
use dsre_core::evaluation::{score_bags, write_predictions_tsv};
use dsre_core::{Error, Result};

use crate::manifest::PredictSpec;

pub fn exec(spec: &PredictSpec, threads: usize, out: &Path) -> Result<()> {
    let raw = load_raw_bags(&spec.test)?;
    let (records, schema) = match (&spec.model, &spec.models, &spec.ensemble) {
        (Some(ckpt), None, None) => {
            let model = Model::load(ckpt)?;
            let encoded = encode_bags(&raw, &model.vocab, &model.schema, &model.config.corpus())?;
            let records = score_bags(&model, &encoded.bags, threads)?;
            (records, model.schema)
        }
        (None, Some(paths), Some(weights_path)) => {
            if paths.len() != MEMBER_KINDS.len() {
                return Err(Error::Config(format!(
                    "--models takes {} checkpoints (pcnn, ea, bgwa), got {}",
                    MEMBER_KINDS.len(),
                    paths.len()
                )));
            }
            let mut members = Vec::with_capacity(MEMBER_KINDS.len());
            for (expected, path) in MEMBER_KINDS.iter().zip(paths) {
                let model = Model::load(path)?;
                if model.kind != *expected {
                    return Err(Error::Config(format!(
                        "{} holds a {} checkpoint, expected {expected} (order is pcnn, ea, bgwa)",
                        path.display(),
                        model.kind
                    )));
                }
                members.push(model);
            }
            let weights = load_weights(weights_path)?;
            let refs = [&members[0], &members[1], &members[2]];
            let records = score_combined(&refs, &weights, &raw, threads)?;
            let schema = members.into_iter().next().expect("three members").schema;
            (records, schema)
        }
        _ => {
            return Err(Error::Config(
                "pass either --model CKPT, or --models P E B with --ensemble WEIGHTS".into(),
            ))
        }
    };
    write_predictions_tsv(&out.join("predictions.tsv"), &records, &schema)?;
    println!("scored {} bags ({} predictions)", raw.len(), records.len());
    Ok(())
}
