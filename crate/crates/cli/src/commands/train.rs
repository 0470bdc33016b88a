//! `train`: fit one model on a bag corpus, early-stopping on dev AUC.
//! Writes `model.json` (checkpoint) and `epochs.csv` (per-epoch log).

use std::io::Write;
use std::path::Path;

use dsre_core::corpus::{encode_bags, load_raw_bags, RelationSchema, Vocabulary};
use dsre_core::training::{fit, overlapping_pairs};
use dsre_core::Result;

use crate::manifest::TrainSpec;

pub fn exec(spec: &TrainSpec, seed: u64, threads: usize, out: &Path) -> Result<()> {
    let cfg = &spec.config;
    cfg.validate()?;
    let corpus_cfg = cfg.model.corpus();

    let train_raw = load_raw_bags(&spec.train)?;
    let vocab = Vocabulary::from_corpus(&train_raw, cfg.model.word_dim);
    let schema = RelationSchema::from_corpus(&train_raw);
    let train_bags = encode_bags(&train_raw, &vocab, &schema, &corpus_cfg)?.bags;

    let dev_raw = load_raw_bags(&spec.dev)?;
    let dev_report = encode_bags(&dev_raw, &vocab, &schema, &corpus_cfg)?;
    if dev_report.dropped_labels > 0 {
        eprintln!(
            "warning: {} dev labels name relations absent from the training corpus and cannot be predicted",
            dev_report.dropped_labels
        );
    }
    let overlap = overlapping_pairs(&train_bags, &dev_report.bags);
    if !overlap.is_empty() {
        eprintln!(
            "warning: {} entity pairs appear in both train and dev (first: {}); dev scores will be inflated",
            overlap.len(),
            overlap[0]
        );
    }

    let result = fit(
        spec.model,
        cfg,
        vocab,
        schema,
        &train_bags,
        &dev_report.bags,
        seed,
        threads,
    )?;

    let mut log = std::io::BufWriter::new(std::fs::File::create(out.join("epochs.csv"))?);
    writeln!(log, "epoch,mean_loss,dev_auc")?;
    for rec in &result.history {
        writeln!(log, "{},{},{}", rec.epoch, rec.train_loss, rec.dev_auc)?;
    }
    log.flush()?;

    result.model.save(&out.join("model.json"))?;
    println!(
        "trained {} for {} epochs; best dev auc {} at epoch {}",
        spec.model,
        result.history.len(),
        result.best_auc,
        result.best_epoch
    );
    Ok(())
}
