//! Held-out evaluation: bag scoring, precision/recall curves, area under
//! the curve, precision at k, and attention export.
//!
//! A prediction is (bag, relation, score) for every non-NA relation; gold is
//! the set of (bag, relation) pairs labeled in the corpus. Predictions are
//! ranked by score with a deterministic tie order, and the curve walks that
//! ranking top-down.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::corpus::{InstanceBag, RawBag, RelationSchema, NA};
use crate::encoders::{Model, ModelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub bag_id: String,
    pub relation: usize,
    pub score: f64,
}

/// Gold (bag, relation) pairs; a BTreeSet keeps iteration deterministic.
pub type GoldSet = BTreeSet<(String, usize)>;

/// One point of the precision/recall curve, produced per ranked prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    /// Score of the prediction that produced this point.
    pub score: f64,
}

/// Score every bag against every non-NA relation. With `threads > 1` the
/// bags are scored on scoped worker threads in fixed chunks, so the output
/// order never depends on scheduling.
pub fn score_bags(
    model: &Model,
    bags: &[InstanceBag],
    threads: usize,
) -> Result<Vec<PredictionRecord>> {
    let workers = threads.max(1).min(bags.len().max(1));
    if workers <= 1 {
        return score_chunk(model, bags);
    }
    let chunk = bags.len().div_ceil(workers);
    let parts: Vec<Result<Vec<PredictionRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = bags
            .chunks(chunk)
            .map(|c| s.spawn(move || score_chunk(model, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(bags.len() * model.relations().saturating_sub(1));
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn score_chunk(model: &Model, bags: &[InstanceBag]) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::with_capacity(bags.len() * model.relations().saturating_sub(1));
    for bag in bags {
        let probs = model.predict_bag(bag)?;
        for (r, score) in probs.iter().enumerate().skip(1) {
            out.push(PredictionRecord {
                bag_id: bag.bag_id.clone(),
                relation: r,
                score: *score,
            });
        }
    }
    Ok(out)
}

/// Gold pairs from encoded bags (NA labels are not gold).
pub fn gold_from_bags(bags: &[InstanceBag]) -> GoldSet {
    let mut gold = GoldSet::new();
    for bag in bags {
        for &r in &bag.labels {
            if r != NA {
                gold.insert((bag.bag_id.clone(), r));
            }
        }
    }
    gold
}

/// Gold pairs from raw bags mapped through a model's schema. Relation names
/// the schema does not know cannot be predicted and are dropped; the count
/// of dropped labels is returned so callers can surface it.
pub fn gold_from_raw(raw: &[RawBag], schema: &RelationSchema) -> (GoldSet, usize) {
    let mut gold = GoldSet::new();
    let mut dropped = 0;
    for bag in raw {
        for name in &bag.relations {
            match schema.id(name) {
                Some(NA) | None => {
                    if schema.id(name).is_none() {
                        dropped += 1;
                    }
                }
                Some(r) => {
                    gold.insert((bag.bag_id.clone(), r));
                }
            }
        }
    }
    (gold, dropped)
}

/// Rank predictions: score descending, then bag id ascending, then relation
/// ascending. The secondary keys make equal-score orderings reproducible.
pub fn rank_predictions(records: &mut [PredictionRecord]) -> Result<()> {
    if records.iter().any(|r| !r.score.is_finite()) {
        return Err(Error::domain("rank_predictions", "non-finite score"));
    }
    records.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores checked finite")
            .then_with(|| a.bag_id.cmp(&b.bag_id))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    Ok(())
}

/// Precision/recall walking the ranked predictions from the top. Requires a
/// non-empty gold set (recall is hits over gold size).
pub fn pr_curve(records: &[PredictionRecord], gold: &GoldSet) -> Result<Vec<PrPoint>> {
    if gold.is_empty() {
        return Err(Error::InsufficientData(
            "precision/recall needs at least one gold pair".into(),
        ));
    }
    let mut ranked = records.to_vec();
    rank_predictions(&mut ranked)?;
    let total = gold.len() as f64;
    let mut hits = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for (k, rec) in ranked.iter().enumerate() {
        if gold.contains(&(rec.bag_id.clone(), rec.relation)) {
            hits += 1;
        }
        points.push(PrPoint {
            precision: hits as f64 / (k + 1) as f64,
            recall: hits as f64 / total,
            score: rec.score,
        });
    }
    Ok(points)
}

/// Area under the precision/recall curve by trapezoid rule over recall,
/// anchored at (recall 0, precision of the first point). A ranking that
/// places every gold pair first integrates to exactly 1.0.
pub fn auc(points: &[PrPoint]) -> f64 {
    auc_up_to(points, f64::INFINITY)
}

/// Area under the curve for recall up to `cap`; a segment crossing the cap
/// contributes its linearly interpolated part. The area is not renormalized.
pub fn auc_up_to(points: &[PrPoint], cap: f64) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let (mut r_prev, mut p_prev) = (0.0f64, first.precision);
    for pt in points {
        if pt.recall <= r_prev {
            // ties in recall add no area; keep the newer precision
            p_prev = pt.precision;
            continue;
        }
        if pt.recall > cap {
            if cap > r_prev {
                let t = (cap - r_prev) / (pt.recall - r_prev);
                let p_cap = p_prev + (pt.precision - p_prev) * t;
                area += (cap - r_prev) * (p_prev + p_cap) / 2.0;
            }
            return area;
        }
        area += (pt.recall - r_prev) * (pt.precision + p_prev) / 2.0;
        r_prev = pt.recall;
        p_prev = pt.precision;
    }
    area
}

/// Precision over the `n` highest-ranked predictions. When fewer than `n`
/// predictions exist the whole ranking is used and the flag is set.
pub fn p_at_n(records: &[PredictionRecord], gold: &GoldSet, n: usize) -> Result<(f64, bool)> {
    if n == 0 {
        return Err(Error::domain("p_at_n", "n must be positive"));
    }
    let mut ranked = records.to_vec();
    rank_predictions(&mut ranked)?;
    let truncated = n > ranked.len();
    let take = n.min(ranked.len());
    if take == 0 {
        return Ok((0.0, truncated));
    }
    let hits = ranked[..take]
        .iter()
        .filter(|r| gold.contains(&(r.bag_id.clone(), r.relation)))
        .count();
    Ok((hits as f64 / take as f64, truncated))
}

/// Summary statistics for a scored corpus.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub auc: f64,
    /// Recall cap applied to the area, if any.
    pub max_recall: Option<f64>,
    /// (n, precision, truncated) per requested cutoff.
    pub p_at: Vec<(usize, f64, bool)>,
    pub predictions: usize,
    pub gold_pairs: usize,
}

pub fn evaluate(
    records: &[PredictionRecord],
    gold: &GoldSet,
    p_at_ns: &[usize],
    max_recall: Option<f64>,
) -> Result<(EvalReport, Vec<PrPoint>)> {
    let points = pr_curve(records, gold)?;
    let area = match max_recall {
        Some(cap) => auc_up_to(&points, cap),
        None => auc(&points),
    };
    let mut p_at = Vec::with_capacity(p_at_ns.len());
    for &n in p_at_ns {
        let (p, truncated) = p_at_n(records, gold, n)?;
        p_at.push((n, p, truncated));
    }
    Ok((
        EvalReport {
            auc: area,
            max_recall,
            p_at,
            predictions: records.len(),
            gold_pairs: gold.len(),
        },
        points,
    ))
}

/// `recall,precision,score` per ranked prediction.
pub fn write_pr_csv(path: &Path, points: &[PrPoint]) -> Result<()> {
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    writeln!(out, "recall,precision,score")?;
    for p in points {
        writeln!(out, "{},{},{}", p.recall, p.precision, p.score)?;
    }
    out.flush()?;
    Ok(())
}

/// Ranked predictions as TSV: bag id, relation name, score.
pub fn write_predictions_tsv(
    path: &Path,
    records: &[PredictionRecord],
    schema: &RelationSchema,
) -> Result<()> {
    let mut ranked = records.to_vec();
    rank_predictions(&mut ranked)?;
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    writeln!(out, "bag_id\trelation\tscore")?;
    for r in &ranked {
        writeln!(out, "{}\t{}\t{}", r.bag_id, schema.name(r.relation), r.score)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-token attention weights as CSV, one row per token of every sentence.
/// Word-attention models emit one weight column; entity-attention models
/// emit one column per entity head. Architectures without attention are
/// rejected rather than silently exporting nothing.
pub fn export_attention(model: &Model, bags: &[InstanceBag], out: &mut dyn Write) -> Result<()> {
    match model.kind {
        ModelKind::Pcnn => return Err(Error::UnsupportedMechanism("pcnn")),
        ModelKind::Bgwa => writeln!(out, "bag_id,instance,token_index,token,weight")?,
        ModelKind::Ea => writeln!(out, "bag_id,instance,token_index,token,e1_weight,e2_weight")?,
    }
    for bag in bags {
        for (i, inst) in bag.instances.iter().enumerate() {
            let o = model.predict_instance(inst)?;
            match model.kind {
                ModelKind::Pcnn => unreachable!("rejected above"),
                ModelKind::Bgwa => {
                    let w = o.word_attention.ok_or_else(|| {
                        Error::domain("export_attention", "missing word attention")
                    })?;
                    for (t, tok) in inst.raw_tokens.iter().enumerate() {
                        writeln!(
                            out,
                            "{},{},{},{},{}",
                            csv_field(&bag.bag_id),
                            i,
                            t,
                            csv_field(tok),
                            w[t]
                        )?;
                    }
                }
                ModelKind::Ea => {
                    let (a1, a2) = o.entity_attention.ok_or_else(|| {
                        Error::domain("export_attention", "missing entity attention")
                    })?;
                    for (t, tok) in inst.raw_tokens.iter().enumerate() {
                        writeln!(
                            out,
                            "{},{},{},{},{},{}",
                            csv_field(&bag.bag_id),
                            i,
                            t,
                            csv_field(tok),
                            a1[t],
                            a2[t]
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Attention table for the one instance the model selects for `relation` in
/// this bag (its per-relation argmax): one CSV row per token, one weight
/// column per attention mechanism.
pub fn export_selected_attention(
    model: &Model,
    bag: &InstanceBag,
    relation: usize,
    out: &mut dyn Write,
) -> Result<()> {
    if model.kind == ModelKind::Pcnn {
        return Err(Error::UnsupportedMechanism("pcnn"));
    }
    if relation >= model.relations() {
        return Err(Error::domain(
            "export_selected_attention",
            format!("relation id {relation} out of range"),
        ));
    }
    let idx = crate::training::select_instance(model, bag, relation)?;
    let inst = &bag.instances[idx];
    let o = model.predict_instance(inst)?;
    match model.kind {
        ModelKind::Pcnn => unreachable!("rejected above"),
        ModelKind::Bgwa => {
            let w = o
                .word_attention
                .ok_or_else(|| Error::domain("export_selected_attention", "missing word attention"))?;
            writeln!(out, "token,word_attention")?;
            for (tok, weight) in inst.raw_tokens.iter().zip(&w) {
                writeln!(out, "{},{}", csv_field(tok), weight)?;
            }
        }
        ModelKind::Ea => {
            let (a1, a2) = o.entity_attention.ok_or_else(|| {
                Error::domain("export_selected_attention", "missing entity attention")
            })?;
            writeln!(out, "token,entity1_attention,entity2_attention")?;
            for (t, tok) in inst.raw_tokens.iter().enumerate() {
                writeln!(out, "{},{},{}", csv_field(tok), a1[t], a2[t])?;
            }
        }
    }
    Ok(())
}
