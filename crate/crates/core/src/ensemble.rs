//! Weighted-voting ensemble over the three encoders.
//!
//! The combined score of a (bag, relation) pair is a fixed linear blend of
//! the member models' probabilities. The blend weights are fit on a dev set
//! by unregularized least squares against the 0/1 gold indicator: with X the
//! per-pair member probabilities and y the indicators, solve `min |Xw - y|`
//! through the normal equations. The 3x3 Gram matrix is eigendecomposed
//! with a cyclic Jacobi sweep and near-zero eigenvalues are dropped, so
//! degenerate designs (for example three identical members) get the
//! minimum-norm solution instead of blowing up.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{encode_bags, RawBag};
use crate::encoders::{Model, ModelKind};
use crate::error::{Error, Result};
use crate::evaluation::{gold_from_raw, score_bags, PredictionRecord};

/// Member slot order. Weight files and design matrices follow it.
pub const MEMBER_KINDS: [ModelKind; 3] = [ModelKind::Pcnn, ModelKind::Ea, ModelKind::Bgwa];

/// Weight names in slot order, the classic blend-coefficient letters.
pub const WEIGHT_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];

/// Per-pair member probabilities (slot order) and the gold indicator,
/// aligned across all three models.
pub struct Design {
    /// (bag_id, relation) per row, identical across members.
    pub keys: Vec<(String, usize)>,
    pub rows: Vec<[f64; 3]>,
    pub targets: Vec<f64>,
}

/// Score a dev corpus with all three members and line the results up
/// row-by-row. Every model re-encodes the raw bags against its own
/// vocabulary; the relation schemas must agree exactly.
pub fn build_design(models: &[&Model; 3], dev: &[RawBag], threads: usize) -> Result<Design> {
    for (slot, model) in models.iter().enumerate() {
        if model.schema != models[0].schema {
            return Err(Error::CheckpointMismatch(format!(
                "ensemble members disagree on the relation schema ({} vs {})",
                models[0].kind, model.kind
            )));
        }
        let _ = slot;
    }
    let mut per_model: Vec<Vec<PredictionRecord>> = Vec::with_capacity(3);
    for model in models {
        let encoded = encode_bags(
            dev,
            &model.vocab,
            &model.schema,
            &model.config.corpus(),
        )?;
        per_model.push(score_bags(model, &encoded.bags, threads)?);
    }
    let n = per_model[0].len();
    if per_model.iter().any(|r| r.len() != n) {
        return Err(Error::domain(
            "build_design",
            "members produced different prediction counts",
        ));
    }
    let (gold, _) = gold_from_raw(dev, &models[0].schema);
    let mut keys = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let a = &per_model[0][i];
        for m in &per_model[1..] {
            if m[i].bag_id != a.bag_id || m[i].relation != a.relation {
                return Err(Error::domain(
                    "build_design",
                    "member predictions are not aligned",
                ));
            }
        }
        keys.push((a.bag_id.clone(), a.relation));
        rows.push([a.score, per_model[1][i].score, per_model[2][i].score]);
        targets.push(if gold.contains(&(a.bag_id.clone(), a.relation)) {
            1.0
        } else {
            0.0
        });
    }
    Ok(Design {
        keys,
        rows,
        targets,
    })
}

/// Least-squares blend weights for `rows * w = targets`, minimum-norm when
/// the normal equations are singular. Needs at least three observations.
pub fn fit_weights(rows: &[[f64; 3]], targets: &[f64]) -> Result<[f64; 3]> {
    if rows.len() != targets.len() {
        return Err(Error::domain(
            "fit_weights",
            "row and target counts differ",
        ));
    }
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 observations to fit 3 weights, got {}",
            rows.len()
        )));
    }
    // normal equations: G w = b with G = X'X, b = X'y
    let mut g = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (r, y) in rows.iter().zip(targets) {
        for i in 0..3 {
            b[i] += r[i] * y;
            for j in 0..3 {
                g[i][j] += r[i] * r[j];
            }
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(g);
    let lambda_max = eigvals.iter().cloned().fold(0.0f64, f64::max);
    let tol = lambda_max * 1e-12;
    let mut w = [0.0f64; 3];
    for k in 0..3 {
        if eigvals[k] <= tol {
            continue; // null direction: contribute nothing (minimum norm)
        }
        // projection of b on eigenvector k, scaled by 1/lambda
        let v = [eigvecs[0][k], eigvecs[1][k], eigvecs[2][k]];
        let coef = (v[0] * b[0] + v[1] * b[1] + v[2] * b[2]) / eigvals[k];
        for i in 0..3 {
            w[i] += coef * v[i];
        }
    }
    Ok(w)
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric 3x3 matrix via
/// cyclic Jacobi rotations.
fn jacobi_eigen(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = (0..3).map(|i| a[i][i].abs()).fold(0.0f64, f64::max);
        if off <= scale.max(1.0) * 1e-15 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() <= f64::MIN_POSITIVE {
                continue;
            }
            // rotation angle zeroing a[p][q]
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let (vkp, vkq) = (v[k][p], v[k][q]);
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Fit blend weights on a raw dev corpus.
pub fn fit_on_dev(models: &[&Model; 3], dev: &[RawBag], threads: usize) -> Result<[f64; 3]> {
    let design = build_design(models, dev, threads)?;
    fit_weights(&design.rows, &design.targets)
}

/// Blend member predictions into combined records using fixed weights.
pub fn score_combined(
    models: &[&Model; 3],
    weights: &[f64; 3],
    bags: &[RawBag],
    threads: usize,
) -> Result<Vec<PredictionRecord>> {
    let design = build_design(models, bags, threads)?;
    Ok(design
        .keys
        .into_iter()
        .zip(design.rows)
        .map(|((bag_id, relation), row)| PredictionRecord {
            bag_id,
            relation,
            score: weights[0] * row[0] + weights[1] * row[1] + weights[2] * row[2],
        })
        .collect())
}

/// Write weights as `name value` lines in slot order.
pub fn save_weights(path: &Path, weights: &[f64; 3]) -> Result<()> {
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    for (name, w) in WEIGHT_NAMES.iter().zip(weights) {
        writeln!(out, "{name} {w}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<[f64; 3]> {
    let file = crate::error::open_file(path)?;
    let mut found = [None::<f64>; 3];
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let value: f64 = parts
            .next()
            .ok_or_else(|| Error::Format(format!("line {}: missing value", n + 1)))?
            .parse()
            .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        let slot = WEIGHT_NAMES
            .iter()
            .position(|w| *w == name)
            .ok_or_else(|| Error::Format(format!("line {}: unknown weight {name:?}", n + 1)))?;
        found[slot] = Some(value);
    }
    let mut weights = [0.0; 3];
    for (slot, w) in found.into_iter().enumerate() {
        weights[slot] =
            w.ok_or_else(|| Error::Format(format!("missing weight {}", WEIGHT_NAMES[slot])))?;
    }
    Ok(weights)
}
