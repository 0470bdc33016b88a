//! `eval`: score a predictions file against the gold labels of a test
//! corpus. Writes `pr.csv` (the curve) and `report.txt` (AUC and P@N).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use dsre_core::corpus::{load_raw_bags, RelationSchema, NA_LABEL};
use dsre_core::evaluation::{evaluate, gold_from_raw, write_pr_csv, PredictionRecord};
use dsre_core::{Error, Result};

use crate::manifest::EvalSpec;

/// Parse a `bag_id\trelation\tscore` TSV. Relation names the schema does not
/// know are kept under synthetic ids past the schema, so they still occupy
/// ranks (as guaranteed misses) instead of silently vanishing.
fn parse_predictions(
    path: &Path,
    schema: &RelationSchema,
) -> Result<(Vec<PredictionRecord>, usize)> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines().enumerate();
    let fail = |n: usize, msg: String| Error::Parse { line: n + 1, msg };
    let (_, header) = lines
        .next()
        .ok_or_else(|| fail(0, "empty predictions file".into()))?;
    let header = header?;
    if header.trim_end() != "bag_id\trelation\tscore" {
        return Err(fail(
            0,
            format!("expected header bag_id\\trelation\\tscore, got {header:?}"),
        ));
    }
    let mut records = Vec::new();
    let mut synthetic: HashMap<String, usize> = HashMap::new();
    let mut unknown = 0usize;
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [bag_id, relation, score] = fields.as_slice() else {
            return Err(fail(n, format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        if *relation == NA_LABEL {
            return Err(fail(n, "NA is not a predictable relation".into()));
        }
        let score: f64 = score
            .parse()
            .map_err(|e| fail(n, format!("bad score: {e}")))?;
        if !score.is_finite() {
            return Err(fail(n, format!("non-finite score {score}")));
        }
        let relation = match schema.id(relation) {
            Some(id) => id,
            None => {
                unknown += 1;
                let next = schema.len() + synthetic.len();
                *synthetic.entry(relation.to_string()).or_insert(next)
            }
        };
        records.push(PredictionRecord {
            bag_id: bag_id.to_string(),
            relation,
            score,
        });
    }
    Ok((records, unknown))
}

pub fn exec(spec: &EvalSpec, out: &Path) -> Result<()> {
    let test_raw = load_raw_bags(&spec.test)?;
    let schema = RelationSchema::from_corpus(&test_raw);
    let (gold, _) = gold_from_raw(&test_raw, &schema);
    let (records, unknown) = parse_predictions(&spec.predictions, &schema)?;
    if unknown > 0 {
        eprintln!(
            "warning: {unknown} predictions name relations absent from the test corpus; they count as misses"
        );
    }
    let (report, points) = evaluate(&records, &gold, &spec.p_at, spec.auc_max_recall)?;

    let plotted = match spec.max_recall {
        Some(cap) => points
            .iter()
            .filter(|p| p.recall <= cap)
            .cloned()
            .collect(),
        None => points,
    };
    write_pr_csv(&out.join("pr.csv"), &plotted)?;

    let mut rep = std::io::BufWriter::new(std::fs::File::create(out.join("report.txt"))?);
    writeln!(rep, "predictions {}", report.predictions)?;
    writeln!(rep, "gold_pairs {}", report.gold_pairs)?;
    match report.max_recall {
        Some(cap) => writeln!(rep, "auc {} (integrated up to recall {cap})", report.auc)?,
        None => writeln!(rep, "auc {}", report.auc)?,
    }
    for (n, p, truncated) in &report.p_at {
        if *truncated {
            writeln!(rep, "p@{n} {p} (only {} predictions)", report.predictions)?;
        } else {
            writeln!(rep, "p@{n} {p}")?;
        }
    }
    rep.flush()?;

    println!("auc {}", report.auc);
    Ok(())
}
