//! `stats`: per-relation bag, entity-pair and sentence counts for a bag
//! corpus. Prints the table; with --out it is also written to `stats.txt`.

use std::path::Path;

use dsre_core::corpus::load_raw_bags;
use dsre_core::gds::{dataset_stats, DatasetStats};
use dsre_core::Result;

use crate::manifest::StatsSpec;

/// Tab-separated table: one row per relation plus a totals row.
pub fn render(stats: &DatasetStats) -> String {
    let mut out = String::new();
    out.push_str(&format!("bags {}\n", stats.bags));
    out.push_str(&format!("sentences {}\n", stats.sentences));
    out.push_str(&format!("entity_pairs {}\n", stats.entity_pairs));
    out.push('\n');
    out.push_str("relation\tbags\tpairs\tsentences\n");
    let (mut b, mut p, mut s) = (0usize, 0usize, 0usize);
    for r in &stats.relations {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.relation, r.bags, r.pairs, r.sentences
        ));
        b += r.bags;
        p += r.pairs;
        s += r.sentences;
    }
    out.push_str(&format!("total\t{b}\t{p}\t{s}\n"));
    out
}

pub fn exec(spec: &StatsSpec, out: &Path) -> Result<()> {
    let bags = load_raw_bags(&spec.bags)?;
    let table = render(&dataset_stats(&bags));
    std::fs::write(out.join("stats.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsre_core::corpus::{Entity, RawBag, RawInstance};

    fn bag(id: &str, relation: Option<&str>, sentences: usize) -> RawBag {
        RawBag {
            bag_id: id.into(),
            e1: Entity {
                id: format!("{id}-a"),
                surface: "a".into(),
            },
            e2: Entity {
                id: format!("{id}-b"),
                surface: "b".into(),
            },
            relations: relation.into_iter().map(String::from).collect(),
            sentences: (0..sentences)
                .map(|_| RawInstance {
                    tokens: vec!["a".into(), "x".into(), "b".into()],
                    e1_span: (0, 1),
                    e2_span: (2, 3),
                })
                .collect(),
        }
    }

    #[test]
    fn table_lists_each_relation_and_a_totals_row() {
        let bags = vec![bag("1", Some("r1"), 2), bag("2", None, 1)];
        let text = render(&dataset_stats(&bags));
        assert!(text.starts_with("bags 2\nsentences 3\nentity_pairs 2\n"));
        assert!(text.contains("NA\t1\t1\t1\n"));
        assert!(text.contains("r1\t1\t1\t2\n"));
        assert!(text.ends_with("total\t2\t2\t3\n"));
    }
}
