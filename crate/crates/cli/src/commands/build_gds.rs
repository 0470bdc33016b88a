//! `build-gds`: grow seed facts into bags by collecting entity co-occurrence
//! snippets from a document corpus, then split by entity pair. Writes
//! `train.jsonl`, `dev.jsonl`, `test.jsonl` and `stats.txt`.

use std::path::Path;

use dsre_core::corpus::save_raw_bags;
use dsre_core::gds::{build_dataset, dataset_stats, load_documents, load_seeds, split_by_pair, BuilderConfig};
use dsre_core::{Error, Result, Rng};

use crate::commands::{stats, SPLIT_TAG};
use crate::manifest::BuildGdsSpec;

pub fn exec(spec: &BuildGdsSpec, seed: u64, out: &Path) -> Result<()> {
    if spec.ratios.len() != 3 {
        return Err(Error::Config(format!(
            "--ratios takes exactly 3 values (train,dev,test), got {}",
            spec.ratios.len()
        )));
    }
    let seeds = load_seeds(&spec.seeds)?;
    let docs = load_documents(&spec.corpus)?;
    let cfg = BuilderConfig {
        cooccur_window: spec.cooccur_window,
        snippet_len: spec.snippet_len,
    };
    let bags = build_dataset(&seeds, &docs, &cfg)?;
    let mut rng = Rng::new(seed).derive(SPLIT_TAG);
    let splits = split_by_pair(&bags, &spec.ratios, &mut rng)?;

    let names = ["train.jsonl", "dev.jsonl", "test.jsonl"];
    let mut table = stats::render(&dataset_stats(&bags));
    table.push('\n');
    table.push_str("split\tbags\tsentences\n");
    for (name, split) in names.iter().zip(&splits) {
        save_raw_bags(&out.join(name), split)?;
        let sentences: usize = split.iter().map(|b| b.sentences.len()).sum();
        table.push_str(&format!(
            "{}\t{}\t{}\n",
            name.trim_end_matches(".jsonl"),
            split.len(),
            sentences
        ));
    }
    std::fs::write(out.join("stats.txt"), &table)?;
    println!(
        "built {} bags from {} seeds over {} documents",
        bags.len(),
        seeds.len(),
        docs.len()
    );
    Ok(())
}
