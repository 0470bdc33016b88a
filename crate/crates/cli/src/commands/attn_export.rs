//! `attn-export`: per-token attention weights for the instance a model
//! selects in one bag for one relation. Writes `attention.csv` with the
//! token column plus one weight column per attention mechanism.

use std::path::Path;

use dsre_core::corpus::{encode_bag, load_raw_bags};
use dsre_core::encoders::Model;
use dsre_core::evaluation::export_selected_attention;
use dsre_core::{Error, Result};

use crate::manifest::AttnExportSpec;

pub fn exec(spec: &AttnExportSpec, out: &Path) -> Result<()> {
    let model = Model::load(&spec.model)?;
    let raw = load_raw_bags(&spec.bags)?;
    let bag = raw
        .iter()
        .find(|b| b.bag_id == spec.bag)
        .ok_or_else(|| Error::Lookup(format!("no bag {:?} in {}", spec.bag, spec.bags.display())))?;
    let relation = model.schema.id(&spec.relation).ok_or_else(|| {
        Error::Lookup(format!(
            "model does not know relation {:?}; it has: {}",
            spec.relation,
            model.schema.names().join(", ")
        ))
    })?;
    let encoded = encode_bag(bag, &model.vocab, &model.schema, &model.config.corpus())?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(out.join("attention.csv"))?);
    export_selected_attention(&model, &encoded, relation, &mut file)?;
    use std::io::Write;
    file.flush()?;
    println!(
        "exported {} attention for bag {} relation {}",
        model.kind, spec.bag, spec.relation
    );
    Ok(())
}
