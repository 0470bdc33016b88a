//! `ensemble-fit`: least-squares blend weights for the three member
//! checkpoints, fit against a dev corpus. Writes `weights.txt`.

use std::path::{Path, PathBuf};

use dsre_core::corpus::load_raw_bags;
use dsre_core::encoders::Model;
use dsre_core::ensemble::{fit_on_dev, save_weights, MEMBER_KINDS, WEIGHT_NAMES};
use dsre_core::{Error, Result};

use crate::manifest::EnsembleFitSpec;

pub fn exec(spec: &EnsembleFitSpec, threads: usize, out: &Path) -> Result<()> {
    let paths: [&PathBuf; 3] = [&spec.pcnn, &spec.ea, &spec.bgwa];
    let mut members = Vec::with_capacity(MEMBER_KINDS.len());
    for (expected, path) in MEMBER_KINDS.iter().zip(paths) {
        let model = Model::load(path)?;
        if model.kind != *expected {
            return Err(Error::Config(format!(
                "--{expected} points at a {} checkpoint ({})",
                model.kind,
                path.display()
            )));
        }
        members.push(model);
    }
    let dev = load_raw_bags(&spec.dev)?;
    let refs = [&members[0], &members[1], &members[2]];
    let weights = fit_on_dev(&refs, &dev, threads)?;
    save_weights(&out.join("weights.txt"), &weights)?;
    for (name, w) in WEIGHT_NAMES.iter().zip(&weights) {
        println!("{name} {w}");
    }
    Ok(())
}
