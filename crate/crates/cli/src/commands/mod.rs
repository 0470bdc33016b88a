//! Subcommand implementations. Every artifact-writing run goes through
//! [`run_with_manifest`]: inputs are hashed and the manifest lands in the
//! output directory before any artifact, so a finished directory can always
//! be replayed.

pub mod attn_export;
pub mod build_gds;
pub mod ensemble_fit;
pub mod eval;
pub mod predict;
pub mod repartition;
pub mod stats;
pub mod train;

use std::path::Path;

use dsre_core::{Error, Result};

use crate::manifest::{sha256_file, RunManifest, RunSpec};

/// Rng substream tag for entity-pair split shuffling, shared by every
/// subcommand that partitions a corpus.
pub const SPLIT_TAG: u64 = 0x7370_6c69;

/// Validate inputs, create the output directory, write manifest.json, then
/// run the subcommand body.
pub fn run_with_manifest(spec: RunSpec, seed: u64, threads: usize, out: &Path) -> Result<()> {
    let manifest = RunManifest::capture(spec, seed, threads, out)?;
    std::fs::create_dir_all(out)?;
    manifest.write(&out.join("manifest.json"))?;
    execute(&manifest.spec, seed, threads, out)
}

/// Re-run a recorded manifest. Inputs must still hash to what the manifest
/// recorded; outputs land in `out_override` or the original directory.
pub fn replay(manifest_path: &Path, out_override: Option<&Path>) -> Result<()> {
    let m = RunManifest::load(manifest_path)?;
    for rec in &m.inputs {
        let now = sha256_file(&rec.path).map_err(|e| {
            Error::Config(format!(
                "manifest input {} ({}) is unreadable: {e}",
                rec.role,
                rec.path.display()
            ))
        })?;
        if now != rec.sha256 {
            return Err(Error::Config(format!(
                "manifest input {} ({}) has changed since the run was recorded",
                rec.role,
                rec.path.display()
            )));
        }
    }
    let out = out_override.unwrap_or(&m.out_dir).to_path_buf();
    println!(
        "replaying {} (seed {}) into {}",
        m.spec.name(),
        m.seed,
        out.display()
    );
    run_with_manifest(m.spec, m.seed, m.threads, &out)
}

fn execute(spec: &RunSpec, seed: u64, threads: usize, out: &Path) -> Result<()> {
    match spec {
        RunSpec::Train(s) => train::exec(s, seed, threads, out),
        RunSpec::Predict(s) => predict::exec(s, threads, out),
        RunSpec::Eval(s) => eval::exec(s, out),
        RunSpec::EnsembleFit(s) => ensemble_fit::exec(s, threads, out),
        RunSpec::AttnExport(s) => attn_export::exec(s, out),
        RunSpec::BuildGds(s) => build_gds::exec(s, seed, out),
        RunSpec::Repartition(s) => repartition::exec(s, seed, out),
        RunSpec::Stats(s) => stats::exec(s, out),
    }
}
