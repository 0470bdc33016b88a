//! `repartition`: split one bag corpus 80/20 into a new train and dev set,
//! keeping every unordered entity pair on one side. Writes `train.jsonl`
//! and `dev.jsonl`.

use std::path::Path;

use dsre_core::corpus::{load_raw_bags, save_raw_bags};
use dsre_core::gds::split_by_pair;
use dsre_core::{Result, Rng};

use crate::commands::SPLIT_TAG;
use crate::manifest::RepartitionSpec;

pub fn exec(spec: &RepartitionSpec, seed: u64, out: &Path) -> Result<()> {
    let bags = load_raw_bags(&spec.bags)?;
    let mut rng = Rng::new(seed).derive(SPLIT_TAG);
    let mut splits = split_by_pair(&bags, &[0.8, 0.2], &mut rng)?;
    let dev = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    save_raw_bags(&out.join("train.jsonl"), &train)?;
    save_raw_bags(&out.join("dev.jsonl"), &dev)?;
    println!(
        "split {} bags into {} train / {} dev",
        bags.len(),
        train.len(),
        dev.len()
    );
    Ok(())
}
