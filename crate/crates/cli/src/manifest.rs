//! Run manifests: every subcommand that writes artifacts first records what
//! it is about to do — the resolved configuration, the seed, the inputs with
//! their content hashes and the artifact names — so the run can be audited
//! and replayed bit-identically later.

use std::io::Read;
use std::path::{Path, PathBuf};

use dsre_core::encoders::ModelKind;
use dsre_core::training::TrainConfig;
use dsre_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub model: ModelKind,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictSpec {
    /// Single checkpoint, mutually exclusive with `models`/`ensemble`.
    pub model: Option<PathBuf>,
    /// Member checkpoints in pcnn, ea, bgwa order.
    pub models: Option<Vec<PathBuf>>,
    /// Weights file fitted by `ensemble-fit`.
    pub ensemble: Option<PathBuf>,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSpec {
    pub predictions: PathBuf,
    pub test: PathBuf,
    pub p_at: Vec<usize>,
    /// Cap on the recall axis of pr.csv; plot-time only.
    pub max_recall: Option<f64>,
    /// Cap the AUC integration at this recall.
    pub auc_max_recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFitSpec {
    pub pcnn: PathBuf,
    pub ea: PathBuf,
    pub bgwa: PathBuf,
    pub dev: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttnExportSpec {
    pub model: PathBuf,
    pub bags: PathBuf,
    pub bag: String,
    pub relation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildGdsSpec {
    pub seeds: PathBuf,
    pub corpus: PathBuf,
    pub ratios: Vec<f64>,
    pub cooccur_window: usize,
    pub snippet_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepartitionSpec {
    pub bags: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsSpec {
    pub bags: PathBuf,
}

/// Everything a run needs besides the seed and thread count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum RunSpec {
    Train(TrainSpec),
    Predict(PredictSpec),
    Eval(EvalSpec),
    EnsembleFit(EnsembleFitSpec),
    AttnExport(AttnExportSpec),
    BuildGds(BuildGdsSpec),
    Repartition(RepartitionSpec),
    Stats(StatsSpec),
}

impl RunSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RunSpec::Train(_) => "train",
            RunSpec::Predict(_) => "predict",
            RunSpec::Eval(_) => "eval",
            RunSpec::EnsembleFit(_) => "ensemble-fit",
            RunSpec::AttnExport(_) => "attn-export",
            RunSpec::BuildGds(_) => "build-gds",
            RunSpec::Repartition(_) => "repartition",
            RunSpec::Stats(_) => "stats",
        }
    }

    /// Input files the run reads, with their role names.
    pub fn inputs(&self) -> Vec<(String, PathBuf)> {
        let one = |role: &str, p: &PathBuf| (role.to_string(), p.clone());
        match self {
            RunSpec::Train(s) => vec![one("train", &s.train), one("dev", &s.dev)],
            RunSpec::Predict(s) => {
                let mut v = Vec::new();
                if let Some(m) = &s.model {
                    v.push(one("model", m));
                }
                if let Some(ms) = &s.models {
                    for (kind, p) in ["pcnn", "ea", "bgwa"].iter().zip(ms) {
                        v.push(one(kind, p));
                    }
                }
                if let Some(w) = &s.ensemble {
                    v.push(one("ensemble", w));
                }
                v.push(one("test", &s.test));
                v
            }
            RunSpec::Eval(s) => vec![one("predictions", &s.predictions), one("test", &s.test)],
            RunSpec::EnsembleFit(s) => vec![
                one("pcnn", &s.pcnn),
                one("ea", &s.ea),
                one("bgwa", &s.bgwa),
                one("dev", &s.dev),
            ],
            RunSpec::AttnExport(s) => vec![one("model", &s.model), one("bags", &s.bags)],
            RunSpec::BuildGds(s) => vec![one("seeds", &s.seeds), one("corpus", &s.corpus)],
            RunSpec::Repartition(s) => vec![one("bags", &s.bags)],
            RunSpec::Stats(s) => vec![one("bags", &s.bags)],
        }
    }

    /// Fixed artifact filenames the run writes into its output directory,
    /// besides manifest.json itself.
    pub fn artifacts(&self) -> Vec<&'static str> {
        match self {
            RunSpec::Train(_) => vec!["model.json", "epochs.csv"],
            RunSpec::Predict(_) => vec!["predictions.tsv"],
            RunSpec::Eval(_) => vec!["pr.csv", "report.txt"],
            RunSpec::EnsembleFit(_) => vec!["weights.txt"],
            RunSpec::AttnExport(_) => vec!["attention.csv"],
            RunSpec::BuildGds(_) => vec!["train.jsonl", "dev.jsonl", "test.jsonl", "stats.txt"],
            RunSpec::Repartition(_) => vec!["train.jsonl", "dev.jsonl"],
            RunSpec::Stats(_) => vec!["stats.txt"],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// The manifest written into the output directory before any artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub spec: RunSpec,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<InputRecord>,
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    /// Seconds since the Unix epoch at capture time.
    pub created_unix: u64,
}

impl RunManifest {
    /// Hash all inputs and freeze the run description. Fails if an input is
    /// missing, so nothing is written for a run that cannot start.
    pub fn capture(spec: RunSpec, seed: u64, threads: usize, out_dir: &Path) -> Result<RunManifest> {
        let mut inputs = Vec::new();
        for (role, path) in spec.inputs() {
            let sha256 = sha256_file(&path).map_err(|e| {
                Error::Config(format!("cannot read {role} input {}: {e}", path.display()))
            })?;
            inputs.push(InputRecord { role, path, sha256 });
        }
        let artifacts = spec.artifacts().iter().map(|s| s.to_string()).collect();
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(RunManifest {
            spec,
            seed,
            threads,
            inputs,
            out_dir: out_dir.to_path_buf(),
            artifacts,
            created_unix,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad manifest {}: {e}", path.display())))
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_json() {
        let spec = RunSpec::Repartition(RepartitionSpec {
            bags: PathBuf::from("bags.jsonl"),
        });
        let m = RunManifest {
            spec,
            seed: 7,
            threads: 2,
            inputs: vec![InputRecord {
                role: "bags".into(),
                path: PathBuf::from("bags.jsonl"),
                sha256: "00".into(),
            }],
            out_dir: PathBuf::from("out"),
            artifacts: vec!["train.jsonl".into(), "dev.jsonl".into()],
            created_unix: 123,
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"subcommand\":\"repartition\""));
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.spec.name(), "repartition");
        assert_eq!(back.artifacts, m.artifacts);
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn capture_rejects_missing_inputs() {
        let spec = RunSpec::Stats(StatsSpec {
            bags: PathBuf::from("/nonexistent/bags.jsonl"),
        });
        assert!(RunManifest::capture(spec, 1, 1, Path::new("out")).is_err());
    }
}
