//! Hyperparameter resolution: built-in defaults, overlaid by a flat
//! `key = value` config file, overlaid by explicit command-line flags.

use std::path::Path;

use clap::Args;
use dsre_core::training::TrainConfig;
use dsre_core::{Error, Result};

pub const KEYS: [&str; 12] = [
    "word_dim",
    "pos_dim",
    "max_position",
    "max_len",
    "window",
    "filters",
    "hidden",
    "dropout",
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
];

/// Per-flag overrides; unset flags leave the file/default value in place.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperFlags {
    /// Word embedding dimension [default: 50]
    #[arg(long)]
    pub word_dim: Option<usize>,
    /// Position embedding dimension [default: 5]
    #[arg(long)]
    pub pos_dim: Option<usize>,
    /// Positions are clipped to +/- this offset [default: 30]
    #[arg(long)]
    pub max_position: Option<usize>,
    /// Sentences longer than this are truncated [default: 120]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Convolution window size [default: 3]
    #[arg(long)]
    pub window: Option<usize>,
    /// Convolution filter count [default: 230]
    #[arg(long)]
    pub filters: Option<usize>,
    /// Recurrent hidden size per direction [default: 115]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Dropout rate on the sentence feature [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// SGD learning rate [default: 0.1]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Examples per gradient step [default: 50]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch cap [default: 200]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without dev improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
}

fn set(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let bad = |e: std::num::ParseIntError| Error::Config(format!("{key}: {e}"));
    let badf = |e: std::num::ParseFloatError| Error::Config(format!("{key}: {e}"));
    match key {
        "word_dim" => cfg.model.word_dim = value.parse().map_err(bad)?,
        "pos_dim" => cfg.model.pos_dim = value.parse().map_err(bad)?,
        "max_position" => cfg.model.max_position = value.parse().map_err(bad)?,
        "max_len" => cfg.model.max_len = value.parse().map_err(bad)?,
        "window" => cfg.model.window = value.parse().map_err(bad)?,
        "filters" => cfg.model.filters = value.parse().map_err(bad)?,
        "hidden" => cfg.model.hidden = value.parse().map_err(bad)?,
        "dropout" => cfg.model.dropout = value.parse().map_err(badf)?,
        "lr" => cfg.lr = value.parse().map_err(badf)?,
        "batch_size" => cfg.batch_size = value.parse().map_err(bad)?,
        "max_epochs" => cfg.max_epochs = value.parse().map_err(bad)?,
        "patience" => cfg.patience = value.parse().map_err(bad)?,
        other => {
            return Err(Error::Config(format!(
                "unknown config key {other:?}; known keys: {}",
                KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

fn apply_file(cfg: &mut TrainConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key = value, got {line:?}",
                path.display(),
                n + 1
            ))
        })?;
        set(cfg, key.trim(), value.trim())?;
    }
    Ok(())
}

fn apply_flags(cfg: &mut TrainConfig, f: &HyperFlags) {
    if let Some(v) = f.word_dim {
        cfg.model.word_dim = v;
    }
    if let Some(v) = f.pos_dim {
        cfg.model.pos_dim = v;
    }
    if let Some(v) = f.max_position {
        cfg.model.max_position = v;
    }
    if let Some(v) = f.max_len {
        cfg.model.max_len = v;
    }
    if let Some(v) = f.window {
        cfg.model.window = v;
    }
    if let Some(v) = f.filters {
        cfg.model.filters = v;
    }
    if let Some(v) = f.hidden {
        cfg.model.hidden = v;
    }
    if let Some(v) = f.dropout {
        cfg.model.dropout = v;
    }
    if let Some(v) = f.lr {
        cfg.lr = v;
    }
    if let Some(v) = f.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = f.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = f.patience {
        cfg.patience = v;
    }
}

/// Defaults, then the config file, then explicit flags; validated at the end.
pub fn resolve(file: Option<&Path>, flags: &HyperFlags) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = file {
        apply_file(&mut cfg, path)?;
    }
    apply_flags(&mut cfg, flags);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_survive_an_empty_resolution() {
        let cfg = resolve(None, &HyperFlags::default()).unwrap();
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn file_overrides_defaults_and_flags_override_the_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nlr = 0.05\nfilters=64\n\nhidden = 32").unwrap();
        let flags = HyperFlags {
            lr: Some(0.2),
            ..Default::default()
        };
        let cfg = resolve(Some(f.path()), &flags).unwrap();
        assert_eq!(cfg.lr, 0.2);
        assert_eq!(cfg.model.filters, 64);
        assert_eq!(cfg.model.hidden, 32);
        assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "learning_rate = 0.1").unwrap();
        assert!(matches!(
            resolve(Some(f.path()), &HyperFlags::default()),
            Err(Error::Config(_))
        ));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "lr = fast").unwrap();
        assert!(resolve(Some(f.path()), &HyperFlags::default()).is_err());
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "no equals sign here").unwrap();
        assert!(resolve(Some(f.path()), &HyperFlags::default()).is_err());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let mut cfg = TrainConfig::default();
        for key in KEYS {
            let value = if key == "dropout" || key == "lr" { "0.25" } else { "7" };
            set(&mut cfg, key, value).unwrap();
        }
        assert_eq!(cfg.model.word_dim, 7);
        assert_eq!(cfg.lr, 0.25);
    }
}
