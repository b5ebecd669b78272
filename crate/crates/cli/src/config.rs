//! Mining configuration from flags, an optional JSON config file, and
//! defaults, in that order of precedence.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use pseudobox::MiningConfig;

#[derive(Debug, Clone, Default, Args)]
pub struct MiningFlags {
    /// JSON file with any subset of the mining configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated CAM thresholds.
    #[arg(long)]
    pub thresholds: Option<String>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    #[arg(long)]
    pub connectivity: Option<u8>,
    #[arg(long)]
    pub min_area_ratio: Option<f64>,
    #[arg(long)]
    pub min_box_size: Option<f64>,
    /// Treat pixels as unit squares when matching second moments.
    #[arg(long)]
    pub moment_correction: bool,
    /// Keep exact duplicate boxes during NMS.
    #[arg(long)]
    pub keep_duplicates: bool,
}

pub fn parse_csv(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("not a number: {s:?}")))
        .collect()
}

/// Parses `a,b;c;d,e` into threshold sets.
pub fn parse_grid(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    let sets: Vec<Vec<f64>> = text
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_csv)
        .collect::<Result<_, _>>()?;
    if sets.is_empty() || sets.iter().any(Vec::is_empty) {
        bail!("empty threshold set in grid {text:?}");
    }
    Ok(sets)
}

impl MiningFlags {
    pub fn resolve(&self) -> anyhow::Result<MiningConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str::<MiningConfig>(&text)
                    .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?
            }
            None => MiningConfig::default(),
        };
        if let Some(t) = &self.thresholds {
            config.taus = parse_csv(t)?;
        }
        if let Some(v) = self.nms_iou {
            config.nms_iou = v;
        }
        if let Some(v) = self.connectivity {
            config.connectivity = v;
        }
        if let Some(v) = self.min_area_ratio {
            config.min_area_ratio = v;
        }
        if let Some(v) = self.min_box_size {
            config.min_box_size = v;
        }
        if self.moment_correction {
            config.moment_correction = true;
        }
        if self.keep_duplicates {
            config.keep_duplicates = true;
        }
        config.validate()?;
        Ok(config)
    }
}
