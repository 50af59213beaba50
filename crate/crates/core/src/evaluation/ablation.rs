//! Grid over the high dropout rate, the equivariant loss and seeds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sts::summarize;
use super::{StsPair, Vocabulary};
use crate::encoder::TokenSequence;
use crate::error::{EsclError, Result};
use crate::losses::EquivariantLoss;
use crate::numerics::DropoutSpec;
use crate::parallel;
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub r_high_values: Vec<f64>,
    pub variants: Vec<EquivariantLoss>,
    pub seeds: Vec<u64>,
}

impl AblationGrid {
    /// Cells in row-major order: rate, then variant, then seed.
    pub fn cells(&self) -> Vec<(f64, EquivariantLoss, u64)> {
        let mut out = Vec::new();
        for &r in &self.r_high_values {
            for &v in &self.variants {
                for &s in &self.seeds {
                    out.push((r, v, s));
                }
            }
        }
        out
    }
}

/// One trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub r_high: f64,
    pub variant: EquivariantLoss,
    pub seed: u64,
    pub rho: f64,
}

/// Seeds aggregated for one `(r_high, variant)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub r_high: f64,
    pub variant: EquivariantLoss,
    pub seed_count: usize,
    pub mean_rho: f64,
    pub std_rho: f64,
    pub median_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, r_high: f64, variant: EquivariantLoss) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.r_high == r_high && r.variant == variant)
    }

    /// Aligned plain-text table of the aggregated rows.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>7}  {:<8}  {:>10}  {:>9}  {:>8}",
            "r_high", "variant", "seed_count", "mean_rho", "std_rho"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>7.2}  {:<8}  {:>10}  {:>9.4}  {:>8.4}",
                r.r_high, r.variant, r.seed_count, r.mean_rho, r.std_rho
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trains and evaluates one model per grid cell. Cells run in parallel and
/// are joined in grid order.
pub fn run_ablation(
    base: &TrainConfig,
    grid: &AblationGrid,
    vocab: &Vocabulary,
    corpus: &[TokenSequence],
    pairs: &[StsPair],
) -> Result<AblationReport> {
    if grid.r_high_values.is_empty() || grid.variants.is_empty() || grid.seeds.is_empty() {
        return Err(EsclError::Config("ablation grid has an empty axis".into()));
    }
    let configs = grid
        .cells()
        .into_iter()
        .map(|(r_high, variant, seed)| {
            let mut cfg = base.clone();
            cfg.r_high = DropoutSpec::new(r_high)?;
            cfg.loss.variant = variant;
            cfg.seed = seed;
            cfg.eval_every = 0;
            cfg.checkpoint_path = None;
            cfg.select_best = false;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = parallel::map(&configs, |cfg| -> Result<AblationCell> {
        let out = train(cfg, vocab, corpus, Some(pairs))?;
        Ok(AblationCell {
            r_high: cfg.r_high.rate(),
            variant: cfg.loss.variant,
            seed: cfg.seed,
            rho: out.rho.expect("evaluation pairs were supplied"),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &r_high in &grid.r_high_values {
        for &variant in &grid.variants {
            let rhos: Vec<f64> = cells
                .iter()
                .filter(|c| c.r_high == r_high && c.variant == variant)
                .map(|c| c.rho)
                .collect();
            let (mean_rho, std_rho, median_rho) = summarize(&rhos);
            rows.push(AblationRow {
                r_high,
                variant,
                seed_count: rhos.len(),
                mean_rho,
                std_rho,
                median_rho,
            });
        }
    }
    Ok(AblationReport { cells, rows })
}
