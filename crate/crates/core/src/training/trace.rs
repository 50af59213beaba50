use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EsclError, Result};
use crate::losses::LossBreakdown;

/// One line of the step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub info_nce: f64,
    pub equivariant: f64,
    pub total: f64,
    pub dist_pos: f64,
    pub dist_neg: f64,
}

impl StepRecord {
    pub fn new(step: u64, b: &LossBreakdown) -> Self {
        StepRecord {
            step,
            info_nce: b.info_nce,
            equivariant: b.equivariant,
            total: b.total,
            dist_pos: b.dist_pos,
            dist_neg: b.dist_neg,
        }
    }

    pub fn gap(&self) -> f64 {
        self.dist_neg - self.dist_pos
    }
}

/// Evaluation snapshot taken with dropout disabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Number of updates applied before the snapshot.
    pub step: u64,
    pub rho: f64,
}

/// Append-only training history.
///
/// Wall-clock time is logged but kept out of the records so that traces of
/// identical runs compare equal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl MetricTrace {
    pub fn push_step(&mut self, record: StepRecord) {
        debug_assert!(self.steps.last().is_none_or(|r| r.step < record.step));
        self.steps.push(record);
    }

    pub fn push_eval(&mut self, record: EvalRecord) {
        self.evals.push(record);
    }

    /// Step records as JSON lines.
    pub fn steps_jsonl(&self) -> String {
        jsonl(&self.steps)
    }

    pub fn evals_jsonl(&self) -> String {
        jsonl(&self.evals)
    }

    pub fn write_steps(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.steps_jsonl().as_bytes())
    }

    pub fn write_evals(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.evals_jsonl().as_bytes())
    }

    /// Parses a step trace written by [`MetricTrace::write_steps`].
    pub fn parse_steps(text: &str) -> Result<Vec<StepRecord>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| EsclError::Parse {
                    path: "trace".into(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

fn jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| EsclError::Input(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| EsclError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| EsclError::io(&tmp, e))?;
    f.sync_all().map_err(|e| EsclError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| EsclError::io(path, e))
}
