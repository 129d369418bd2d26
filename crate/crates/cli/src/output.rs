//! On-disk formats written by the commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dmpinn::config::Experiment;
use dmpinn::hessian::FlatParams;
use dmpinn::reference::GridResolution;
use dmpinn::{ArchitectureKind, ProblemKind};

/// Trained parameters plus what is needed to evaluate them again.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub problem: ProblemKind,
    pub normalize: bool,
    pub eval_grid: GridResolution,
    pub network: FlatParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rel_l2: Option<f64>,
    pub iterations: usize,
    pub final_loss: f64,
    pub diverged_at: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupSummary {
    pub architecture: ArchitectureKind,
    pub learning_rate: f64,
    /// Mean over seeds; absent if any seed diverged.
    pub mean_rel_l2: Option<f64>,
    pub runs: Vec<SeedSummary>,
}

#[derive(Serialize)]
pub struct TrainSummary<'a> {
    pub problem: ProblemKind,
    #[serde(flatten)]
    pub group: &'a GroupSummary,
    pub config: &'a Experiment,
}

#[derive(Serialize)]
pub struct CompareSummary<'a> {
    pub problem: ProblemKind,
    pub groups: &'a [GroupSummary],
    pub config: &'a Experiment,
}

/// Wall-clock figures, kept apart from the reproducible outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingEntry {
    pub architecture: ArchitectureKind,
    pub learning_rate: f64,
    pub seed: u64,
    pub wall_ms: f64,
    pub ms_per_iter: f64,
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Left-aligned first column, right-aligned numbers.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_columns_line_up() {
        let t = aligned_table(
            &["arch", "err"],
            &[
                vec!["dm".into(), "1.5e-2".into()],
                vec!["vanilla".into(), "0.5".into()],
            ],
        );
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "arch        err");
        assert_eq!(lines[2], "dm       1.5e-2");
        assert_eq!(lines[3], "vanilla     0.5");
    }
}
