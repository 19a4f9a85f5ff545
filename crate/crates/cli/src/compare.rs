//! The `compare` command: one table row per completed run.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, ProblemConfig};
use crate::run::{read_report, CONFIG_FILE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub run: String,
    pub method: String,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub nfe_to_98_peak: Option<u64>,
    pub nfe: Option<u64>,
    pub status: String,
    pub error: Option<String>,
}

impl CompareRow {
    fn failed(run: &Path, error: String) -> Self {
        Self {
            run: run.display().to_string(),
            method: String::new(),
            c: None,
            delta: None,
            psnr: None,
            ssim: None,
            nfe_to_98_peak: None,
            nfe: None,
            status: "error".into(),
            error: Some(error),
        }
    }
}

fn load_problem(dir: &Path) -> Result<ProblemConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // β is a per-kernel model setting, not part of the problem identity.
    cfg.problem.beta = None;
    Ok(cfg.problem)
}

/// Builds the comparison rows. A missing or unreadable run gives an error
/// row; runs that exist but solve different problems are a hard error.
pub fn compare_rows(runs: &[PathBuf]) -> Result<Vec<CompareRow>> {
    if runs.len() < 2 {
        bail!("compare needs at least two run directories");
    }
    let mut reference: Option<(PathBuf, ProblemConfig)> = None;
    let mut rows = Vec::with_capacity(runs.len());
    for dir in runs {
        let loaded = load_problem(dir).and_then(|p| Ok((p, read_report(dir)?)));
        let (problem, report) = match loaded {
            Ok(v) => v,
            Err(e) => {
                rows.push(CompareRow::failed(dir, format!("{e:#}")));
                continue;
            }
        };
        match &reference {
            None => reference = Some((dir.clone(), problem)),
            Some((first, p)) if *p != problem => bail!(
                "runs {} and {} solve different problems",
                first.display(),
                dir.display()
            ),
            Some(_) => {}
        }
        rows.push(CompareRow {
            run: dir.display().to_string(),
            method: report.kernel.name().into(),
            c: report.c,
            delta: Some(report.delta),
            psnr: report.psnr,
            ssim: report.ssim,
            nfe_to_98_peak: report.nfe_to_98_peak,
            nfe: Some(report.nfe),
            status: serde_plain_status(&report.status),
            error: report.error,
        });
    }
    Ok(rows)
}

fn serde_plain_status(s: &crate::run::RunStatus) -> String {
    toml::Value::try_from(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn write_rows(rows: &[CompareRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
