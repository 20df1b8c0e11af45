use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv::fmt17;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,step,train_loss,val_auc";
pub const TOKENS_HEADER: &str = "token,rank,p_hat,grad_norm_sq,accumulator_sum";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Optimizer steps completed at the end of the epoch.
    pub step: u64,
    pub train_loss: f64,
    pub val_auc: f64,
}

/// End-of-run diagnostics for one stacked token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRow {
    pub token: usize,
    /// 1-based frequency rank within the token's own set (users or items).
    pub rank: usize,
    pub p_hat: f64,
    pub grad_norm_sq: f64,
    pub accumulator_sum: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRow>,
    pub tokens: Vec<TokenRow>,
}

impl MetricsLog {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                r.step,
                fmt17(r.train_loss),
                fmt17(r.val_auc)
            );
        }
        out
    }

    pub fn tokens_csv(&self) -> String {
        let mut out = format!("{TOKENS_HEADER}\n");
        for t in &self.tokens {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.token,
                t.rank,
                fmt17(t.p_hat),
                fmt17(t.grad_norm_sq),
                fmt17(t.accumulator_sum)
            );
        }
        out
    }

    /// Peak validation AUC and the first epoch reaching it.
    pub fn best_epoch(&self) -> Option<&EpochRow> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRow>, r| match best {
                Some(b) if b.val_auc >= r.val_auc => Some(b),
                _ => Some(r),
            })
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv` and `tokens.csv` into `dir`.
pub fn export_metrics(log: &MetricsLog, dir: impl AsRef<Path>) -> Result<()> {
    if log.epochs.is_empty() {
        return Err(Error::invalid("metrics log is empty"));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("metrics.csv"), &log.metrics_csv())?;
    write_file(&dir.join("tokens.csv"), &log.tokens_csv())
}

fn rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{header}`, found {other:?}"),
            })
        }
    }
    Ok(lines.enumerate().map(|(i, l)| (i + 2, l.split(',').collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("bad or missing column {}", i + 1),
        })
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochRow>> {
    rows(text, METRICS_HEADER)?
        .map(|(line, c)| {
            Ok(EpochRow {
                epoch: field(&c, 0, line)?,
                step: field(&c, 1, line)?,
                train_loss: field(&c, 2, line)?,
                val_auc: field(&c, 3, line)?,
            })
        })
        .collect()
}

pub fn parse_tokens_csv(text: &str) -> Result<Vec<TokenRow>> {
    rows(text, TOKENS_HEADER)?
        .map(|(line, c)| {
            Ok(TokenRow {
                token: field(&c, 0, line)?,
                rank: field(&c, 1, line)?,
                p_hat: field(&c, 2, line)?,
                grad_norm_sq: field(&c, 3, line)?,
                accumulator_sum: field(&c, 4, line)?,
            })
        })
        .collect()
}
