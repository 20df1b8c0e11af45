use super::schedule::{cf_rate, fa_rate, OptimizerKind, ScheduleSpec};
use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, SparseGradient};
use crate::token_space::TokenCounter;

#[derive(Debug, Clone)]
enum RateSource {
    Constant,
    Known(Vec<f64>),
    Counted(TokenCounter),
    Adaptive,
}

/// Mutable state of one update rule over a table of `n_rows x width` values.
///
/// A step is applied in two phases: [`OptimizerState::update_row`] for every
/// touched row, then [`OptimizerState::finish_step`] with the sampled pairs.
/// Counter-based rates therefore always see the counts from before the step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    spec: ScheduleSpec,
    width: usize,
    n_rows: usize,
    rates: RateSource,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    /// `frequencies` holds one probability per stacked token and is required
    /// for `fa-frequency`; it is ignored by the other kinds.
    pub fn new(
        spec: ScheduleSpec,
        n_users: usize,
        n_items: usize,
        width: usize,
        frequencies: Option<&[f64]>,
    ) -> Result<Self> {
        spec.validate()?;
        let n_rows = n_users + n_items;
        let rates = match spec.kind {
            OptimizerKind::SgdConstant => RateSource::Constant,
            OptimizerKind::FaFrequency => {
                let p = frequencies.ok_or_else(|| {
                    Error::invalid("fa-frequency needs per-token frequencies")
                })?;
                if p.len() != n_rows {
                    return Err(Error::invalid(format!(
                        "{} frequencies for {n_rows} tokens",
                        p.len()
                    )));
                }
                RateSource::Known(
                    p.iter()
                        .map(|&pk| fa_rate(&spec, pk))
                        .collect::<Result<_>>()?,
                )
            }
            OptimizerKind::CfCounter => RateSource::Counted(TokenCounter::new(n_users, n_items)),
            OptimizerKind::Adagrad | OptimizerKind::Adam => RateSource::Adaptive,
        };
        let adaptive_len = match spec.kind {
            OptimizerKind::Adagrad | OptimizerKind::Adam => n_rows * width,
            _ => 0,
        };
        let first_len = if spec.kind == OptimizerKind::Adam {
            adaptive_len
        } else {
            0
        };
        Ok(Self {
            spec,
            width,
            n_rows,
            rates,
            first: vec![0.0; first_len],
            second: vec![0.0; adaptive_len],
            step: 0,
        })
    }

    /// State for a single dense parameter touched at every step, such as a
    /// global bias. Both frequency-aware kinds use `p = 1`.
    pub fn dense(spec: ScheduleSpec, width: usize) -> Result<Self> {
        let mut spec = spec;
        if spec.kind == OptimizerKind::CfCounter {
            spec.kind = OptimizerKind::FaFrequency;
        }
        Self::new(spec, 1, 0, width, Some(&[1.0]))
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counter(&self) -> Option<&TokenCounter> {
        match &self.rates {
            RateSource::Counted(c) => Some(c),
            _ => None,
        }
    }

    /// Per-coordinate squared-gradient accumulator (adaptive kinds only).
    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    pub fn second_moment_row(&self, k: usize) -> &[f64] {
        if self.second.is_empty() {
            return &[];
        }
        &self.second[k * self.width..(k + 1) * self.width]
    }

    /// Step size for row `k` at the current step; `None` for adaptive kinds.
    pub fn row_rate(&self, k: usize) -> Option<f64> {
        match &self.rates {
            RateSource::Constant => Some(self.spec.alpha),
            RateSource::Known(r) => Some(r[k]),
            RateSource::Counted(c) => Some(cf_rate(&self.spec, c, k)),
            RateSource::Adaptive => None,
        }
    }

    /// Applies the update for one row in place. Does not advance the step.
    pub fn update_row(&mut self, k: usize, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if k >= self.n_rows {
            return Err(Error::invalid(format!(
                "row {k} out of range for {} rows",
                self.n_rows
            )));
        }
        if params.len() != self.width || grad.len() != self.width {
            return Err(Error::invalid(format!(
                "row width {} / gradient width {} do not match {}",
                params.len(),
                grad.len(),
                self.width
            )));
        }
        let range = k * self.width..(k + 1) * self.width;
        let (alpha, eps) = (self.spec.alpha, self.spec.eps);
        match self.spec.kind {
            OptimizerKind::Adagrad => {
                let acc = &mut self.second[range];
                for ((p, &g), a) in params.iter_mut().zip(grad).zip(acc) {
                    *a += g * g;
                    let denom = a.sqrt() + eps;
                    if denom > 0.0 {
                        *p -= alpha * g / denom;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.spec.beta1, self.spec.beta2);
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let m = &mut self.first[range.clone()];
                let v = &mut self.second[range];
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(m).zip(v) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= alpha * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
            _ => {
                let rate = self.row_rate(k).expect("non-adaptive kind has a rate");
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= rate * g;
                }
            }
        }
        Ok(())
    }

    /// Closes a step: records each sampled `(user, local item)` pair in the
    /// counter (counter-based kind only) and advances the step index.
    pub fn finish_step(&mut self, sampled: &[(usize, usize)]) -> Result<()> {
        if self.step >= self.spec.horizon {
            return Err(Error::invalid(format!(
                "step {} exceeds horizon T = {}",
                self.step + 1,
                self.spec.horizon
            )));
        }
        if let RateSource::Counted(c) = &mut self.rates {
            for &(u, i) in sampled {
                c.record_pair(u, i)?;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// One full step on an embedding table: every row of `grad` is updated
    /// (and projected when a radius is set), then the step is closed.
    pub fn apply_sparse_step(
        &mut self,
        theta: &mut EmbeddingTable,
        grad: &SparseGradient,
        sampled: &[(usize, usize)],
    ) -> Result<()> {
        grad.check_rows(theta.n_rows())?;
        if self.step >= self.spec.horizon {
            return Err(Error::invalid(format!(
                "step index already at horizon T = {}",
                self.spec.horizon
            )));
        }
        for (k, g) in grad.rows() {
            self.update_row(k, theta.row_mut(k), g)?;
            if let Some(r) = self.spec.project_radius {
                theta.project_row(k, r);
            }
        }
        self.finish_step(sampled)
    }
}
