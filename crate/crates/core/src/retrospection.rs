//! Per-sample soft-label snapshots and the α/β weighting schedule.
//!
//! The store is double-buffered. Every epoch writes the softened training
//! logits of each sample into `pending`; at every k-th epoch boundary the
//! pending buffer becomes `active` and supervises the next k epochs. Reads
//! only ever see `active`, so nothing recorded during an epoch can
//! supervise a later batch of the same epoch.

use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{contract, precondition, Result};
use crate::losses;

/// Fraction of the total weight moved onto the soft-label term by the end of training.
pub const WARM_FACTOR: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct SoftLabelStore {
    num_samples: usize,
    num_classes: usize,
    active: Option<Vec<f64>>,
    pending: Vec<f64>,
    pending_mask: Vec<bool>,
    seen_this_epoch: usize,
    snapshots: usize,
}

impl SoftLabelStore {
    pub fn new(num_samples: usize, num_classes: usize) -> Result<Self> {
        if num_samples == 0 || num_classes == 0 {
            return Err(precondition("soft-label store needs at least one sample and one class"));
        }
        Ok(Self {
            num_samples,
            num_classes,
            active: None,
            pending: vec![0.0; num_samples * num_classes],
            pending_mask: vec![false; num_samples],
            seen_this_epoch: 0,
            snapshots: 0,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of commits so far.
    pub fn snapshot_index(&self) -> usize {
        self.snapshots
    }

    pub fn has_active(&self) -> bool {
        self.active.is_some()
    }

    pub fn pending_mask(&self) -> &[bool] {
        &self.pending_mask
    }

    pub fn active_buffer(&self) -> Option<&[f64]> {
        self.active.as_deref()
    }

    /// Floats held across both buffers once the first snapshot exists.
    pub fn capacity_floats(&self) -> usize {
        2 * self.num_samples * self.num_classes
    }

    /// Stores `σ(logits_row / τ)` as the pending soft label of each sample.
    ///
    /// `logits` is a plain tensor, so nothing here links back to a tape.
    pub fn record_pending(&mut self, sample_ids: &[usize], logits: &Tensor, tau: f64) -> Result<()> {
        let (rows, cols) = logits.dims2()?;
        if rows != sample_ids.len() || cols != self.num_classes {
            return Err(contract(format!(
                "logits {:?} do not match {} ids × {} classes",
                logits.shape(),
                sample_ids.len(),
                self.num_classes
            )));
        }
        if let Some(&bad) = sample_ids.iter().find(|&&id| id >= self.num_samples) {
            return Err(contract(format!("sample id {bad} out of range for {} samples", self.num_samples)));
        }
        let soft = losses::softmax_temperature(logits, tau)?;
        let c = self.num_classes;
        for (row, &id) in sample_ids.iter().enumerate() {
            if self.pending_mask[id] {
                log::warn!("sample {id} recorded twice in one epoch; keeping the latest");
            } else {
                self.pending_mask[id] = true;
                self.seen_this_epoch += 1;
            }
            self.pending[id * c..(id + 1) * c].copy_from_slice(soft.row(row));
        }
        Ok(())
    }

    /// End-of-epoch hook. On epochs divisible by `k` the pending buffer
    /// becomes active (the previous active buffer is recycled as the next
    /// pending buffer). The seen-this-epoch mask is reset on every call.
    pub fn commit_if_due(&mut self, epoch: usize, k: usize) -> Result<bool> {
        if epoch == 0 || k == 0 {
            return Err(precondition(format!("epoch and interval must be ≥ 1 (epoch={epoch}, k={k})")));
        }
        let due = epoch.is_multiple_of(k);
        if due {
            if self.seen_this_epoch != self.num_samples {
                return Err(contract(format!(
                    "commit at epoch {epoch} but only {} of {} samples were recorded",
                    self.seen_this_epoch, self.num_samples
                )));
            }
            let recycled = self
                .active
                .take()
                .unwrap_or_else(|| vec![0.0; self.num_samples * self.num_classes]);
            self.active = Some(std::mem::replace(&mut self.pending, recycled));
            self.snapshots += 1;
        }
        self.pending_mask.iter_mut().for_each(|m| *m = false);
        self.seen_this_epoch = 0;
        Ok(due)
    }

    /// Active soft labels for `sample_ids` as a `B × C` tensor, or `None`
    /// before the first commit.
    pub fn get_soft_labels(&self, sample_ids: &[usize]) -> Result<Option<Tensor>> {
        if let Some(&bad) = sample_ids.iter().find(|&&id| id >= self.num_samples) {
            return Err(contract(format!("sample id {bad} out of range for {} samples", self.num_samples)));
        }
        let Some(active) = &self.active else {
            return Ok(None);
        };
        let c = self.num_classes;
        let mut out = Vec::with_capacity(sample_ids.len() * c);
        for &id in sample_ids {
            out.extend_from_slice(&active[id * c..(id + 1) * c]);
        }
        Tensor::new(vec![sample_ids.len(), c], out).map(Some)
    }

    /// Writes the active buffer as `sample_id,p_0,...,p_{C-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let active = self
            .active
            .as_ref()
            .ok_or_else(|| contract("no soft labels committed yet"))?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = std::iter::once("sample_id".to_string())
            .chain((0..self.num_classes).map(|c| format!("p_{c}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (id, row) in active.chunks_exact(self.num_classes).enumerate() {
            write!(out, "{id}")?;
            for p in row {
                write!(out, ",{p:e}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Where the α/β weights come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// `β = 0.9·(i·k)/M`, `α = 1 − β`, stepping at each snapshot.
    Linear,
    /// Constant weights once soft labels exist.
    Fixed { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetroSchedule {
    interval: usize,
    total_epochs: usize,
    weighting: Weighting,
}

impl RetroSchedule {
    /// `interval` may exceed `total_epochs`; such a schedule never commits.
    pub fn new(interval: usize, total_epochs: usize) -> Result<Self> {
        Self::with_weighting(interval, total_epochs, Weighting::Linear)
    }

    pub fn with_weighting(interval: usize, total_epochs: usize, weighting: Weighting) -> Result<Self> {
        if interval == 0 || total_epochs == 0 {
            return Err(precondition(format!(
                "interval and total epochs must be ≥ 1 (k={interval}, M={total_epochs})"
            )));
        }
        if let Weighting::Fixed { alpha, beta } = weighting {
            if !(alpha >= 0.0 && beta >= 0.0) {
                return Err(precondition("fixed loss weights must be nonnegative"));
            }
        }
        Ok(Self {
            interval,
            total_epochs,
            weighting,
        })
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Commits over a complete run: `⌊M/k⌋`.
    pub fn expected_commits(&self) -> usize {
        self.total_epochs / self.interval
    }

    /// Weights once `snapshot` commits have happened (`snapshot = 0`: no soft labels yet).
    pub fn weights_for_snapshot(&self, snapshot: usize) -> (f64, f64) {
        if snapshot == 0 {
            return (1.0, 0.0);
        }
        match self.weighting {
            Weighting::Linear => {
                let beta = WARM_FACTOR * (snapshot * self.interval) as f64 / self.total_epochs as f64;
                (1.0 - beta, beta)
            }
            Weighting::Fixed { alpha, beta } => (alpha, beta),
        }
    }

    /// Weights supervising `epoch` (1-based). Epoch `e` is supervised by the
    /// snapshot taken at epoch `i·k` with `i = ⌊(e − 1)/k⌋`.
    pub fn alpha_beta(&self, epoch: usize) -> Result<(f64, f64)> {
        if epoch == 0 || epoch > self.total_epochs {
            return Err(contract(format!("epoch {epoch} outside 1..={}", self.total_epochs)));
        }
        Ok(self.weights_for_snapshot((epoch - 1) / self.interval))
    }
}
