//! Epoch accounting.
//!
//! [`Metered`] wraps an objective and charges every data-touching call:
//! `value`, `value_and_gradient`, `gradient`, `hvp` and `hvp_batch` cost one
//! epoch each (full batch), a mini-batch gradient costs `|batch| / n`.
//! Monitoring through [`Objective::report`] is forwarded uncharged.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::objective::{Objective, Report, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CallCounts {
    pub value: u64,
    pub gradient: u64,
    pub hvp: u64,
    pub hvp_batch: u64,
    /// Samples touched by mini-batch gradients.
    pub batch_samples: u64,
}

impl CallCounts {
    pub fn full_passes(&self) -> u64 {
        self.value + self.gradient + self.hvp + self.hvp_batch
    }
}

pub struct Metered<'a> {
    inner: &'a dyn Objective,
    value: AtomicU64,
    gradient: AtomicU64,
    hvp: AtomicU64,
    hvp_batch: AtomicU64,
    batch_samples: AtomicU64,
    // running total charged call by call, checked against the counts in `audit`
    ledger: Mutex<f64>,
}

impl<'a> Metered<'a> {
    pub fn new(inner: &'a dyn Objective) -> Self {
        Self {
            inner,
            value: AtomicU64::new(0),
            gradient: AtomicU64::new(0),
            hvp: AtomicU64::new(0),
            hvp_batch: AtomicU64::new(0),
            batch_samples: AtomicU64::new(0),
            ledger: Mutex::new(0.0),
        }
    }

    pub fn inner(&self) -> &'a dyn Objective {
        self.inner
    }

    fn charge(&self, counter: &AtomicU64, epochs: f64) {
        counter.fetch_add(1, Ordering::Relaxed);
        *self.ledger.lock().unwrap() += epochs;
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            value: self.value.load(Ordering::Relaxed),
            gradient: self.gradient.load(Ordering::Relaxed),
            hvp: self.hvp.load(Ordering::Relaxed),
            hvp_batch: self.hvp_batch.load(Ordering::Relaxed),
            batch_samples: self.batch_samples.load(Ordering::Relaxed),
        }
    }

    /// Cumulative epochs recomputed from the call counts.
    pub fn epochs(&self) -> f64 {
        let c = self.counts();
        c.full_passes() as f64 + c.batch_samples as f64 / self.inner.num_samples() as f64
    }

    /// Compares the incrementally charged total with the count-derived one.
    pub fn audit(&self) -> std::result::Result<f64, String> {
        let charged = *self.ledger.lock().unwrap();
        let recomputed = self.epochs();
        if (charged - recomputed).abs() <= 1e-9 * recomputed.max(1.0) {
            Ok(recomputed)
        } else {
            Err(format!(
                "epoch ledger {charged} disagrees with call counts {recomputed}"
            ))
        }
    }
}

impl Objective for Metered<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        self.charge(&self.value, 1.0);
        self.inner.value(w)
    }

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.charge(&self.gradient, 1.0);
        self.inner.value_and_gradient(w)
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.charge(&self.gradient, 1.0);
        self.inner.gradient(w)
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.charge(&self.hvp, 1.0);
        self.inner.hvp(w, v)
    }

    fn hvp_batch(&self, w: &[f64], columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.charge(&self.hvp_batch, 1.0);
        self.inner.hvp_batch(w, columns)
    }

    fn batch_gradient(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        self.batch_samples
            .fetch_add(indices.len() as u64, Ordering::Relaxed);
        *self.ledger.lock().unwrap() += indices.len() as f64 / self.inner.num_samples() as f64;
        self.inner.batch_gradient(w, indices)
    }

    fn report(&self, w: &[f64]) -> Result<Report> {
        self.inner.report(w)
    }
}
