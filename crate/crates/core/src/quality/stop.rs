use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Stop once the trailing-mean FID has risen for `patience` evaluations in
/// a row, but never before `min_evals` evaluations exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StopPolicy {
    pub window: usize,
    pub patience: usize,
    pub min_evals: usize,
}

impl Default for StopPolicy {
    fn default() -> Self {
        Self {
            window: 3,
            patience: 2,
            min_evals: 4,
        }
    }
}

impl StopPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.patience == 0 {
            return Err(Error::Config(format!("window and patience must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// `history` holds `(iteration, fid)` pairs in evaluation order.
pub fn should_stop(history: &[(usize, f64)], policy: &StopPolicy) -> bool {
    if history.len() < policy.min_evals.max(1) {
        return false;
    }
    let window = policy.window.max(1);
    let smoothed: Vec<f64> = (0..history.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            history[lo..=i].iter().map(|&(_, f)| f).sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect();
    let rises = smoothed
        .windows(2)
        .rev()
        .take_while(|w| w[1] > w[0])
        .count();
    rises >= policy.patience.max(1)
}
