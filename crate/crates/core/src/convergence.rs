//! Steady-state detection over wake-up interval histories.

use serde::{Deserialize, Serialize};

/// When is an interval history "converged": the change between consecutive
/// wake-ups stays within `epsilon_s` for `window` consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceCriterion {
    pub epsilon_s: f64,
    pub window: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        // Epsilon matches the interval step unit: at the fixed point the
        // step is exactly zero, so the criterion is robustly satisfiable.
        ConvergenceCriterion { epsilon_s: 1e-3, window: 10 }
    }
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.epsilon_s > 0.0 && self.epsilon_s.is_finite()) {
            problems.push(format!(
                "convergence.epsilon_s must be positive, got {}",
                self.epsilon_s
            ));
        }
        if self.window < 2 {
            problems.push(format!("convergence.window must be at least 2, got {}", self.window));
        }
        problems
    }
}

/// First index `i` such that every step `|history[k+1] - history[k]|` for
/// `k` in `i..i+window` stays within epsilon; `None` when the history never
/// settles (or is too short to contain a full window).
pub fn detect_convergence(history: &[f64], crit: &ConvergenceCriterion) -> Option<usize> {
    if history.len() < crit.window + 1 {
        return None;
    }
    let within = |k: usize| (history[k + 1] - history[k]).abs() <= crit.epsilon_s;
    'candidate: for i in 0..=history.len() - 1 - crit.window {
        for k in i..i + crit.window {
            if !within(k) {
                continue 'candidate;
            }
        }
        return Some(i);
    }
    None
}

/// Wake-ups needed to reach a demonstrated steady state: the detected index
/// plus the full quiet window that proves it. `None` if never converged.
pub fn wakeups_to_convergence(history: &[f64], crit: &ConvergenceCriterion) -> Option<usize> {
    detect_convergence(history, crit).map(|i| i + crit.window)
}
