use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{EnvError, EpisodeStatus};

pub const WINDOW: usize = 50;
pub const ADVANCE_RATE: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurriculumSignal {
    Hold,
    /// Moved to the given stage; the outcome window was cleared.
    Advanced(usize),
    /// Criterion met on the last stage; nothing to advance to.
    Final,
}

/// Success-rate gate over the most recent episodes of the current stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumTracker {
    stage: usize,
    n_stages: usize,
    capacity: usize,
    threshold: f64,
    window: VecDeque<bool>,
    /// Window success rate right after the latest outcome, before any reset.
    last_rate: f64,
}

impl CurriculumTracker {
    pub fn new(n_stages: usize) -> Self {
        Self::with_window(n_stages, WINDOW, ADVANCE_RATE)
    }

    pub fn with_window(n_stages: usize, capacity: usize, threshold: f64) -> Self {
        assert!(n_stages >= 1 && capacity >= 1);
        Self {
            stage: 0,
            n_stages,
            capacity,
            threshold,
            window: VecDeque::with_capacity(capacity),
            last_rate: 0.0,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }

    pub fn successes(&self) -> usize {
        self.window.iter().filter(|s| **s).count()
    }

    /// Successes over episodes currently in the window (0 when empty).
    pub fn success_rate(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.successes() as f64 / self.window.len() as f64
        }
    }

    /// Rate observed by the latest `update`, unaffected by the reset on advance.
    pub fn last_rate(&self) -> f64 {
        self.last_rate
    }

    pub fn update(&mut self, outcome: EpisodeStatus) -> Result<CurriculumSignal, EnvError> {
        if !outcome.is_terminal() {
            return Err(EnvError::NonTerminalOutcome);
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(outcome == EpisodeStatus::Success);
        self.last_rate = self.success_rate();

        // integer comparison keeps 45/50 exactly on the threshold
        let met = self.is_full()
            && self.successes() as f64 >= self.threshold * self.capacity as f64 - 1e-9;
        if !met {
            return Ok(CurriculumSignal::Hold);
        }
        if self.stage + 1 >= self.n_stages {
            return Ok(CurriculumSignal::Final);
        }
        self.stage += 1;
        self.window.clear();
        Ok(CurriculumSignal::Advanced(self.stage))
    }
}
