//! Decision rules applied at inspection epochs.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{grid_w, is_failed, snap_index, Action, SystemState};
use crate::real::Real;
use crate::table::Grid;

/// An action for every inspection cell `(w_idx, n, θ_idx)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTable {
    pub n_w: usize,
    pub n_n: usize,
    pub n_theta: usize,
    actions: Vec<Action>,
}

impl ActionTable {
    pub fn filled(grid: &Grid, action: Action) -> Self {
        Self {
            n_w: grid.n_w,
            n_n: grid.n_n,
            n_theta: grid.n_theta,
            actions: vec![action; grid.n_w * grid.n_n * grid.n_theta],
        }
    }

    #[inline]
    fn offset(&self, w: usize, n: usize, theta: usize) -> usize {
        (w * self.n_n + n) * self.n_theta + theta
    }

    #[inline]
    pub fn get(&self, w: usize, n: usize, theta: usize) -> Action {
        self.actions[self.offset(w, n, theta)]
    }

    #[inline]
    pub fn set(&mut self, w: usize, n: usize, theta: usize, a: Action) {
        let o = self.offset(w, n, theta);
        self.actions[o] = a;
    }

    /// `[w][n]` actions on one θ slice.
    pub fn slice(&self, theta: usize) -> Vec<Vec<Action>> {
        (0..self.n_w)
            .map(|w| (0..self.n_n).map(|n| self.get(w, n, theta)).collect())
            .collect()
    }

    pub fn count(&self, theta: usize, a: Action) -> usize {
        (0..self.n_w)
            .flat_map(|w| (0..self.n_n).map(move |n| (w, n)))
            .filter(|&(w, n)| self.get(w, n, theta) == a)
            .count()
    }

    /// Where the three action regions meet on a θ slice: the highest `n`
    /// that still uses imperfect repair, and the first w index at or above
    /// its last imperfect cell that calls for replacement (one past that
    /// cell if the row never does). `None` when the slice has no action 1.
    pub fn dividing_point(&self, theta: usize) -> Option<(usize, usize)> {
        let n = (0..self.n_n)
            .rev()
            .find(|&n| (0..self.n_w).any(|w| self.get(w, n, theta) == Action::Imperfect))?;
        let last_one = (0..self.n_w).rev().find(|&w| self.get(w, n, theta) == Action::Imperfect)?;
        let w = (last_one..self.n_w)
            .find(|&w| self.get(w, n, theta) == Action::Corrective)
            .unwrap_or(last_one + 1);
        Some((w, n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy<T> {
    /// Argmin actions read off a solved value table.
    OptimalTable(ActionTable),
    /// Plan a corrective replacement only once the system is seen failed.
    CorrectiveOnly,
    /// No action below ξ₁, imperfect repair on [ξ₁, ξ₂), replacement from ξ₂.
    Threshold { xi1: T, xi2: T },
}

impl<T: Real> Policy<T> {
    pub fn threshold(xi1: T, xi2: T, cfg: &ModelConfig<T>) -> Result<Self> {
        if !(T::zero() <= xi1 && xi1 <= xi2 && xi2 <= cfg.failure_level) {
            return Err(Error::InvalidConfig(format!(
                "thresholds need 0 <= xi1 <= xi2 <= M, got ({xi1}, {xi2})"
            )));
        }
        Ok(Self::Threshold { xi1, xi2 })
    }

    pub fn name(&self) -> String {
        match self {
            Self::OptimalTable(_) => "imm".into(),
            Self::CorrectiveOnly => "cmm".into(),
            Self::Threshold { xi1, xi2 } => format!("tmm({xi1},{xi2})"),
        }
    }

    /// Action planned on observing `x` at an inspection.
    pub fn decide(&self, x: &SystemState<T>, cfg: &ModelConfig<T>) -> Action {
        let w = snap_index(x.w, cfg);
        match self {
            Self::OptimalTable(t) => {
                let n = (x.n as usize).min(t.n_n - 1);
                let theta = (x.theta / cfg.time_step)
                    .round()
                    .to_usize()
                    .unwrap_or(0)
                    .min(t.n_theta - 1);
                t.get(w.min(t.n_w - 1), n, theta)
            }
            Self::CorrectiveOnly => {
                if is_failed(grid_w(w, cfg), cfg) {
                    Action::Corrective
                } else {
                    Action::None
                }
            }
            Self::Threshold { xi1, xi2 } => {
                if w < snap_index(*xi1, cfg) {
                    Action::None
                } else if w < snap_index(*xi2, cfg) {
                    Action::Imperfect
                } else {
                    Action::Corrective
                }
            }
        }
    }

    /// The rule evaluated on every inspection cell of the grid.
    pub fn tabulate(&self, cfg: &ModelConfig<T>) -> ActionTable {
        if let Self::OptimalTable(t) = self {
            return t.clone();
        }
        let grid = Grid::new(cfg);
        let mut table = ActionTable::filled(&grid, Action::None);
        for w in 0..grid.n_w {
            for n in 0..grid.n_n {
                for theta in 0..grid.n_theta {
                    let x = SystemState::new(
                        grid_w(w, cfg),
                        n as u32,
                        cfg.inspection_interval,
                        Action::None,
                        T::from_usize_lossy(theta) * cfg.time_step,
                    );
                    table.set(w, n, theta, self.decide(&x, cfg));
                }
            }
        }
        table
    }
}
