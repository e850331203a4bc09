//! Discretized state grid and the value table W laid out on it.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{grid_w, snap_index, Action, SystemState};
use crate::real::Real;

/// Shape of the state grid. Flat offsets are row-major over
/// `(w_idx, n, σ_idx, d, θ_idx)`, θ varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub n_w: usize,
    pub n_n: usize,
    pub n_sigma: usize,
    pub n_d: usize,
    pub n_theta: usize,
    /// T_isp in time steps.
    pub isp_steps: usize,
    /// T_soj in time steps.
    pub soj_steps: usize,
}

/// Grid coordinates of one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub w: usize,
    pub n: usize,
    pub sigma: usize,
    pub d: usize,
    pub theta: usize,
}

impl Grid {
    pub fn new<T: Real>(cfg: &ModelConfig<T>) -> Self {
        let isp_steps = cfg.steps(cfg.inspection_interval);
        Self {
            n_w: cfg.w_cells() + 1,
            n_n: cfg.n_max as usize + 1,
            n_sigma: isp_steps + 1,
            n_d: Action::ALL.len(),
            n_theta: cfg.steps(cfg.horizon) + 1,
            isp_steps,
            soj_steps: cfg.steps(cfg.maintenance_delay),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_w * self.n_n * self.n_sigma * self.n_d * self.n_theta
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset between neighbouring w levels.
    #[inline]
    pub fn w_stride(&self) -> usize {
        self.n_n * self.n_sigma * self.n_d * self.n_theta
    }

    #[inline]
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(c.w < self.n_w && c.n < self.n_n && c.sigma < self.n_sigma);
        debug_assert!(c.d < self.n_d && c.theta < self.n_theta);
        (((c.w * self.n_n + c.n) * self.n_sigma + c.sigma) * self.n_d + c.d) * self.n_theta + c.theta
    }

    #[inline]
    pub fn cell(&self, mut idx: usize) -> Cell {
        let theta = idx % self.n_theta;
        idx /= self.n_theta;
        let d = idx % self.n_d;
        idx /= self.n_d;
        let sigma = idx % self.n_sigma;
        idx /= self.n_sigma;
        let n = idx % self.n_n;
        let w = idx / self.n_n;
        Cell { w, n, sigma, d, theta }
    }

    #[inline]
    pub fn last_theta(&self) -> usize {
        self.n_theta - 1
    }

    /// Steps until the next boundary from a grid cell.
    #[inline]
    pub fn hit_steps(&self, c: Cell) -> usize {
        let event = if c.d == 0 { self.isp_steps } else { self.soj_steps };
        event
            .saturating_sub(c.sigma)
            .min(self.last_theta() - c.theta)
    }

    pub fn state<T: Real>(&self, c: Cell, cfg: &ModelConfig<T>) -> SystemState<T> {
        SystemState::new(
            grid_w(c.w, cfg),
            c.n as u32,
            T::from_usize_lossy(c.sigma) * cfg.time_step,
            Action::from_index(c.d).expect("d on grid"),
            T::from_usize_lossy(c.theta) * cfg.time_step,
        )
    }

    fn time_index<T: Real>(&self, t: T, cfg: &ModelConfig<T>, limit: usize, what: &str) -> Result<usize> {
        let q = t / cfg.time_step;
        let k = q.round();
        if (q - k).abs() > T::lit(1e-6) || k < T::zero() {
            return Err(Error::OffGrid(format!("{what} = {t} is not on the time grid")));
        }
        let k = k.to_usize().unwrap_or(usize::MAX);
        if k >= limit {
            return Err(Error::OffGrid(format!("{what} = {t} is outside the grid")));
        }
        Ok(k)
    }

    pub fn cell_of<T: Real>(&self, x: &SystemState<T>, cfg: &ModelConfig<T>) -> Result<Cell> {
        if x.terminal {
            return Err(Error::OffGrid("the absorbing state has no grid cell".into()));
        }
        let w = snap_index(x.w, cfg);
        if (grid_w(w, cfg) - x.w).abs() > cfg.w_step * T::lit(1e-6) {
            return Err(Error::OffGrid(format!("w = {} is not on the w-grid", x.w)));
        }
        if x.n as usize >= self.n_n {
            return Err(Error::OffGrid(format!("n = {} exceeds n_max", x.n)));
        }
        Ok(Cell {
            w,
            n: x.n as usize,
            sigma: self.time_index(x.sigma, cfg, self.n_sigma, "sigma")?,
            d: x.d.index(),
            theta: self.time_index(x.theta, cfg, self.n_theta, "theta")?,
        })
    }
}

/// W on the grid, tagged with the fingerprint of the configuration it was
/// computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T> {
    pub grid: Grid,
    pub fingerprint: [u8; 32],
    pub values: Vec<T>,
}

impl<T: Real> ValueTable<T> {
    pub fn zeros(cfg: &ModelConfig<T>) -> Self {
        let grid = Grid::new(cfg);
        Self {
            grid,
            fingerprint: cfg.fingerprint(),
            values: vec![T::zero(); grid.len()],
        }
    }

    /// Table with `f(cell)` everywhere except θ = T_end, which is pinned to 0.
    pub fn from_fn(cfg: &ModelConfig<T>, mut f: impl FnMut(Cell) -> T) -> Self {
        let mut t = Self::zeros(cfg);
        let last = t.grid.last_theta();
        for idx in 0..t.values.len() {
            let c = t.grid.cell(idx);
            if c.theta != last {
                t.values[idx] = f(c);
            }
        }
        t
    }

    #[inline]
    pub fn at(&self, c: Cell) -> T {
        self.values[self.grid.index(c)]
    }

    /// Value at a grid state.
    pub fn get(&self, x: &SystemState<T>, cfg: &ModelConfig<T>) -> Result<T> {
        if x.terminal {
            return Ok(T::zero());
        }
        Ok(self.at(self.grid.cell_of(x, cfg)?))
    }

    /// Value at any state: exact on the grid, otherwise bilinear in (σ, θ)
    /// at the snapped w.
    pub fn value_at(&self, x: &SystemState<T>, cfg: &ModelConfig<T>) -> T {
        if x.terminal {
            return T::zero();
        }
        if let Ok(v) = self.get(x, cfg) {
            return v;
        }
        let g = &self.grid;
        let w = snap_index(x.w, cfg);
        let n = (x.n as usize).min(g.n_n - 1);
        let d = x.d.index();
        let bracket = |t: T, len: usize| {
            let q = (t / cfg.time_step).max(T::zero());
            let lo = q.floor().to_usize().unwrap_or(0).min(len - 1);
            let hi = (lo + 1).min(len - 1);
            let frac = if hi == lo {
                T::zero()
            } else {
                (q - T::from_usize_lossy(lo)).min(T::one())
            };
            (lo, hi, frac)
        };
        let (s0, s1, fs) = bracket(x.sigma, g.n_sigma);
        let (t0, t1, ft) = bracket(x.theta, g.n_theta);
        let v = |s, t| self.at(Cell { w, n, sigma: s, d, theta: t });
        let one = T::one();
        (one - fs) * ((one - ft) * v(s0, t0) + ft * v(s0, t1))
            + fs * ((one - ft) * v(s1, t0) + ft * v(s1, t1))
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}
