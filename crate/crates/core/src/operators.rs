//! Discretized Bellman operators ℜ, 𝔗, G, H and 𝔅 on a value table.
//!
//! Everything is precomputed per configuration into index tables so a sweep
//! touches only flat offsets. The state-level functions are thin wrappers
//! around the same index code the solver runs.

use rayon::prelude::*;

use crate::config::{GradualForm, ModelConfig};
use crate::dists::Kernels;
use crate::error::{Error, Result};
use crate::model::{
    classify_boundary, flow_w, grid_w, imperfect_cost, running_cost_at, shock_rate, snap_index,
    Action, BoundaryKind, SystemState,
};
use crate::policy::ActionTable;
use crate::real::Real;
use crate::table::{Cell, Grid, ValueTable};

/// Composite trapezoid weights `Δt·e^{−rate·jΔt}` for nodes `j = 0..=steps`,
/// halved at both ends.
pub fn trapezoid_weights<T: Real>(steps: usize, dt: T, rate: T) -> Vec<T> {
    if steps == 0 {
        return vec![T::zero()];
    }
    let half = T::lit(0.5);
    (0..=steps)
        .map(|j| {
            let w = dt * (-rate * dt * T::from_usize_lossy(j)).exp();
            if j == 0 || j == steps {
                w * half
            } else {
                w
            }
        })
        .collect()
}

/// `∫₀^{t*} e^{−rate·t} f(t) dt` by the composite trapezoid on nodes `jΔt`,
/// with one shorter panel at the end when `t*` is not a multiple of `Δt`.
pub fn discounted_trapezoid<T: Real>(t_star: T, dt: T, rate: T, mut f: impl FnMut(T) -> T) -> T {
    if t_star <= T::zero() {
        return T::zero();
    }
    let q = t_star / dt;
    let mut steps = q.floor().to_usize().unwrap_or(0);
    if q - T::from_usize_lossy(steps + 1) > -T::lit(1e-9) {
        steps += 1;
    }
    let at = |t: T| (-rate * t).exp();
    let mut total = T::zero();
    if steps > 0 {
        let weights = trapezoid_weights(steps, dt, rate);
        total = weights
            .iter()
            .enumerate()
            .map(|(j, &w)| w * f(dt * T::from_usize_lossy(j)))
            .sum();
    }
    let last = dt * T::from_usize_lossy(steps);
    let rem = t_star - last;
    if rem > dt * T::lit(1e-9) {
        total = total + rem * T::lit(0.5) * (at(last) * f(last) + at(t_star) * f(t_star));
    }
    total
}

/// Precomputed operator context for one configuration.
#[derive(Debug, Clone)]
pub struct Operators<T> {
    cfg: ModelConfig<T>,
    grid: Grid,
    kernels: Kernels<T>,
    /// Nodes per flow row, `isp_steps + 1`.
    span: usize,
    /// `flow[w·span + j]`: w index after `jΔt` of flow from w index `w`.
    flow: Vec<usize>,
    cost: Vec<T>,
    eta: Vec<T>,
    /// Post-shock w indices (capped at M, merged) with their masses.
    jumps: Vec<Vec<(usize, T)>>,
    /// `repair[w][k]`: w index of `ϑ_k·w`.
    repair: Vec<Vec<usize>>,
    /// `e^{−(K+ρ)jΔt}`.
    decay: Vec<T>,
    /// Trapezoid weights for each step count up to `isp_steps`.
    weights: Vec<Vec<T>>,
}

impl<T: Real> Operators<T> {
    pub fn new(cfg: &ModelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg);
        let kernels = Kernels::new(cfg);
        let span = grid.isp_steps + 1;
        let rate = cfg.uniformization + cfg.discount;

        let flow = (0..grid.n_w)
            .flat_map(|w| {
                (0..span).map(move |j| {
                    let t = T::from_usize_lossy(j) * cfg.time_step;
                    snap_index(flow_w(grid_w(w, cfg), t, cfg), cfg)
                })
            })
            .collect();

        let jumps = (0..grid.n_w)
            .map(|w| {
                let Some(law) = kernels.damage(w) else {
                    return Vec::new();
                };
                let mut merged: Vec<(usize, T)> = Vec::new();
                for (&cells, &p) in law.cells.iter().zip(&law.masses) {
                    let to = (w + cells).min(grid.n_w - 1);
                    match merged.last_mut() {
                        Some(last) if last.0 == to => last.1 = last.1 + p,
                        _ => merged.push((to, p)),
                    }
                }
                merged
            })
            .collect();

        let factors = &kernels.improvement(0).support;
        let repair = (0..grid.n_w)
            .map(|w| {
                factors
                    .iter()
                    .map(|&f| snap_index(f * grid_w(w, cfg), cfg))
                    .collect()
            })
            .collect();

        Ok(Self {
            cost: (0..grid.n_w).map(|w| running_cost_at(grid_w(w, cfg), cfg)).collect(),
            eta: (0..grid.n_w).map(|w| shock_rate(grid_w(w, cfg), cfg)).collect(),
            decay: (0..span)
                .map(|j| (-rate * cfg.time_step * T::from_usize_lossy(j)).exp())
                .collect(),
            weights: (0..span)
                .map(|s| trapezoid_weights(s, cfg.time_step, rate))
                .collect(),
            cfg: cfg.clone(),
            grid,
            kernels,
            span,
            flow,
            jumps,
            repair,
        })
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernels(&self) -> &Kernels<T> {
        &self.kernels
    }

    /// ℜV at flat offset `idx` split as `(a, κ)` with ℜV = a + κ·V(idx).
    /// Shocks only move to larger w, so `a` reads no same-w values.
    #[inline]
    pub fn gradual_parts(&self, v: &[T], idx: usize, w: usize) -> (T, T) {
        let eta = self.eta[w];
        let stride = self.grid.w_stride();
        let mut a = self.cost[w];
        if eta > T::zero() {
            let mut acc = T::zero();
            for &(to, p) in &self.jumps[w] {
                acc = acc + p * v[idx + (to - w) * stride];
            }
            a = a + eta * acc;
        }
        let kappa = match self.cfg.gradual_form {
            GradualForm::Uniformized => self.cfg.uniformization - eta,
            GradualForm::Literal => T::zero(),
        };
        (a, kappa)
    }

    /// ℜV at flat offset `idx` whose w index is `w`.
    #[inline]
    pub fn gradual_at(&self, v: &[T], idx: usize, w: usize) -> T {
        let (a, kappa) = self.gradual_parts(v, idx, w);
        a + kappa * v[idx]
    }

    /// ℜV at every grid state.
    pub fn gradual_all(&self, v: &[T]) -> Vec<T> {
        let ws = self.grid.w_stride();
        (0..v.len())
            .into_par_iter()
            .map(|idx| self.gradual_at(v, idx, idx / ws))
            .collect()
    }

    /// ℜV on one θ slice, written into `r`.
    pub fn gradual_slice(&self, v: &[T], r: &mut [T], theta: usize) {
        let nt = self.grid.n_theta;
        let ws = self.grid.w_stride();
        let cells: Vec<T> = (0..v.len() / nt)
            .into_par_iter()
            .map(|base| {
                let idx = base * nt + theta;
                self.gradual_at(v, idx, idx / ws)
            })
            .collect();
        for (base, val) in cells.into_iter().enumerate() {
            r[base * nt + theta] = val;
        }
    }

    #[inline]
    fn reset_value(&self, v: &[T], theta: usize) -> T {
        v[self.grid.index(Cell { w: 0, n: 0, sigma: 0, d: 0, theta })]
    }

    /// Value of the Ξ₁ branch `a` at inspection cell `c`.
    #[inline]
    pub fn inspect_branch(&self, v: &[T], c: Cell, a: Action) -> T {
        self.cfg.inspection_cost + v[self.grid.index(Cell { sigma: 0, d: a.index(), ..c })]
    }

    /// 𝔗V at boundary cell `c`. Which boundary is read off the cell, so `c`
    /// must already be on one. A forced rule replaces the Ξ₁ minimization.
    pub fn boundary_at(&self, v: &[T], c: Cell, rule: Option<&ActionTable>) -> (T, Action) {
        let g = &self.grid;
        if c.theta == g.last_theta() {
            return (T::zero(), Action::None);
        }
        match c.d {
            0 => {
                if let Some(t) = rule {
                    let a = t.get(c.w, c.n, c.theta);
                    return (self.inspect_branch(v, c, a), a);
                }
                let mut best = (self.inspect_branch(v, c, Action::None), Action::None);
                for a in [Action::Imperfect, Action::Corrective] {
                    let val = self.inspect_branch(v, c, a);
                    if val < best.0 {
                        best = (val, a);
                    }
                }
                best
            }
            1 if c.w == g.n_w - 1 => (self.reset_value(v, c.theta) + self.cfg.surprise_cost, Action::None),
            1 => {
                let n_next = (c.n + 1).min(g.n_n - 1);
                let law = self.kernels.improvement(c.n as u32);
                let acc: T = self.repair[c.w]
                    .iter()
                    .zip(&law.masses)
                    .map(|(&to, &p)| {
                        p * v[g.index(Cell { w: to, n: n_next, sigma: 0, d: 0, theta: c.theta })]
                    })
                    .sum();
                let c1 = imperfect_cost(grid_w(c.w, &self.cfg), c.n as u32, &self.cfg);
                (acc + c1, Action::None)
            }
            _ => (self.reset_value(v, c.theta) + self.cfg.corrective_cost, Action::None),
        }
    }

    /// Steps to the boundary and the boundary cell reached from `c`.
    #[inline]
    pub fn hit(&self, c: Cell) -> (usize, Cell) {
        let s = self.grid.hit_steps(c);
        let w = self.flow[c.w * self.span + s];
        (s, Cell { w, sigma: c.sigma + s, theta: c.theta + s, ..c })
    }

    /// G from ℜV supplied per node as `r(idx, w_idx)`.
    #[inline]
    pub fn quad_at(&self, c: Cell, s: usize, r: impl Fn(usize, usize) -> T) -> T {
        if s == 0 {
            return T::zero();
        }
        let row = &self.flow[c.w * self.span..];
        self.weights[s]
            .iter()
            .enumerate()
            .map(|(j, &wt)| {
                let w = row[j];
                let idx = self.grid.index(Cell { w, sigma: c.sigma + j, theta: c.theta + j, ..c });
                wt * r(idx, w)
            })
            .sum()
    }

    /// 𝔅V at cell `c`, with ℜV from `r` and 𝔗 evaluated on `v`.
    #[inline]
    pub fn bellman_at(
        &self,
        v: &[T],
        c: Cell,
        rule: Option<&ActionTable>,
        r: impl Fn(usize, usize) -> T,
    ) -> T {
        if c.theta == self.grid.last_theta() {
            return T::zero();
        }
        let (s, hit) = self.hit(c);
        let g = self.quad_at(c, s, r);
        g + self.decay[s] * self.boundary_at(v, hit, rule).0
    }

    /// The 𝔅 equation at interior cell `c` solved for V(c) itself: the j = 0
    /// node's self term moves to the left-hand side and every other reference
    /// is read from `v` (and ℜV at later nodes from `r`). Needs `t*(c) > 0`.
    #[inline]
    pub fn bellman_solved_at(
        &self,
        v: &[T],
        c: Cell,
        rule: Option<&ActionTable>,
        r: impl Fn(usize, usize) -> T,
    ) -> T {
        if c.theta == self.grid.last_theta() {
            return T::zero();
        }
        let (s, hit) = self.hit(c);
        debug_assert!(s > 0);
        let weights = &self.weights[s];
        let row = &self.flow[c.w * self.span..];
        let later: T = (1..=s)
            .map(|j| {
                let w = row[j];
                let idx = self.grid.index(Cell { w, sigma: c.sigma + j, theta: c.theta + j, ..c });
                weights[j] * r(idx, w)
            })
            .sum();
        let (a, kappa) = self.gradual_parts(v, self.grid.index(c), c.w);
        let h = self.decay[s] * self.boundary_at(v, hit, rule).0;
        (weights[0] * a + later + h) / (T::one() - weights[0] * kappa)
    }

    /// One Jacobi application of 𝔅 to the whole table.
    pub fn apply_b_all(&self, v: &ValueTable<T>, rule: Option<&ActionTable>) -> ValueTable<T> {
        let r = self.gradual_all(&v.values);
        let values = (0..v.values.len())
            .into_par_iter()
            .map(|idx| self.bellman_at(&v.values, self.grid.cell(idx), rule, |i, _| r[i]))
            .collect();
        ValueTable { values, ..v.clone_header() }
    }

    fn cell(&self, v: &ValueTable<T>, x: &SystemState<T>) -> Result<Cell> {
        if v.grid != self.grid {
            return Err(Error::OffGrid("value table grid does not match the configuration".into()));
        }
        self.grid.cell_of(x, &self.cfg)
    }

    /// ℜV(x). Zero at Δ.
    pub fn apply_r(&self, v: &ValueTable<T>, x: &SystemState<T>) -> Result<T> {
        if x.terminal {
            return Ok(T::zero());
        }
        let c = self.cell(v, x)?;
        Ok(self.gradual_at(&v.values, self.grid.index(c), c.w))
    }

    /// 𝔗V(z) and the minimizing action.
    pub fn apply_t(&self, v: &ValueTable<T>, z: &SystemState<T>) -> Result<(T, Action)> {
        self.apply_t_with(v, z, None)
    }

    pub fn apply_t_with(
        &self,
        v: &ValueTable<T>,
        z: &SystemState<T>,
        rule: Option<&ActionTable>,
    ) -> Result<(T, Action)> {
        match classify_boundary(z, &self.cfg) {
            BoundaryKind::NotOnBoundary => Err(Error::NotOnBoundary(z.to_string())),
            BoundaryKind::End => Ok((T::zero(), Action::None)),
            _ => Ok(self.boundary_at(&v.values, self.cell(v, z)?, rule)),
        }
    }

    /// G(V, x); zero when x already sits on a boundary.
    pub fn quad_g(&self, v: &ValueTable<T>, x: &SystemState<T>) -> Result<T> {
        if x.terminal {
            return Ok(T::zero());
        }
        let c = self.cell(v, x)?;
        let (s, _) = self.hit(c);
        Ok(self.quad_at(c, s, |i, w| self.gradual_at(&v.values, i, w)))
    }

    /// H(V, x) = e^{−(K+ρ)t*} 𝔗V at the hit state.
    pub fn boundary_h(&self, v: &ValueTable<T>, x: &SystemState<T>) -> Result<T> {
        if x.terminal {
            return Ok(T::zero());
        }
        let c = self.cell(v, x)?;
        if c.theta == self.grid.last_theta() {
            return Ok(T::zero());
        }
        let (s, hit) = self.hit(c);
        Ok(self.decay[s] * self.boundary_at(&v.values, hit, None).0)
    }

    /// 𝔅V(x) = G + H.
    pub fn apply_b(&self, v: &ValueTable<T>, x: &SystemState<T>) -> Result<T> {
        if x.terminal {
            return Ok(T::zero());
        }
        let c = self.cell(v, x)?;
        Ok(self.bellman_at(&v.values, c, None, |i, w| self.gradual_at(&v.values, i, w)))
    }

    /// Crude upper bound on any value: worst running cost over the horizon
    /// plus the worst impulse at every possible event.
    pub fn value_bound(&self) -> T {
        let cfg = &self.cfg;
        let worst_running = self.cost.iter().copied().fold(T::zero(), T::max);
        let worst_c1 = imperfect_cost(cfg.failure_level, cfg.n_max, cfg);
        let worst_impulse = cfg.inspection_cost + worst_c1.max(cfg.surprise_cost).max(cfg.corrective_cost);
        let events = (cfg.horizon / cfg.maintenance_delay).ceil() + T::one();
        worst_running * cfg.horizon + events * worst_impulse
    }
}

impl<T: Real> ValueTable<T> {
    fn clone_header(&self) -> Self {
        Self {
            grid: self.grid,
            fingerprint: self.fingerprint,
            values: Vec::new(),
        }
    }
}
