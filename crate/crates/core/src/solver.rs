//! Value iteration `W_{k+1} = 𝔅W_k` from `W₀ ≡ 0`, policy extraction on the
//! inspection boundary.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{Action, SystemState};
use crate::operators::Operators;
use crate::policy::{ActionTable, Policy};
use crate::real::Real;
use crate::table::{Cell, ValueTable};

/// How one sweep visits the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Every state reads the previous table only.
    Jacobi,
    /// θ slices from T_end down, each reading slices already updated in
    /// this sweep. Same fixed point, far fewer sweeps.
    #[default]
    BackwardTheta,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub order: SweepOrder,
    /// Forced inspection actions (policy evaluation) instead of the argmin.
    pub rule: Option<ActionTable>,
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Extra states to report values for.
    pub probes: Vec<SystemState<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub sup_norm_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    pub value_at: Vec<(SystemState<f64>, f64)>,
}

impl SolveReport {
    /// Value reported at `x`, if it was probed.
    pub fn value(&self, x: &SystemState<f64>) -> Option<f64> {
        self.value_at.iter().find(|(p, _)| p == x).map(|&(_, v)| v)
    }
}

/// Solves with the default options.
pub fn iterate_to_fixpoint<T: Real>(cfg: &ModelConfig<T>) -> Result<(ValueTable<T>, SolveReport)> {
    solve(cfg, &SolveOptions::default())
}

pub fn solve<T: Real>(cfg: &ModelConfig<T>, opts: &SolveOptions) -> Result<(ValueTable<T>, SolveReport)> {
    let ops = Operators::new(cfg)?;
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| run(&ops, opts))
        }
        None => run(&ops, opts),
    }
}

fn run<T: Real>(ops: &Operators<T>, opts: &SolveOptions) -> Result<(ValueTable<T>, SolveReport)> {
    let cfg = ops.config();
    let start = Instant::now();
    let eps = cfg.epsilon;
    let bound = ops.value_bound() * T::lit(1.0 + 1e-9);
    let rule = opts.rule.as_ref();
    let mut w = ValueTable::zeros(cfg);
    let mut history = Vec::new();
    for k in 1..=cfg.max_iterations as usize {
        let next = match opts.order {
            SweepOrder::Jacobi => ops.apply_b_all(&w, rule),
            SweepOrder::BackwardTheta => backward_sweep(ops, &w, rule),
        };
        if let Some(bad) = next.values.iter().find(|v| !v.is_finite() || **v > bound || **v < T::zero()) {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("value {bad} outside [0, {bound}]"),
                history,
            });
        }
        let diff = next.sup_distance(&w);
        history.push(diff.as_f64());
        w = next;
        if diff < eps {
            let report = report(cfg, &w, k, history, start, &opts.probes);
            return Ok((w, report));
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations as usize,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn report<T: Real>(
    cfg: &ModelConfig<T>,
    w: &ValueTable<T>,
    iterations: usize,
    history: Vec<f64>,
    start: Instant,
    extra: &[SystemState<f64>],
) -> SolveReport {
    let mut probes = vec![SystemState::reference_start(), SystemState::origin()];
    probes.extend(extra.iter().copied());
    let value_at = probes
        .into_iter()
        .map(|p| {
            let x = SystemState::new(T::lit(p.w), p.n, T::lit(p.sigma), p.d, T::lit(p.theta));
            (p, w.value_at(&x, cfg).as_f64())
        })
        .collect();
    SolveReport {
        iterations,
        converged: true,
        sup_norm_history: history,
        wall_time: start.elapsed().as_secs_f64(),
        value_at,
    }
}

/// One Gauss–Seidel pass: θ slices from T_end down, and within a slice w
/// levels from M down. Interior states then only reference finished
/// states, apart from their own j = 0 quadrature term, which is solved for
/// exactly; boundary states of a slice read its σ = 0 states, finished just
/// before them.
fn backward_sweep<T: Real>(ops: &Operators<T>, old: &ValueTable<T>, rule: Option<&ActionTable>) -> ValueTable<T> {
    let g = *ops.grid();
    let nt = g.n_theta;
    let bases = g.len() / nt;
    let per_w = bases / g.n_w;
    let mut v = old.values.clone();
    let mut r = vec![T::zero(); v.len()];
    let last = g.last_theta();
    for base in 0..bases {
        v[base * nt + last] = T::zero();
    }
    ops.gradual_slice(&v, &mut r, last);
    for theta in (0..last).rev() {
        for w in (0..g.n_w).rev() {
            let level = w * per_w..(w + 1) * per_w;
            let vals: Vec<Option<T>> = level
                .clone()
                .into_par_iter()
                .map(|base| {
                    let c = g.cell(base * nt + theta);
                    (g.hit_steps(c) > 0).then(|| ops.bellman_solved_at(&v, c, rule, |i, _| r[i]))
                })
                .collect();
            for (base, val) in level.zip(vals) {
                if let Some(x) = val {
                    v[base * nt + theta] = x;
                }
            }
        }
        let edge: Vec<Option<T>> = (0..bases)
            .into_par_iter()
            .map(|base| {
                let c = g.cell(base * nt + theta);
                (g.hit_steps(c) == 0).then(|| ops.boundary_at(&v, c, rule).0)
            })
            .collect();
        write_slice(&mut v, nt, theta, edge);
        ops.gradual_slice(&v, &mut r, theta);
    }
    ValueTable {
        grid: old.grid,
        fingerprint: old.fingerprint,
        values: v,
    }
}

fn write_slice<T: Copy>(v: &mut [T], nt: usize, theta: usize, vals: Vec<Option<T>>) {
    for (base, val) in vals.into_iter().enumerate() {
        if let Some(x) = val {
            v[base * nt + theta] = x;
        }
    }
}

/// Argmin action at every inspection cell; ties go to the smaller action.
pub fn extract_policy<T: Real>(w: &ValueTable<T>, cfg: &ModelConfig<T>) -> Result<Policy<T>> {
    let ops = Operators::new(cfg)?;
    let g = *ops.grid();
    if w.grid != g {
        return Err(Error::OffGrid("value table grid does not match the configuration".into()));
    }
    let mut table = ActionTable::filled(&g, Action::None);
    for wi in 0..g.n_w {
        for n in 0..g.n_n {
            for theta in 0..g.last_theta() {
                let c = Cell { w: wi, n, sigma: g.isp_steps, d: 0, theta };
                table.set(wi, n, theta, ops.boundary_at(&w.values, c, None).1);
            }
        }
    }
    Ok(Policy::OptimalTable(table))
}

/// Cells `(n, w_idx)` on slice `theta` where the action drops as w grows.
pub fn monotonicity_violations(table: &ActionTable, theta: usize) -> Vec<(usize, usize)> {
    (0..table.n_n)
        .flat_map(|n| (1..table.n_w).map(move |w| (n, w)))
        .filter(|&(n, w)| table.get(w, n, theta) < table.get(w - 1, n, theta))
        .collect()
}

/// `‖𝔅W − W‖_∞` for a solved table.
pub fn residual<T: Real>(w: &ValueTable<T>, cfg: &ModelConfig<T>) -> Result<T> {
    let ops = Operators::new(cfg)?;
    Ok(ops.apply_b_all(w, None).sup_distance(w))
}
