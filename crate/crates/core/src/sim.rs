//! Seeded Monte Carlo simulation of trajectories under a policy.
//!
//! Between events w follows the flow anchored at the last post-event grid
//! value, so η and C^g are piecewise constant in time with breakpoints where
//! the snapped flow changes cell. Shock times invert the piecewise-linear
//! cumulative hazard exactly and running cost is integrated in closed form.
//! [`SimOptions::uniformized`] switches to the solver's uniformized chain.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, InverseGaussian};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::dists::Kernels;
use crate::error::{Error, Result};
use crate::model::{
    classify_boundary, flow_w, grid_w, hit_time, imperfect_cost, running_cost_at, shock_rate,
    snap_index, snap_w, Action, BoundaryKind, DegradationCurve, SystemState,
};
use crate::policy::Policy;
use crate::real::{CompensatedSum, Real};

/// Hard cap on events per path.
pub const MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Shock,
    Inspect,
    MaintainImperfect,
    MaintainCorrective,
    MaintainSurprise,
    End,
    /// Fictitious self-jump of the uniformized chain (see [`SimOptions`]).
    Reanchor,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Shock,
        EventKind::Inspect,
        EventKind::MaintainImperfect,
        EventKind::MaintainCorrective,
        EventKind::MaintainSurprise,
        EventKind::End,
        EventKind::Reanchor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Shock => "shock",
            Self::Inspect => "inspect",
            Self::MaintainImperfect => "maintain-imperfect",
            Self::MaintainCorrective => "maintain-corrective",
            Self::MaintainSurprise => "maintain-surprise",
            Self::End => "end",
            Self::Reanchor => "reanchor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    /// θ at the event.
    pub time: T,
    pub kind: EventKind,
    pub pre: SystemState<T>,
    pub post: SystemState<T>,
    /// Undiscounted impulse cost.
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<T> {
    pub start: SystemState<T>,
    pub events: Vec<Event<T>>,
    pub discounted_total: T,
    /// Days spent at w = M.
    pub time_in_failure: T,
}

impl<T: Real> PathRecord<T> {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Discounted total rebuilt from the event log alone.
    pub fn recompute_total(&self, cfg: &ModelConfig<T>) -> T {
        let t0 = self.start.theta;
        let mut sum = CompensatedSum::new();
        let mut from = self.start;
        for e in &self.events {
            for p in flow_pieces(from.w, e.time - from.theta, cfg) {
                sum.add(running_cost_at(grid_w(p.w, cfg), cfg) * discount_integral(from.theta - t0 + p.start, from.theta - t0 + p.end, cfg.discount));
            }
            sum.add(e.cost * (-cfg.discount * (e.time - t0)).exp());
            from = e.post;
        }
        sum.value()
    }

    /// One row per event: time, event, w_pre, w_post, n, d, cost,
    /// discounted_cumulative.
    pub fn to_csv(&self, cfg: &ModelConfig<T>) -> String {
        let mut out = String::from("time,event,w_pre,w_post,n,d,cost,discounted_cumulative\n");
        let t0 = self.start.theta;
        let mut sum = CompensatedSum::new();
        let mut from = self.start;
        for e in &self.events {
            for p in flow_pieces(from.w, e.time - from.theta, cfg) {
                sum.add(running_cost_at(grid_w(p.w, cfg), cfg) * discount_integral(from.theta - t0 + p.start, from.theta - t0 + p.end, cfg.discount));
            }
            sum.add(e.cost * (-cfg.discount * (e.time - t0)).exp());
            from = e.post;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.time,
                e.kind.as_str(),
                e.pre.w,
                e.post.w,
                e.post.n,
                e.post.d,
                e.cost,
                sum.value()
            );
        }
        out
    }
}

/// `∫_u^v e^{−ρs} ds`.
fn discount_integral<T: Real>(u: T, v: T, rho: T) -> T {
    if rho == T::zero() {
        return v - u;
    }
    (-rho * u).exp() * -(-rho * (v - u)).exp_m1() / rho
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece<T> {
    start: T,
    end: T,
    w: usize,
}

/// Intervals of `[0, len]` on which the flow from `w0` stays in one w cell.
fn flow_pieces<T: Real>(w0: T, len: T, cfg: &ModelConfig<T>) -> Vec<Piece<T>> {
    let mut out = Vec::new();
    if len <= T::zero() {
        return out;
    }
    let top = cfg.w_cells();
    let mut w = snap_index(w0, cfg);
    let mut start = T::zero();
    let curve = cfg.curve();
    let anchor = w0.max(T::zero()).min(cfg.failure_level);
    while w < top {
        // the snapped flow enters cell w + 1 at its lower half-step edge
        let edge = (T::from_usize_lossy(w) + T::lit(0.5)) * cfg.w_step;
        let next = curve.time_between(anchor, edge).max(start);
        if next >= len {
            break;
        }
        out.push(Piece { start, end: next, w });
        start = next;
        w = snap_index(flow_w(anchor, next + cfg.w_step * T::lit(1e-9), cfg), cfg).max(w + 1);
    }
    out.push(Piece { start, end: len, w });
    out.retain(|p| p.end > p.start);
    out
}

/// Shock time for a given unit-exponential draw `e`, or `None` if the
/// cumulative hazard stays below `e` up to `horizon`.
pub fn shock_time_for<T: Real>(x: &SystemState<T>, horizon: T, e: T, cfg: &ModelConfig<T>) -> Option<T> {
    let mut acc = T::zero();
    for p in flow_pieces(x.w, horizon, cfg) {
        let eta = shock_rate(grid_w(p.w, cfg), cfg);
        let mass = eta * (p.end - p.start);
        if acc + mass >= e && eta > T::zero() {
            return Some(p.start + (e - acc) / eta);
        }
        acc = acc + mass;
    }
    None
}

pub fn sample_shock_time<T: Real, R: Rng + ?Sized>(
    x: &SystemState<T>,
    horizon: T,
    cfg: &ModelConfig<T>,
    rng: &mut R,
) -> Option<T> {
    let e: f64 = Exp1.sample(rng);
    shock_time_for(x, horizon, T::lit(e), cfg)
}

fn pick<T: Real, R: Rng + ?Sized>(masses: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (i, &p) in masses.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    masses.iter().rposition(|&p| p > T::zero()).unwrap_or(0)
}

/// Damage increment at `x⁻` from the discretized law. `None` once failed.
pub fn sample_damage<T: Real, R: Rng + ?Sized>(
    x: &SystemState<T>,
    kernels: &Kernels<T>,
    cfg: &ModelConfig<T>,
    rng: &mut R,
) -> Option<T> {
    let law = kernels.damage(snap_index(x.w, cfg))?;
    Some(law.support[pick(&law.masses, rng)])
}

pub fn sample_improvement<T: Real, R: Rng + ?Sized>(n: u32, kernels: &Kernels<T>, rng: &mut R) -> T {
    let law = kernels.improvement(n);
    law.support[pick(&law.masses, rng)]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Draw damage and improvement from the continuous IG and Beta laws
    /// instead of the solver's discretized ones.
    pub continuous_laws: bool,
    /// Follow the solver's uniformized chain: events arrive at the constant
    /// rate K, a fraction η/K of them are shocks and the rest only re-snap
    /// the flow to the grid. The solver's table lookup at flowed states does
    /// exactly this, so with this flag the simulator and the solver describe
    /// the same chain; without it w is re-snapped only at real events.
    pub uniformized: bool,
}

pub struct Simulator<'a, T> {
    cfg: &'a ModelConfig<T>,
    kernels: Kernels<T>,
    opts: SimOptions,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(cfg: &'a ModelConfig<T>, opts: SimOptions) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, kernels: Kernels::new(cfg), opts })
    }

    pub fn kernels(&self) -> &Kernels<T> {
        &self.kernels
    }

    fn damage<R: Rng + ?Sized>(&self, x: &SystemState<T>, rng: &mut R) -> T {
        if !self.opts.continuous_laws {
            return sample_damage(x, &self.kernels, self.cfg, rng).unwrap_or(T::zero());
        }
        let eta = shock_rate(x.w, self.cfg).as_f64();
        let h = 1.0 / eta;
        let (mean, shape) = (self.cfg.ig_mu.as_f64() * h, self.cfg.ig_lambda.as_f64() * h * h);
        let d = InverseGaussian::new(mean, shape).expect("positive IG parameters");
        T::lit(d.sample(rng))
    }

    fn improvement<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> T {
        if !self.opts.continuous_laws {
            return sample_improvement(n, &self.kernels, rng);
        }
        let a = crate::dists::alpha_of(n, self.cfg).as_f64();
        let d = Beta::new(a, self.cfg.beta.as_f64()).expect("positive Beta parameters");
        T::lit(d.sample(rng))
    }

    /// One trajectory from `x0` until θ = T_end.
    pub fn path<R: Rng + ?Sized>(&self, policy: &Policy<T>, x0: &SystemState<T>, rng: &mut R) -> Result<PathRecord<T>> {
        let cfg = self.cfg;
        let m = cfg.failure_level;
        let t0 = x0.theta;
        let mut x = SystemState { w: snap_w(x0.w, cfg), ..*x0 };
        let start = x;
        let mut events = Vec::new();
        let mut total = CompensatedSum::new();
        let mut failed_days = CompensatedSum::new();
        loop {
            if events.len() >= MAX_EVENTS {
                return Err(Error::Domain(format!("path exceeded {MAX_EVENTS} events")));
            }
            let t_star = hit_time(&x, cfg);
            let shock = if self.opts.uniformized {
                let e: f64 = Exp1.sample(rng);
                Some(T::lit(e) / cfg.uniformization).filter(|&s| s < t_star)
            } else {
                sample_shock_time(&x, t_star, cfg, rng).filter(|&s| s < t_star)
            };
            let span = shock.unwrap_or(t_star);
            for p in flow_pieces(x.w, span, cfg) {
                let (u, v) = (x.theta - t0 + p.start, x.theta - t0 + p.end);
                total.add(running_cost_at(grid_w(p.w, cfg), cfg) * discount_integral(u, v, cfg.discount));
                if p.w == cfg.w_cells() {
                    failed_days.add(p.end - p.start);
                }
            }
            let w_at = snap_w(flow_w(x.w, span, cfg), cfg);
            let pre = SystemState {
                w: w_at,
                sigma: x.sigma + span,
                theta: x.theta + span,
                ..x
            };
            let (kind, post, cost) = match shock {
                Some(_)
                    if self.opts.uniformized
                        && T::lit(rng.random::<f64>()) * cfg.uniformization >= shock_rate(pre.w, cfg) =>
                {
                    (EventKind::Reanchor, pre, T::zero())
                }
                Some(_) => {
                    let jump = self.damage(&pre, rng);
                    let post = SystemState { w: snap_w((pre.w + jump).min(m), cfg), ..pre };
                    (EventKind::Shock, post, T::zero())
                }
                None => self.boundary_event(policy, &pre, rng),
            };
            total.add(cost * (-cfg.discount * (pre.theta - t0)).exp());
            events.push(Event { time: pre.theta, kind, pre, post, cost });
            if kind == EventKind::End {
                break;
            }
            x = post;
        }
        Ok(PathRecord {
            start,
            events,
            discounted_total: total.value(),
            time_in_failure: failed_days.value(),
        })
    }

    fn boundary_event<R: Rng + ?Sized>(
        &self,
        policy: &Policy<T>,
        z: &SystemState<T>,
        rng: &mut R,
    ) -> (EventKind, SystemState<T>, T) {
        let cfg = self.cfg;
        let observed = |w: T, n: u32, d: Action| SystemState { w, n, sigma: T::zero(), d, ..*z };
        match classify_boundary(z, cfg) {
            BoundaryKind::Inspect => {
                let a = policy.decide(z, cfg);
                (EventKind::Inspect, observed(z.w, z.n, a), cfg.inspection_cost)
            }
            BoundaryKind::MaintainImperfect => {
                let factor = self.improvement(z.n, rng);
                let w = snap_w(factor * z.w, cfg);
                let n = (z.n + 1).min(cfg.n_max);
                let cost = imperfect_cost(z.w, z.n, cfg);
                (EventKind::MaintainImperfect, observed(w, n, Action::None), cost)
            }
            BoundaryKind::MaintainCorrective => (
                EventKind::MaintainCorrective,
                observed(T::zero(), 0, Action::None),
                cfg.corrective_cost,
            ),
            BoundaryKind::MaintainFailedSurprise => (
                EventKind::MaintainSurprise,
                observed(T::zero(), 0, Action::None),
                cfg.surprise_cost,
            ),
            BoundaryKind::End | BoundaryKind::NotOnBoundary => {
                (EventKind::End, SystemState { terminal: true, ..*z }, T::zero())
            }
        }
    }
}

/// The RNG for path `index` under master `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn simulate_path<T: Real, R: Rng + ?Sized>(
    policy: &Policy<T>,
    x0: &SystemState<T>,
    cfg: &ModelConfig<T>,
    rng: &mut R,
) -> Result<PathRecord<T>> {
    Simulator::new(cfg, SimOptions::default())?.path(policy, x0, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCStats {
    pub n_paths: usize,
    pub mean: f64,
    pub running_mean: Vec<f64>,
    pub std_error: f64,
    pub seed: u64,
}

impl MCStats {
    fn from_totals(totals: &[f64], seed: u64) -> Self {
        let mut sum = CompensatedSum::new();
        let running_mean: Vec<f64> = totals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                sum.add(v);
                sum.value() / (i + 1) as f64
            })
            .collect();
        let n = totals.len();
        let mean = running_mean.last().copied().unwrap_or(f64::NAN);
        let mut sq = CompensatedSum::new();
        for &v in totals {
            sq.add((v - mean) * (v - mean));
        }
        let var = if n > 1 { sq.value() / (n - 1) as f64 } else { 0.0 };
        Self {
            n_paths: n,
            mean,
            running_mean,
            std_error: (var / n as f64).sqrt(),
            seed,
        }
    }
}

/// Discounted totals of paths `0..n_paths`, in path order.
pub fn path_totals<T: Real>(
    sim: &Simulator<'_, T>,
    policy: &Policy<T>,
    x0: &SystemState<T>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            sim.path(policy, x0, &mut rng).map(|p| p.discounted_total.as_f64())
        })
        .collect()
}

pub fn monte_carlo<T: Real>(
    policy: &Policy<T>,
    x0: &SystemState<T>,
    n_paths: usize,
    seed: u64,
    cfg: &ModelConfig<T>,
) -> Result<MCStats> {
    monte_carlo_with(policy, x0, n_paths, seed, cfg, SimOptions::default())
}

pub fn monte_carlo_with<T: Real>(
    policy: &Policy<T>,
    x0: &SystemState<T>,
    n_paths: usize,
    seed: u64,
    cfg: &ModelConfig<T>,
    opts: SimOptions,
) -> Result<MCStats> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let sim = Simulator::new(cfg, opts)?;
    Ok(MCStats::from_totals(&path_totals(&sim, policy, x0, n_paths, seed)?, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub xi1: f64,
    pub xi2: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSurface {
    pub points: Vec<ThresholdPoint>,
    pub argmin: ThresholdPoint,
}

/// Every `(ξ₁, ξ₂)` on a `step` lattice with `0 ≤ ξ₁ < M` and `ξ₁ ≤ ξ₂ ≤ M`.
/// All pairs share the seed, so they are compared on common random numbers.
pub fn threshold_sweep<T: Real>(
    step: T,
    x0: &SystemState<T>,
    n_paths: usize,
    seed: u64,
    cfg: &ModelConfig<T>,
) -> Result<ThresholdSurface> {
    let cells = (cfg.failure_level / step).round();
    if ((cfg.failure_level / step) - cells).abs() > T::lit(1e-9) || step <= T::zero() {
        return Err(Error::InvalidConfig(format!("step {step} must divide M")));
    }
    let k = cells.to_usize().unwrap_or(0);
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..=k).map(move |j| (i, j))).collect();
    let sim = Simulator::new(cfg, SimOptions::default())?;
    let points = pairs
        .into_iter()
        .map(|(i, j)| {
            let at = |i: usize| cfg.failure_level * T::from_usize_lossy(i) / T::from_usize_lossy(k);
            let (xi1, xi2) = (at(i), at(j));
            let policy = Policy::threshold(xi1, xi2, cfg)?;
            let stats = MCStats::from_totals(&path_totals(&sim, &policy, x0, n_paths, seed)?, seed);
            Ok(ThresholdPoint {
                xi1: xi1.as_f64(),
                xi2: xi2.as_f64(),
                mean: stats.mean,
                std_error: stats.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin = points
        .iter()
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .cloned()
        .ok_or_else(|| Error::Domain("empty threshold lattice".into()))?;
    Ok(ThresholdSurface { points, argmin })
}
