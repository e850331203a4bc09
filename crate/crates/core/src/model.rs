//! State space, deterministic flow, shock intensity, active boundaries and
//! costs of the degradation-maintenance process.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::real::{snap_slack, Real};

/// Maintenance decision taken at an inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Action {
    None = 0,
    Imperfect = 1,
    Corrective = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::None, Action::Imperfect, Action::Corrective];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// `x = (w, n, σ, d, θ)`, or the absorbing state Δ when `terminal` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SystemState<T> {
    /// Degradation level.
    pub w: T,
    /// Imperfect repairs since the last replacement.
    pub n: u32,
    /// Time since the last observation.
    pub sigma: T,
    /// Planned action.
    pub d: Action,
    /// Elapsed time.
    pub theta: T,
    pub terminal: bool,
}

impl<T: Real> SystemState<T> {
    pub fn new(w: T, n: u32, sigma: T, d: Action, theta: T) -> Self {
        Self {
            w,
            n,
            sigma,
            d,
            theta,
            terminal: false,
        }
    }

    /// Fresh unit at time zero.
    pub fn origin() -> Self {
        Self::new(T::zero(), 0, T::zero(), Action::None, T::zero())
    }

    /// Start state `(0, 0, 1, 0, 1)` of the reference runs.
    pub fn reference_start() -> Self {
        Self::new(T::zero(), 0, T::one(), Action::None, T::one())
    }

    pub fn absorbing() -> Self {
        Self {
            terminal: true,
            ..Self::origin()
        }
    }
}

impl<T: Real> fmt::Display for SystemState<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terminal {
            return write!(f, "Δ");
        }
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.w, self.n, self.sigma, self.d, self.theta
        )
    }
}

/// Which active boundary a state lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Ξ_end: θ = T_end.
    End,
    /// Ξ₁: inspection due.
    Inspect,
    /// Ξ₂₁: planned imperfect repair on a working unit.
    MaintainImperfect,
    /// Ξ₂₂: planned replacement.
    MaintainCorrective,
    /// Ξ₂₃: planned imperfect repair finds the unit failed.
    MaintainFailedSurprise,
    NotOnBoundary,
}

/// Natural degradation curve with a closed-form inverse.
pub trait DegradationCurve<T> {
    /// Level reached after `t` from level `w0`, uncapped.
    fn advance(&self, w0: T, t: T) -> T;
    /// Time to go from `w_from` to `w_to` (`w_from <= w_to`).
    fn time_between(&self, w_from: T, w_to: T) -> T;
}

/// `w(t) = a e^{bt} − a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialCurve<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> DegradationCurve<T> for ExponentialCurve<T> {
    #[inline]
    fn advance(&self, w0: T, t: T) -> T {
        (w0 + self.a) * (self.b * t).exp() - self.a
    }

    #[inline]
    fn time_between(&self, w_from: T, w_to: T) -> T {
        ((w_to + self.a) / (w_from + self.a)).ln() / self.b
    }
}

impl<T: Real> ModelConfig<T> {
    pub fn curve(&self) -> ExponentialCurve<T> {
        ExponentialCurve {
            a: self.flow_a,
            b: self.flow_b,
        }
    }
}

/// Nearest w-grid index, round-half-up, clamped to `[0, M/Δw]`.
#[inline]
pub fn snap_index<T: Real>(w: T, cfg: &ModelConfig<T>) -> usize {
    let q = w / cfg.w_step + T::lit(0.5) + snap_slack::<T>();
    let cells = cfg.w_cells();
    if q <= T::zero() {
        return 0;
    }
    q.floor().to_usize().unwrap_or(cells).min(cells)
}

#[inline]
pub fn grid_w<T: Real>(index: usize, cfg: &ModelConfig<T>) -> T {
    T::from_usize_lossy(index) * cfg.w_step
}

/// Snaps `w` onto the w-grid.
#[inline]
pub fn snap_w<T: Real>(w: T, cfg: &ModelConfig<T>) -> T {
    grid_w(snap_index(w, cfg), cfg)
}

#[inline]
pub(crate) fn is_failed<T: Real>(w: T, cfg: &ModelConfig<T>) -> bool {
    w >= cfg.failure_level - cfg.w_step * T::lit(0.5)
}

/// Natural degradation after `t` from `w0`, snapped to the grid and capped at M.
pub fn flow_w<T: Real>(w0: T, t: T, cfg: &ModelConfig<T>) -> T {
    let m = cfg.failure_level;
    let w0 = w0.max(T::zero()).min(m);
    if t <= T::zero() {
        return snap_w(w0, cfg);
    }
    if is_failed(w0, cfg) {
        return m;
    }
    let raw = cfg.curve().advance(w0, t);
    snap_w(raw.min(m), cfg)
}

/// Time for the natural flow to carry `w_from` to `w_to`.
pub fn inverse_flow_time<T: Real>(w_from: T, w_to: T, cfg: &ModelConfig<T>) -> Result<T> {
    if w_to < w_from {
        return Err(Error::BackwardFlow {
            from: w_from.as_f64(),
            to: w_to.as_f64(),
        });
    }
    Ok(cfg.curve().time_between(w_from, w_to))
}

fn event_interval<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> T {
    match x.d {
        Action::None => cfg.inspection_interval,
        _ => cfg.maintenance_delay,
    }
}

/// Time until the flow from `x` reaches an active boundary.
pub fn hit_time<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> T {
    if x.terminal {
        return T::zero();
    }
    let to_event = event_interval(x, cfg) - x.sigma;
    let to_end = cfg.horizon - x.theta;
    to_event.min(to_end).max(T::zero())
}

/// Boundary membership with a time tolerance of Δt/2. Ξ_end wins ties.
pub fn classify_boundary<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> BoundaryKind {
    if x.terminal {
        return BoundaryKind::End;
    }
    let tol = cfg.time_step * T::lit(0.5);
    if x.theta >= cfg.horizon - tol {
        return BoundaryKind::End;
    }
    if x.sigma < event_interval(x, cfg) - tol {
        return BoundaryKind::NotOnBoundary;
    }
    match x.d {
        Action::None => BoundaryKind::Inspect,
        Action::Corrective => BoundaryKind::MaintainCorrective,
        Action::Imperfect if is_failed(x.w, cfg) => BoundaryKind::MaintainFailedSurprise,
        Action::Imperfect => BoundaryKind::MaintainImperfect,
    }
}

/// Shock rate from a degradation level; zero once failed.
#[inline]
pub fn shock_rate<T: Real>(w: T, cfg: &ModelConfig<T>) -> T {
    if is_failed(w, cfg) {
        T::zero()
    } else {
        (w + cfg.shock_rate_offset) / cfg.shock_rate_scale
    }
}

/// η(x).
pub fn intensity<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> T {
    if x.terminal {
        return T::zero();
    }
    shock_rate(x.w, cfg)
}

#[inline]
pub fn running_cost_at<T: Real>(w: T, cfg: &ModelConfig<T>) -> T {
    let penalty = if w >= cfg.penalty_threshold - cfg.w_step * snap_slack::<T>() {
        cfg.penalty_slope * (w - cfg.penalty_threshold) + cfg.penalty_offset
    } else {
        T::zero()
    };
    cfg.operating_cost + penalty
}

/// C^g(x), cost per day.
pub fn running_cost<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> T {
    if x.terminal {
        return T::zero();
    }
    running_cost_at(x.w, cfg)
}

/// `c1 + ⌊w⌋ + n` at the pre-repair state.
#[inline]
pub fn imperfect_cost<T: Real>(w: T, n: u32, cfg: &ModelConfig<T>) -> T {
    let floor_w = (w + cfg.w_step * snap_slack::<T>()).floor();
    cfg.imperfect_fixed_cost + floor_w + T::from_u32(n).expect("u32 representable")
}

/// C^i at a boundary state.
pub fn impulse_cost<T: Real>(
    x: &SystemState<T>,
    kind: BoundaryKind,
    cfg: &ModelConfig<T>,
) -> Result<T> {
    Ok(match kind {
        BoundaryKind::End => T::zero(),
        BoundaryKind::Inspect => cfg.inspection_cost,
        BoundaryKind::MaintainImperfect => imperfect_cost(x.w, x.n, cfg),
        BoundaryKind::MaintainCorrective => cfg.corrective_cost,
        BoundaryKind::MaintainFailedSurprise => cfg.surprise_cost,
        BoundaryKind::NotOnBoundary => return Err(Error::NotOnBoundary(x.to_string())),
    })
}

/// A(x): the three actions on Ξ₁, only "no maintenance" elsewhere.
pub fn admissible_actions<T: Real>(x: &SystemState<T>, cfg: &ModelConfig<T>) -> &'static [Action] {
    match classify_boundary(x, cfg) {
        BoundaryKind::Inspect => &Action::ALL,
        _ => &Action::ALL[..1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ModelConfig<f64> {
        ModelConfig::default()
    }

    fn st(w: f64, n: u32, sigma: f64, d: Action, theta: f64) -> SystemState<f64> {
        SystemState::new(w, n, sigma, d, theta)
    }

    #[test]
    fn flow_reaches_failure_in_200_days() {
        assert_eq!(flow_w(0.0, 200.0, &cfg()), 5.0);
        assert_eq!(flow_w(5.0, 30.0, &cfg()), 5.0);
    }

    #[test]
    fn flow_zero_time_is_identity() {
        for i in 0..=50 {
            let w = grid_w(i, &cfg());
            assert_eq!(flow_w(w, 0.0, &cfg()), w);
        }
    }

    #[test]
    fn flow_after_100_days() {
        // direct evaluation of the corrosion curve
        let raw = 0.1 * ((51f64.ln() / 200.0) * 100.0).exp() - 0.1;
        assert!((raw - 0.6141).abs() < 1e-4);
        assert!((flow_w(0.0, 100.0, &cfg()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn inverse_flow_examples() {
        let c = cfg();
        assert!((inverse_flow_time(0.0, 5.0, &c).unwrap() - 200.0).abs() < 1e-9);
        assert_eq!(inverse_flow_time(1.3, 1.3, &c).unwrap(), 0.0);
        let expected = (200.0 / 51f64.ln()) * (8f64.ln() - 7f64.ln());
        let got = inverse_flow_time(0.6, 0.7, &c).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 6.79).abs() < 0.005);
        assert!(matches!(
            inverse_flow_time(0.7, 0.6, &c),
            Err(Error::BackwardFlow { .. })
        ));
    }

    #[test]
    fn hit_time_examples() {
        let c = cfg();
        assert_eq!(hit_time(&st(1.0, 0, 0.0, Action::None, 0.0), &c), 20.0);
        assert_eq!(hit_time(&st(1.0, 0, 3.0, Action::Imperfect, 100.0), &c), 2.0);
        assert_eq!(hit_time(&st(1.0, 0, 10.0, Action::None, 355.0), &c), 10.0);
    }

    #[test]
    fn classify_examples() {
        let c = cfg();
        assert_eq!(
            classify_boundary(&st(2.0, 1, 20.0, Action::None, 140.0), &c),
            BoundaryKind::Inspect
        );
        assert_eq!(
            classify_boundary(&st(5.0, 2, 5.0, Action::Imperfect, 210.0), &c),
            BoundaryKind::MaintainFailedSurprise
        );
        assert_eq!(
            classify_boundary(&st(1.0, 0, 7.0, Action::None, 365.0), &c),
            BoundaryKind::End
        );
        assert_eq!(
            classify_boundary(&st(4.9, 0, 5.0, Action::Imperfect, 210.0), &c),
            BoundaryKind::MaintainImperfect
        );
        assert_eq!(
            classify_boundary(&st(4.9, 0, 5.0, Action::Corrective, 210.0), &c),
            BoundaryKind::MaintainCorrective
        );
        assert_eq!(
            classify_boundary(&st(4.9, 0, 4.0, Action::Corrective, 210.0), &c),
            BoundaryKind::NotOnBoundary
        );
        assert_eq!(
            classify_boundary(&SystemState::absorbing(), &c),
            BoundaryKind::End
        );
    }

    #[test]
    fn intensity_examples() {
        let c = cfg();
        assert!((intensity(&st(0.0, 0, 0.0, Action::None, 0.0), &c) - 1.0 / 60.0).abs() < 1e-15);
        assert_eq!(intensity(&st(5.0, 0, 0.0, Action::None, 0.0), &c), 0.0);
        assert!((intensity(&st(2.0, 0, 0.0, Action::None, 0.0), &c) - 0.05).abs() < 1e-15);
        assert_eq!(intensity(&SystemState::absorbing(), &c), 0.0);
    }

    #[test]
    fn running_cost_examples() {
        let c = cfg();
        assert_eq!(running_cost(&st(3.0, 0, 0.0, Action::None, 0.0), &c), 0.0);
        assert!((running_cost(&st(4.5, 0, 0.0, Action::None, 0.0), &c) - 1.5).abs() < 1e-12);
        assert!((running_cost(&st(5.0, 0, 0.0, Action::None, 0.0), &c) - 2.0).abs() < 1e-12);
        // the indicator is inclusive at ζ
        assert!((running_cost_at(4.0, &c) - 1.0).abs() < 1e-12);
        assert!((running_cost_at(grid_w(40, &c), &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impulse_cost_examples() {
        let c = cfg();
        let x = st(2.3, 1, 5.0, Action::Imperfect, 100.0);
        assert_eq!(impulse_cost(&x, BoundaryKind::MaintainImperfect, &c).unwrap(), 3.0);
        let x = st(3.3, 2, 5.0, Action::Corrective, 100.0);
        assert_eq!(impulse_cost(&x, BoundaryKind::MaintainCorrective, &c).unwrap(), 10.0);
        let x = st(5.0, 2, 5.0, Action::Imperfect, 100.0);
        assert_eq!(impulse_cost(&x, BoundaryKind::MaintainFailedSurprise, &c).unwrap(), 20.0);
        assert_eq!(impulse_cost(&x, BoundaryKind::Inspect, &c).unwrap(), 1.0);
        assert_eq!(impulse_cost(&x, BoundaryKind::End, &c).unwrap(), 0.0);
        assert!(impulse_cost(&x, BoundaryKind::NotOnBoundary, &c).is_err());
        // grid values that land a hair below an integer still floor correctly
        assert_eq!(imperfect_cost(grid_w(30, &c), 0, &c), 3.0);
    }

    #[test]
    fn admissible_action_sets() {
        let c = cfg();
        assert_eq!(
            admissible_actions(&st(2.0, 0, 20.0, Action::None, 40.0), &c),
            &Action::ALL
        );
        assert_eq!(
            admissible_actions(&st(2.0, 0, 5.0, Action::Corrective, 40.0), &c),
            &[Action::None]
        );
        assert_eq!(
            admissible_actions(&st(2.0, 0, 3.0, Action::None, 40.0), &c),
            &[Action::None]
        );
    }

    proptest! {
        #[test]
        fn flow_monotone(i in 0usize..=50, j in 0usize..=50, t1 in 0.0f64..250.0, dt in 0.0f64..100.0) {
            let c = cfg();
            let (lo, hi) = (i.min(j), i.max(j));
            let (wl, wh) = (grid_w(lo, &c), grid_w(hi, &c));
            prop_assert!(flow_w(wl, t1, &c) <= flow_w(wl, t1 + dt, &c));
            prop_assert!(flow_w(wl, t1, &c) <= flow_w(wh, t1, &c));
        }

        #[test]
        fn flow_semigroup_within_one_cell(i in 0usize..=50, s in 0.0f64..250.0, t in 0.0f64..20.0) {
            // a half-cell snap error grows by e^{bt}, which stays below 2 for t <= 20
            let c = cfg();
            let w = grid_w(i, &c);
            let two_step = flow_w(flow_w(w, s, &c), t, &c);
            let one_step = flow_w(w, s + t, &c);
            prop_assert!((two_step - one_step).abs() <= c.w_step + 1e-9);
        }

        #[test]
        fn flow_stays_on_grid(i in 0usize..=50, t in 0.0f64..400.0) {
            let c = cfg();
            let w = flow_w(grid_w(i, &c), t, &c);
            prop_assert!((w / c.w_step - (w / c.w_step).round()).abs() < 1e-9);
            prop_assert!(w <= c.failure_level);
        }

        #[test]
        fn inverse_flow_recovers_time(i in 0usize..50, t in 0.0f64..150.0) {
            let c = cfg();
            let w = grid_w(i, &c);
            let w_t = flow_w(w, t, &c);
            prop_assume!(w_t < c.failure_level);
            let back = inverse_flow_time(w, w_t, &c).unwrap();
            // the snapped end point sits within half a cell of the true curve,
            // so the recovered time is within the sojourn of one cell
            let cell = inverse_flow_time(w_t - c.w_step / 2.0, w_t + c.w_step / 2.0, &c).unwrap();
            prop_assert!((back - t).abs() <= cell + 1e-9);
        }

        #[test]
        fn hit_time_lands_on_boundary(i in 0usize..=50, n in 0u32..=14, s in 0usize..=20, d in 0usize..3, th in 0usize..=365) {
            let c = cfg();
            let d = Action::from_index(d).unwrap();
            let sigma = if d == Action::None { s as f64 } else { (s % 6) as f64 };
            let x = st(grid_w(i, &c), n, sigma, d, th as f64);
            let t = hit_time(&x, &c);
            prop_assert!((0.0..=20.0).contains(&t));
            let y = SystemState { w: flow_w(x.w, t, &c), sigma: x.sigma + t, theta: x.theta + t, ..x };
            prop_assert_ne!(classify_boundary(&y, &c), BoundaryKind::NotOnBoundary);
        }

        #[test]
        fn repair_costs_ordered(i in 0usize..=50, n in 0u32..=14) {
            let c = cfg();
            let w = grid_w(i, &c);
            // C1 grows with w and n; C2 < C3 always
            prop_assert!(imperfect_cost(w, n, &c) <= imperfect_cost(w + 1.0, n, &c));
            prop_assert!(imperfect_cost(w, n, &c) < imperfect_cost(w, n + 1, &c));
            prop_assert!(c.corrective_cost < c.surprise_cost);
        }
    }
}
