//! Model constants, their validation, JSON loading and fingerprinting.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::real::Real;

/// Which form of the gradual operator ℜ the solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradualForm {
    /// `C^g + η Σ V f + (K − η) V`: fictitious jumps at rate `K − η` return to
    /// the current state, so the kernel weight `e^{-(K+ρ)t}` is exact.
    #[default]
    Uniformized,
    /// `C^g + η Σ V f` only, with no `(K − η) V` term.
    Literal,
}

/// All constants of the degradation-maintenance model.
///
/// Times are in days, degradation in mm. Defaults reproduce the coating case
/// study: 5 mm coating, exponential corrosion reaching failure after 200 days,
/// inspections every 20 days, 5-day maintenance delay, one-year horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields, default)]
pub struct ModelConfig<T> {
    /// Failure level M.
    pub failure_level: T,
    /// Degradation grid step Δw.
    pub w_step: T,
    /// Horizon T_end.
    pub horizon: T,
    /// Inspection interval T_isp.
    pub inspection_interval: T,
    /// Maintenance delay T_soj.
    pub maintenance_delay: T,
    /// Discount rate ρ (1/day).
    pub discount: T,
    /// Uniformization constant K (1/day), at least the largest shock rate.
    pub uniformization: T,
    /// Natural degradation curve `w(t) = a e^{bt} − a`.
    pub flow_a: T,
    pub flow_b: T,
    /// Shock rate `η(w) = (w + offset) / scale` below failure.
    pub shock_rate_offset: T,
    pub shock_rate_scale: T,
    /// Inverse Gaussian increment: mean `μh`, shape `λh²` with `h = 1/η`.
    pub ig_mu: T,
    pub ig_lambda: T,
    /// Improvement factor ~ Beta(α0 + α1·n, β).
    pub alpha0: T,
    pub alpha1: T,
    pub beta: T,
    /// Extra running cost `slope·(w − ζ) + offset` once `w ≥ ζ`.
    pub penalty_threshold: T,
    pub penalty_slope: T,
    pub penalty_offset: T,
    /// Fixed running cost C_g per day.
    pub operating_cost: T,
    /// Fixed part c1 of the imperfect maintenance cost `c1 + ⌊w⌋ + n`.
    pub imperfect_fixed_cost: T,
    /// C2.
    pub corrective_cost: T,
    /// C3, paid when a planned imperfect repair finds the unit failed.
    pub surprise_cost: T,
    /// C_isp.
    pub inspection_cost: T,
    /// Quadrature and σ/θ grid step Δt.
    pub time_step: T,
    /// Cap on the imperfect maintenance counter.
    pub n_max: u32,
    /// Damage support spacing in w-grid cells.
    pub damage_step_cells: u32,
    /// Number of equal bins of [0, 1] for the improvement factor.
    pub improvement_bins: u32,
    /// Sup-norm stopping limit.
    pub epsilon: T,
    pub max_iterations: u32,
    pub gradual_form: GradualForm,
}

impl<T: Real> Default for ModelConfig<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            failure_level: l(5.0),
            w_step: l(0.1),
            horizon: l(365.0),
            inspection_interval: l(20.0),
            maintenance_delay: l(5.0),
            discount: l(0.001),
            uniformization: l(0.1),
            flow_a: l(0.1),
            flow_b: l(51f64.ln() / 200.0),
            shock_rate_offset: l(1.0),
            shock_rate_scale: l(60.0),
            ig_mu: l(1.0 / 60.0),
            ig_lambda: l(1.0 / 3600.0),
            alpha0: l(1.0),
            alpha1: l(0.0),
            beta: l(1.0),
            penalty_threshold: l(4.0),
            penalty_slope: l(1.0),
            penalty_offset: l(1.0),
            operating_cost: l(0.0),
            imperfect_fixed_cost: l(0.0),
            corrective_cost: l(10.0),
            surprise_cost: l(20.0),
            inspection_cost: l(1.0),
            time_step: l(1.0),
            n_max: 14,
            damage_step_cells: 1,
            improvement_bins: 10,
            epsilon: l(0.01),
            max_iterations: 200,
            gradual_form: GradualForm::Uniformized,
        }
    }
}

/// Returns `Some(k)` when `x / step` is within rounding of the integer `k`.
fn whole_steps<T: Real>(x: T, step: T) -> Option<usize> {
    let q = x / step;
    let k = q.round();
    if k < T::zero() || (q - k).abs() > T::lit(1e-6) {
        return None;
    }
    k.to_usize()
}

impl<T: Real> ModelConfig<T> {
    /// Coarse grid: Δt = 5 days, the gcd of the default T_isp and T_soj.
    pub fn coarse(mut self) -> Self {
        self.time_step = T::lit(5.0);
        self
    }

    /// Small instance used by the solver/simulator consistency checks.
    pub fn tiny() -> Self {
        let l = T::lit;
        Self {
            horizon: l(40.0),
            inspection_interval: l(10.0),
            maintenance_delay: l(5.0),
            w_step: l(0.5),
            time_step: l(0.5),
            discount: l(0.01),
            n_max: 3,
            improvement_bins: 4,
            ..Self::default()
        }
    }

    /// Upper bound of the shock rate over `[0, M]`.
    pub fn max_shock_rate(&self) -> T {
        (self.failure_level + self.shock_rate_offset) / self.shock_rate_scale
    }

    /// Largest number of imperfect repairs that fit in the horizon: one per
    /// inspection-plus-delay cycle.
    pub fn derived_n_max(&self) -> u32 {
        let cycle = self.inspection_interval + self.maintenance_delay;
        (self.horizon / cycle).floor().to_u32().unwrap_or(0)
    }

    pub fn w_cells(&self) -> usize {
        whole_steps(self.failure_level, self.w_step).unwrap_or(0)
    }

    pub fn steps(&self, t: T) -> usize {
        whole_steps(t, self.time_step).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let z = T::zero();
        let positive = [
            ("failure_level", self.failure_level),
            ("w_step", self.w_step),
            ("horizon", self.horizon),
            ("inspection_interval", self.inspection_interval),
            ("maintenance_delay", self.maintenance_delay),
            ("discount", self.discount),
            ("uniformization", self.uniformization),
            ("flow_a", self.flow_a),
            ("flow_b", self.flow_b),
            ("shock_rate_scale", self.shock_rate_scale),
            ("ig_mu", self.ig_mu),
            ("ig_lambda", self.ig_lambda),
            ("alpha0", self.alpha0),
            ("beta", self.beta),
            ("time_step", self.time_step),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > z) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        let nonneg = [
            ("shock_rate_offset", self.shock_rate_offset),
            ("alpha1", self.alpha1),
            ("penalty_threshold", self.penalty_threshold),
            ("penalty_slope", self.penalty_slope),
            ("penalty_offset", self.penalty_offset),
            ("operating_cost", self.operating_cost),
            ("imperfect_fixed_cost", self.imperfect_fixed_cost),
            ("corrective_cost", self.corrective_cost),
            ("surprise_cost", self.surprise_cost),
            ("inspection_cost", self.inspection_cost),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= z) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if whole_steps(self.failure_level, self.w_step).is_none() {
            return bad("failure_level must be a whole number of w_step".into());
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("inspection_interval", self.inspection_interval),
            ("maintenance_delay", self.maintenance_delay),
        ] {
            if whole_steps(v, self.time_step).is_none() {
                return bad(format!(
                    "{name} = {v} is not a whole number of time_step = {}",
                    self.time_step
                ));
            }
        }
        if self.maintenance_delay >= self.inspection_interval {
            return bad("maintenance_delay must be shorter than inspection_interval".into());
        }
        if self.corrective_cost >= self.surprise_cost {
            return bad("corrective_cost must be below surprise_cost".into());
        }
        let slack = T::lit(1e-9) * self.uniformization.max(T::one());
        if self.uniformization + slack < self.max_shock_rate() {
            return bad(format!(
                "uniformization {} is below the largest shock rate {}",
                self.uniformization,
                self.max_shock_rate()
            ));
        }
        if self.damage_step_cells == 0 || self.improvement_bins == 0 {
            return bad("damage_step_cells and improvement_bins must be >= 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical JSON: object keys sorted, scalars as written by serde_json.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        // serde_json's default map is ordered by key.
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON plus the scalar type tag.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(T::TAG.as_bytes());
        h.update([0u8]);
        h.update(self.canonical_json().as_bytes());
        h.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    /// Applies `key=value` overrides. Keys must name existing fields; values
    /// are parsed as JSON, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{item}` is not KEY=VALUE")))?;
            let key = key.trim();
            let value = serde_json::from_str(raw.trim())
                .unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
            let mut node = &mut tree;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| Error::InvalidConfig(format!("`{key}` does not name a field")))?;
                if !obj.contains_key(*part) {
                    return Err(Error::InvalidConfig(format!("unknown config key `{key}`")));
                }
                if i + 1 == parts.len() {
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                node = obj.get_mut(*part).expect("checked above");
            }
        }
        let cfg: Self =
            serde_json::from_value(tree).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
