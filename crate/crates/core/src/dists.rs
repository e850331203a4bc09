//! Inverse Gaussian shock damage and Beta improvement factor, plus their
//! discretizations onto the finite sets used by the solver and simulator.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{grid_w, shock_rate};
use crate::real::Real;

/// Standard normal CDF.
#[inline]
fn std_normal_cdf<T: Real>(z: T) -> T {
    T::lit(0.5) * (-z / T::SQRT_2()).erfc()
}

/// Density of the damage increment when the mean shock interval is `h`:
/// inverse Gaussian with mean `μh` and shape `λh²`.
pub fn ig_pdf<T: Real>(varpi: T, h: T, cfg: &ModelConfig<T>) -> Result<T> {
    if !(varpi > T::zero()) {
        return Err(Error::Domain(format!("damage must be > 0, got {varpi}")));
    }
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("mean interval must be > 0, got {h}")));
    }
    let (mu, lambda) = (cfg.ig_mu, cfg.ig_lambda);
    let two = T::lit(2.0);
    let norm = (lambda * h * h / (two * T::PI() * varpi.powi(3))).sqrt();
    let dev = varpi - mu * h;
    Ok(norm * (-lambda * dev * dev / (two * mu * mu * varpi)).exp())
}

/// CDF of an inverse Gaussian with the given mean and shape.
pub(crate) fn ig_cdf_raw<T: Real>(x: T, mean: T, shape: T) -> T {
    if !(x > T::zero()) {
        return T::zero();
    }
    if x.is_infinite() {
        return T::one();
    }
    let r = (shape / x).sqrt();
    let first = std_normal_cdf(r * (x / mean - T::one()));
    // e^{2s/m} Φ(−r(x/m + 1)), evaluated in log space when the factor is large
    let expo = T::lit(2.0) * shape / mean;
    let y = r * (x / mean + T::one()) / T::SQRT_2();
    let tail = T::lit(0.5) * y.erfc();
    let second = if expo < T::lit(80.0) {
        expo.exp() * tail
    } else if tail > T::zero() {
        (expo + tail.ln()).exp()
    } else {
        // erfc(y) ~ e^{-y²} / (y √π)
        (expo - y * y - (y * T::PI().sqrt()).ln()).exp() * T::lit(0.5)
    };
    (first + second).min(T::one()).max(T::zero())
}

/// CDF of the damage increment for mean shock interval `h`.
pub fn ig_cdf<T: Real>(varpi: T, h: T, cfg: &ModelConfig<T>) -> T {
    ig_cdf_raw(varpi, cfg.ig_mu * h, cfg.ig_lambda * h * h)
}

/// α(n) = α0 + α1·min(n, n_max).
#[inline]
pub fn alpha_of<T: Real>(n: u32, cfg: &ModelConfig<T>) -> T {
    let n = n.min(cfg.n_max);
    cfg.alpha0 + cfg.alpha1 * T::from_u32(n).expect("u32 representable")
}

fn ln_beta_fn<T: Real>(a: T, b: T) -> T {
    a.ln_gamma() + b.ln_gamma() - (a + b).ln_gamma()
}

/// Improvement factor density after `n` imperfect repairs.
pub fn beta_pdf<T: Real>(theta_f: T, n: u32, cfg: &ModelConfig<T>) -> Result<T> {
    if !(theta_f > T::zero() && theta_f < T::one()) {
        return Err(Error::Domain(format!(
            "improvement factor must lie in (0, 1), got {theta_f}"
        )));
    }
    let a = alpha_of(n, cfg);
    let b = cfg.beta;
    let one = T::one();
    let ln = (a - one) * theta_f.ln() + (b - one) * (one - theta_f).ln() - ln_beta_fn(a, b);
    Ok(ln.exp())
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cont_frac<T: Real>(a: T, b: T, x: T) -> T {
    let one = T::one();
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon() * T::lit(4.0);
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=300 {
        let m = T::from_u32(m).unwrap();
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() < eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_cdf_raw<T: Real>(x: T, a: T, b: T) -> T {
    let (zero, one) = (T::zero(), T::one());
    if x <= zero {
        return zero;
    }
    if x >= one {
        return one;
    }
    let front = (a * x.ln() + b * (one - x).ln() - ln_beta_fn(a, b)).exp();
    if x < (a + one) / (a + b + T::lit(2.0)) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        one - front * beta_cont_frac(b, a, one - x) / b
    }
}

/// Damage increments `Π` with bin masses for one shock rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDamageLaw<T> {
    /// Shock rate the masses were built for.
    pub eta: T,
    /// Increments, ascending, all on the w-grid and > 0.
    pub support: Vec<T>,
    /// Same increments as w-grid cell offsets.
    pub cells: Vec<usize>,
    pub masses: Vec<T>,
}

impl<T: Real> DiscreteDamageLaw<T> {
    pub fn mean(&self) -> T {
        self.support
            .iter()
            .zip(&self.masses)
            .map(|(&v, &p)| v * p)
            .sum()
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }
}

/// Bins `[(k−½)s, (k+½)s)` around `ϖ_k = k·s` with `s` a whole number of
/// w-cells; the first bin starts at 0 and the last absorbs the upper tail.
pub fn discretize_ig<T: Real>(eta_val: T, cfg: &ModelConfig<T>) -> Result<DiscreteDamageLaw<T>> {
    if !(eta_val > T::zero()) {
        return Err(Error::Domain(format!("shock rate must be > 0, got {eta_val}")));
    }
    let h = T::one() / eta_val;
    let step_cells = cfg.damage_step_cells as usize;
    let total_cells = cfg.w_cells();
    let count = total_cells.div_ceil(step_cells).max(1);
    let step = cfg.w_step * T::from_usize_lossy(step_cells);
    let mut support = Vec::with_capacity(count);
    let mut cells = Vec::with_capacity(count);
    let mut masses = Vec::with_capacity(count);
    let mut lower_cdf = T::zero();
    for k in 1..=count {
        cells.push(k * step_cells);
        support.push(grid_w(k * step_cells, cfg));
        let upper_cdf = if k == count {
            T::one()
        } else {
            let edge = (T::from_usize_lossy(k) + T::lit(0.5)) * step;
            ig_cdf(edge, h, cfg)
        };
        masses.push((upper_cdf - lower_cdf).max(T::zero()));
        lower_cdf = upper_cdf;
    }
    Ok(DiscreteDamageLaw {
        eta: eta_val,
        support,
        cells,
        masses,
    })
}

/// Improvement factors `Θ` (bin midpoints) with bin masses for one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteImprovementLaw<T> {
    pub n: u32,
    pub support: Vec<T>,
    pub masses: Vec<T>,
}

impl<T: Real> DiscreteImprovementLaw<T> {
    pub fn mean(&self) -> T {
        self.support
            .iter()
            .zip(&self.masses)
            .map(|(&v, &p)| v * p)
            .sum()
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }
}

/// Equal bins of [0, 1], support at the midpoints, masses from the Beta CDF.
pub fn discretize_beta<T: Real>(n: u32, cfg: &ModelConfig<T>) -> DiscreteImprovementLaw<T> {
    let bins = cfg.improvement_bins as usize;
    let width = T::one() / T::from_usize_lossy(bins);
    let (a, b) = (alpha_of(n, cfg), cfg.beta);
    let mut support = Vec::with_capacity(bins);
    let mut masses = Vec::with_capacity(bins);
    let mut lower = T::zero();
    for k in 0..bins {
        let upper = if k + 1 == bins {
            T::one()
        } else {
            beta_cdf_raw(T::from_usize_lossy(k + 1) * width, a, b)
        };
        support.push((T::from_usize_lossy(k) + T::lit(0.5)) * width);
        masses.push((upper - lower).max(T::zero()));
        lower = upper;
    }
    DiscreteImprovementLaw { n, support, masses }
}

/// Every discretized law the solver and simulator can touch, built once per
/// configuration: one damage law per w-grid level below failure and one
/// improvement law per repair count up to `n_max`.
#[derive(Debug, Clone)]
pub struct Kernels<T> {
    damage: Vec<Option<DiscreteDamageLaw<T>>>,
    improvement: Vec<DiscreteImprovementLaw<T>>,
}

impl<T: Real> Kernels<T> {
    pub fn new(cfg: &ModelConfig<T>) -> Self {
        let damage = (0..=cfg.w_cells())
            .map(|i| {
                let eta = shock_rate(grid_w(i, cfg), cfg);
                (eta > T::zero()).then(|| discretize_ig(eta, cfg).expect("positive rate"))
            })
            .collect();
        let improvement = (0..=cfg.n_max).map(|n| discretize_beta(n, cfg)).collect();
        Self {
            damage,
            improvement,
        }
    }

    /// Damage law at w-grid index `w_index`; `None` at failure (no shocks).
    #[inline]
    pub fn damage(&self, w_index: usize) -> Option<&DiscreteDamageLaw<T>> {
        self.damage.get(w_index).and_then(Option::as_ref)
    }

    /// Improvement law for `n` repairs, frozen at `n_max` beyond the cap.
    #[inline]
    pub fn improvement(&self, n: u32) -> &DiscreteImprovementLaw<T> {
        let i = (n as usize).min(self.improvement.len() - 1);
        &self.improvement[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::snap_index;
    use proptest::prelude::*;

    fn cfg() -> ModelConfig<f64> {
        ModelConfig::default()
    }

    /// Adaptive Simpson quadrature, used only as an independent oracle.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// Simpson over unit panels so narrow peaks are not skipped.
    fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let panels = (b - a).ceil() as usize * 4;
        let w = (b - a) / panels as f64;
        (0..panels)
            .map(|k| simpson(f, a + k as f64 * w, a + (k + 1) as f64 * w, 1e-13))
            .sum()
    }

    fn pdf_or_zero(x: f64, h: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            ig_pdf(x, h, &cfg()).unwrap()
        }
    }

    #[test]
    fn ig_pdf_unit_mean_unit_shape_at_one() {
        let v = ig_pdf(1.0, 60.0, &cfg()).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((v - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn ig_pdf_rejects_nonpositive_damage() {
        assert!(ig_pdf(0.0, 60.0, &cfg()).is_err());
        assert!(ig_pdf(-1.0, 60.0, &cfg()).is_err());
    }

    #[test]
    fn ig_pdf_normalizes_and_has_stated_mean() {
        for h in [60.0, 20.0, 60.0 / 5.9] {
            let f = |x: f64| pdf_or_zero(x, h);
            let total = integrate(&f, 0.0, 200.0);
            assert!((total - 1.0).abs() < 1e-7, "h={h} total={total}");
            let g = |x: f64| x * pdf_or_zero(x, h);
            let mean = integrate(&g, 0.0, 200.0);
            assert!((mean - h / 60.0).abs() < 1e-6, "h={h} mean={mean}");
        }
        // w = 2 gives h = 20 and mean 1/3
        let g = |x: f64| x * pdf_or_zero(x, 20.0);
        assert!((integrate(&g, 0.0, 200.0) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn ig_cdf_limits() {
        assert_eq!(ig_cdf(0.0, 60.0, &cfg()), 0.0);
        assert!((ig_cdf(1e6, 60.0, &cfg()) - 1.0).abs() < 1e-9);
        assert!((ig_cdf(f64::INFINITY, 10.0, &cfg()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ig_cdf_matches_quadrature_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = 60.0 / (1.0 + rng.random_range(0.0..4.9));
            let x = rng.random_range(0.001..3.0);
            let f = |t: f64| pdf_or_zero(t, h);
            let quad = simpson(&f, 0.0, x, 1e-13);
            let cdf = ig_cdf(x, h, &cfg());
            assert!((quad - cdf).abs() < 1e-8, "h={h} x={x} quad={quad} cdf={cdf}");
        }
    }

    #[test]
    fn ig_cdf_large_shape_is_finite() {
        let v: f64 = ig_cdf_raw(1.2, 1.0, 500.0);
        assert!(v.is_finite() && v > 0.99);
        let v: f64 = ig_cdf_raw(0.8, 1.0, 500.0);
        assert!(v.is_finite() && v < 0.01);
    }

    #[test]
    fn damage_law_is_grid_aligned_and_normalized() {
        let c = cfg();
        let law = discretize_ig(1.0 / 60.0, &c).unwrap();
        assert_eq!(law.support.len(), 50);
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
        assert!(law.support.iter().all(|&v| v > 0.0));
        for (v, &k) in law.support.iter().zip(&law.cells) {
            assert_eq!(snap_index(*v, &c), k);
        }
        assert!((law.mean() - 1.0).abs() < 0.05);
    }

    #[test]
    fn damage_masses_are_cdf_differences() {
        let c = cfg();
        let eta = 3.0 / 60.0;
        let h = 1.0 / eta;
        let law = discretize_ig(eta, &c).unwrap();
        assert!((law.masses[0] - ig_cdf(0.15, h, &c)).abs() < 1e-15);
        assert!((law.masses[9] - (ig_cdf(1.05, h, &c) - ig_cdf(0.95, h, &c))).abs() < 1e-15);
        assert!((law.masses[49] - (1.0 - ig_cdf(4.95, h, &c))).abs() < 1e-15);
    }

    #[test]
    fn damage_mean_bias_is_bounded_by_first_bin_rounding() {
        let c = cfg();
        for i in 0..c.w_cells() {
            let eta = shock_rate(grid_w(i, &c), &c);
            let law = discretize_ig(eta, &c).unwrap();
            let exact = (1.0 / eta) * c.ig_mu;
            // everything below the first representative is pushed up to Δw
            let first_bin_push = law.masses[0] * c.w_step;
            assert!(law.mean() >= exact * 0.95, "w index {i}");
            assert!(law.mean() <= exact + first_bin_push, "w index {i}");
            if i <= 21 {
                assert!((law.mean() / exact - 1.0).abs() < 0.05, "w index {i}");
            }
        }
    }

    #[test]
    fn damage_law_rejects_zero_rate() {
        assert!(discretize_ig(0.0, &cfg()).is_err());
    }

    #[test]
    fn coarse_damage_support() {
        let c = ModelConfig::<f64> {
            damage_step_cells: 3,
            ..cfg()
        };
        let law = discretize_ig(0.05, &c).unwrap();
        assert_eq!(law.cells, (1..=17).map(|k| 3 * k).collect::<Vec<_>>());
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn beta_pdf_examples() {
        let c = cfg();
        for t in [0.1, 0.37, 0.9] {
            assert!((beta_pdf(t, 0, &c).unwrap() - 1.0).abs() < 1e-12);
        }
        let c2 = ModelConfig::<f64> {
            alpha0: 2.0,
            ..cfg()
        };
        assert!((beta_pdf(0.5, 0, &c2).unwrap() - 1.0).abs() < 1e-12);
        assert!(beta_pdf(0.0, 0, &c).is_err());
        assert!(beta_pdf(1.0, 0, &c).is_err());
    }

    #[test]
    fn beta_mean_matches_closed_form() {
        let c = ModelConfig::<f64> {
            alpha0: 1.0,
            alpha1: 0.5,
            beta: 2.0,
            ..cfg()
        };
        for n in [0, 3, 10] {
            let a = alpha_of(n, &c);
            let f = |t: f64| t * beta_pdf(t.clamp(1e-12, 1.0 - 1e-12), n, &c).unwrap();
            let mean = simpson(&f, 1e-12, 1.0 - 1e-12, 1e-12);
            assert!((mean - a / (a + 2.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn beta_cdf_matches_closed_forms() {
        // I_x(a, 1) = x^a
        for a in [1.0, 2.0, 7.5, 15.0] {
            for x in [0.05, 0.5, 0.93] {
                let f: f64 = x;
                assert!((beta_cdf_raw(x, a, 1.0) - f.powf(a)).abs() < 1e-12);
            }
        }
        // I_x(2, 2) = 3x² − 2x³
        let x: f64 = 0.3;
        assert!((beta_cdf_raw(x, 2.0, 2.0) - (3.0 * x * x - 2.0 * x.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn improvement_law_examples() {
        let c = cfg();
        let law = discretize_beta(0, &c);
        assert_eq!(law.support.len(), 10);
        assert!(law.masses.iter().all(|&p| (p - 0.1).abs() < 1e-12));
        assert!((law.support[0] - 0.05).abs() < 1e-15);
        assert!((law.support[9] - 0.95).abs() < 1e-15);
        let c2 = ModelConfig::<f64> {
            alpha0: 2.0,
            ..cfg()
        };
        let law = discretize_beta(0, &c2);
        assert!((law.masses[9] - 0.19).abs() < 1e-12);
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn improvement_mean_rises_with_repairs() {
        let c = ModelConfig::<f64> {
            alpha1: 1.0,
            ..cfg()
        };
        let means: Vec<f64> = (0..=c.n_max).map(|n| discretize_beta(n, &c).mean()).collect();
        assert!(means.windows(2).all(|p| p[0] <= p[1]));
        // frozen past the cap
        assert_eq!(discretize_beta(c.n_max + 5, &c), DiscreteImprovementLaw { n: c.n_max + 5, ..discretize_beta(c.n_max, &c) });
    }

    #[test]
    fn kernels_cover_the_grid() {
        let c = cfg();
        let k = Kernels::new(&c);
        assert!(k.damage(50).is_none());
        for i in 0..50 {
            assert!((k.damage(i).unwrap().total_mass() - 1.0).abs() < 1e-9);
        }
        assert_eq!(k.improvement(99).n, c.n_max);
    }

    #[test]
    fn f32_laws_normalize() {
        let c = ModelConfig::<f32>::default();
        let law = discretize_ig(0.05f32, &c).unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-6);
        assert!((discretize_beta(0, &c).total_mass() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn beta_discrete_mean_close(alpha in 1.0f64..15.0) {
            let c = ModelConfig::<f64> { alpha0: alpha, ..cfg() };
            let law = discretize_beta(0, &c);
            prop_assert!((law.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!(law.masses.iter().all(|&p| p >= 0.0));
            let err = (law.mean() - alpha / (alpha + 1.0)).abs();
            // midpoint support is off by at most half a bin
            prop_assert!(err < 0.5 / c.improvement_bins as f64);
            if alpha <= 10.0 {
                prop_assert!(err < 0.01);
            }
        }

        #[test]
        fn damage_mass_conserved(rate in 1e-3f64..0.1) {
            let law = discretize_ig(rate, &cfg()).unwrap();
            prop_assert!((law.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!(law.masses.iter().all(|&p| p >= 0.0));
        }
    }
}
