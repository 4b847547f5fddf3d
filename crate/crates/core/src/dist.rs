//! Value distributions, market slices, and the gap between the two group cdfs.
//!
//! A [`MarketSlice`] fixes one cost level `c`, the share `alpha` of group `h`,
//! and the two value distributions. The gap `Δ(v) = F_l(v) - F_h(v)` is
//! quasi-concave under the likelihood-ratio order, so it has a lower
//! (increasing) and an upper (decreasing) branch around its maximizer `v*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_decreasing, bisect_increasing, BISECT_MAX_ITER, BISECT_TOL};

/// Upper quantile used to cap grids and brackets on unbounded supports.
pub const TAIL_MASS: f64 = 1e-10;

/// Points on the likelihood-ratio validation grid.
const LR_GRID: usize = 10_001;

/// Parametric family of an absolutely continuous value distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Exponential with the given mean.
    Exponential { mean: f64 },
    /// Finite mixture of exponentials.
    ExponentialMixture { weights: Vec<f64>, means: Vec<f64> },
    /// `F(x) = F_base(x / scale)`.
    Scaled { base: Box<Family>, scale: f64 },
    /// Piecewise-linear cdf through `(x, F(x))` knots.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDistribution(m.to_string()));
        match self {
            Family::Exponential { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return bad("exponential mean must be positive and finite");
                }
            }
            Family::ExponentialMixture { weights, means } => {
                if weights.is_empty() || weights.len() != means.len() {
                    return bad("mixture needs matching, nonempty weights and means");
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return bad("mixture weights must be nonnegative");
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("mixture weights must sum to 1");
                }
                if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                    return bad("mixture means must be positive");
                }
            }
            Family::Scaled { base, scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad("scale must be positive and finite");
                }
                base.validate()?;
            }
            Family::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return bad("piecewise-linear cdf needs at least two knots");
                }
                if knots[0][1] != 0.0 || knots[knots.len() - 1][1] != 1.0 {
                    return bad("piecewise-linear cdf must run from 0 to 1");
                }
                for w in knots.windows(2) {
                    if !(w[1][0] > w[0][0] && w[1][1] > w[0][1]) {
                        return bad("knots must be strictly increasing in both coordinates");
                    }
                    if !w[1][0].is_finite() || !w[0][0].is_finite() {
                        return bad("knots must be finite");
                    }
                }
            }
        }
        Ok(())
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Family::Exponential { .. } | Family::ExponentialMixture { .. } => (0.0, f64::INFINITY),
            Family::Scaled { base, scale } => {
                let (lo, hi) = base.support();
                (lo * scale, hi * scale)
            }
            Family::PiecewiseLinear { knots } => (knots[0][0], knots[knots.len() - 1][0]),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Family::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            Family::ExponentialMixture { weights, means } => {
                if x <= 0.0 {
                    return 0.0;
                }
                weights
                    .iter()
                    .zip(means)
                    .map(|(w, m)| -w * (-x / m).exp_m1())
                    .sum::<f64>()
                    .min(1.0)
            }
            Family::Scaled { base, scale } => base.cdf(x / scale),
            Family::PiecewiseLinear { knots } => {
                let n = knots.len();
                if x <= knots[0][0] {
                    return 0.0;
                }
                if x >= knots[n - 1][0] {
                    return 1.0;
                }
                let i = knots.partition_point(|k| k[0] <= x) - 1;
                let (x0, f0) = (knots[i][0], knots[i][1]);
                let (x1, f1) = (knots[i + 1][0], knots[i + 1][1]);
                f0 + (x - x0) / (x1 - x0) * (f1 - f0)
            }
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Family::Exponential { mean } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x / mean).exp() / mean
                }
            }
            Family::ExponentialMixture { weights, means } => {
                if x < 0.0 {
                    return 0.0;
                }
                weights.iter().zip(means).map(|(w, m)| w * (-x / m).exp() / m).sum()
            }
            Family::Scaled { base, scale } => base.pdf(x / scale) / scale,
            Family::PiecewiseLinear { knots } => {
                let n = knots.len();
                if x < knots[0][0] || x >= knots[n - 1][0] {
                    return 0.0;
                }
                let i = knots.partition_point(|k| k[0] <= x) - 1;
                (knots[i + 1][1] - knots[i][1]) / (knots[i + 1][0] - knots[i][0])
            }
        }
    }

    fn quantile(&self, q: f64) -> f64 {
        let (lo, hi) = self.support();
        if q <= 0.0 {
            return lo;
        }
        if q >= 1.0 {
            return hi;
        }
        match self {
            Family::Exponential { mean } => -mean * (-q).ln_1p(),
            Family::ExponentialMixture { means, .. } => {
                let top = means.iter().fold(0.0f64, |a, m| a.max(-m * (-q).ln_1p()));
                bisect_increasing(|x| self.cdf(x) - q, 0.0, top)
            }
            Family::Scaled { base, scale } => scale * base.quantile(q),
            Family::PiecewiseLinear { knots } => {
                let i = knots.partition_point(|k| k[1] <= q) - 1;
                let (x0, f0) = (knots[i][0], knots[i][1]);
                let (x1, f1) = (knots[i + 1][0], knots[i + 1][1]);
                x0 + (q - f0) / (f1 - f0) * (x1 - x0)
            }
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Family::Exponential { mean } => *mean,
            Family::ExponentialMixture { weights, means } => {
                weights.iter().zip(means).map(|(w, m)| w * m).sum()
            }
            Family::Scaled { base, scale } => scale * base.mean(),
            Family::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| (w[1][1] - w[0][1]) * 0.5 * (w[0][0] + w[1][0]))
                .sum(),
        }
    }

    fn expected_excess(&self, c: f64) -> f64 {
        match self {
            Family::Exponential { mean } => {
                if c <= 0.0 {
                    mean - c
                } else {
                    mean * (-c / mean).exp()
                }
            }
            Family::ExponentialMixture { weights, means } => weights
                .iter()
                .zip(means)
                .map(|(w, m)| w * Family::Exponential { mean: *m }.expected_excess(c))
                .sum(),
            Family::Scaled { base, scale } => scale * base.expected_excess(c / scale),
            Family::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| {
                    let (x0, x1, mass) = (w[0][0], w[1][0], w[1][1] - w[0][1]);
                    if c <= x0 {
                        mass * (0.5 * (x0 + x1) - c)
                    } else if c >= x1 {
                        0.0
                    } else {
                        mass * (x1 - c).powi(2) / (2.0 * (x1 - x0))
                    }
                })
                .sum(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Family::Scaled { base, scale } => base.breakpoints().iter().map(|b| b * scale).collect(),
            Family::PiecewiseLinear { knots } => knots.iter().map(|k| k[0]).collect(),
            _ => Vec::new(),
        }
    }
}

/// An absolutely continuous distribution on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDistribution {
    family: Family,
    support_lo: f64,
    support_hi: f64,
    numeric_hi: f64,
}

impl ValueDistribution {
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        let (support_lo, support_hi) = family.support();
        let numeric_hi = if support_hi.is_finite() {
            support_hi
        } else {
            family.quantile(1.0 - TAIL_MASS)
        };
        Ok(Self { family, support_lo, support_hi, numeric_hi })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(Family::Exponential { mean })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }
    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }
    /// Upper end of the support; may be `+∞`.
    pub fn support_hi(&self) -> f64 {
        self.support_hi
    }
    /// `support_hi` if finite, otherwise the `1 - 1e-10` quantile.
    pub fn numeric_hi(&self) -> f64 {
        self.numeric_hi
    }
    pub fn cdf(&self, x: f64) -> f64 {
        self.family.cdf(x)
    }
    pub fn pdf(&self, x: f64) -> f64 {
        self.family.pdf(x)
    }
    /// Left-continuous inverse of the cdf; `quantile(1)` is `support_hi`.
    pub fn quantile(&self, q: f64) -> f64 {
        self.family.quantile(q)
    }
    pub fn mean(&self) -> f64 {
        self.family.mean()
    }
    /// `E[(v - c)^+]`.
    pub fn expected_excess(&self, c: f64) -> f64 {
        self.family.expected_excess(c)
    }
    /// Points where the density may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.family.breakpoints()
    }
}

/// Protected group label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    L,
    H,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::L => "l",
            Group::H => "h",
        }
    }
}

/// Location and height of the maximum of `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub v_star: f64,
    pub tv: f64,
}

/// One cost level with its group share and the two value distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSlice {
    c: f64,
    alpha: f64,
    f_l: ValueDistribution,
    f_h: ValueDistribution,
    lo: f64,
    hi: f64,
    cap: f64,
    gap: Option<GapProfile>,
}

impl MarketSlice {
    /// Validates the common support and the likelihood-ratio order.
    pub fn new(c: f64, alpha: f64, f_l: ValueDistribution, f_h: ValueDistribution) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidSlice(format!("cost must be finite and nonnegative, got {c}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidSlice(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let same = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        if !same(f_l.support_lo(), f_h.support_lo()) || !same(f_l.support_hi(), f_h.support_hi()) {
            return Err(Error::InvalidSlice("group distributions must share their support".into()));
        }
        let lo = f_l.support_lo();
        let hi = f_l.support_hi();
        let cap = f_l.numeric_hi().max(f_h.numeric_hi());
        check_likelihood_ratio(&f_l, &f_h, lo, cap)?;
        let mut slice = Self { c, alpha, f_l, f_h, lo, hi, cap, gap: None };
        slice.gap = locate_gap(&slice);
        Ok(slice)
    }

    /// Exponential values with the given group means.
    pub fn exponential(mean_l: f64, mean_h: f64, alpha: f64, c: f64) -> Result<Self> {
        Self::new(c, alpha, ValueDistribution::exponential(mean_l)?, ValueDistribution::exponential(mean_h)?)
    }

    /// The same slice with a different group share.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidSlice(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha, ..self.clone() })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn f_l(&self) -> &ValueDistribution {
        &self.f_l
    }
    pub fn f_h(&self) -> &ValueDistribution {
        &self.f_h
    }
    pub fn dist(&self, g: Group) -> &ValueDistribution {
        match g {
            Group::L => &self.f_l,
            Group::H => &self.f_h,
        }
    }
    /// Lower end of the common support.
    pub fn lo(&self) -> f64 {
        self.lo
    }
    /// Upper end of the common support; may be `+∞`.
    pub fn hi(&self) -> f64 {
        self.hi
    }
    /// Finite upper end used for grids, brackets and quadrature.
    pub fn cap(&self) -> f64 {
        self.cap
    }
    /// Group quantile clamped to the finite cap.
    pub fn quantile(&self, g: Group, q: f64) -> f64 {
        self.dist(g).quantile(q).min(self.cap)
    }
    /// `E[(v - c)^+ | θ]`.
    pub fn gains(&self, g: Group) -> f64 {
        self.dist(g).expected_excess(self.c)
    }
    /// Population gains from trade, weighted by group share.
    pub fn total_gains(&self) -> f64 {
        self.alpha * self.gains(Group::H) + (1.0 - self.alpha) * self.gains(Group::L)
    }
    /// Density breakpoints of both groups.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.f_l.breakpoints();
        b.extend(self.f_h.breakpoints());
        b
    }
}

fn check_likelihood_ratio(f_l: &ValueDistribution, f_h: &ValueDistribution, lo: f64, cap: f64) -> Result<()> {
    let mut prev: Option<f64> = None;
    for i in 0..LR_GRID {
        let v = lo + (cap - lo) * i as f64 / (LR_GRID - 1) as f64;
        let (pl, ph) = (f_l.pdf(v), f_h.pdf(v));
        if pl <= 1e-300 {
            continue;
        }
        let ratio = ph / pl;
        if let Some(p) = prev {
            if ratio < p - 1e-9 * p.max(1.0) {
                return Err(Error::InvalidSlice(format!(
                    "likelihood ratio f_h/f_l decreases near v = {v:.6} ({p:.9} -> {ratio:.9})"
                )));
            }
        }
        prev = Some(ratio);
    }
    Ok(())
}

fn locate_gap(slice: &MarketSlice) -> Option<GapProfile> {
    // Bisect on the sign of f_l - f_h without evaluating the right end, where
    // both densities may vanish on a bounded support.
    let above = |v: f64| slice.f_l.pdf(v) > slice.f_h.pdf(v);
    let (mut lo, mut hi) = (slice.lo, slice.cap);
    if !above(lo) {
        hi = lo;
    } else {
        for _ in 0..BISECT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= BISECT_TOL || mid <= lo || mid >= hi {
                break;
            }
            if above(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let v_star = 0.5 * (lo + hi);
    let tv = delta(slice, v_star);
    (tv >= 1e-12).then_some(GapProfile { v_star, tv })
}

/// `Δ(v) = F_l(v) - F_h(v)`.
pub fn delta(slice: &MarketSlice, v: f64) -> f64 {
    slice.f_l.cdf(v) - slice.f_h.cdf(v)
}

/// Maximizer `v*` of `Δ` and its height `tv`.
pub fn gap_profile(slice: &MarketSlice) -> Result<GapProfile> {
    match slice.gap {
        Some(g) => Ok(g),
        None => Err(Error::DegenerateSlice { tv: delta(slice, slice.lo).abs() }),
    }
}

/// Which monotone branch of `Δ` to invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

/// Root of `Δ(v) = q` on the requested branch.
pub fn delta_inverse(slice: &MarketSlice, q: f64, branch: Branch) -> Result<f64> {
    let gp = gap_profile(slice)?;
    if q > gp.tv + 1e-12 || q < -1e-12 {
        return Err(Error::OutOfRange(format!("gap level {q} outside [0, {}]", gp.tv)));
    }
    Ok(match branch {
        Branch::Lower => lower_inverse(slice, gp, q),
        Branch::Upper => upper_inverse(slice, gp, q).0,
    })
}

/// Lower-branch inverse with levels clamped to `[0, tv]`.
pub(crate) fn lower_inverse(slice: &MarketSlice, gp: GapProfile, q: f64) -> f64 {
    if q <= 0.0 {
        return slice.lo;
    }
    if q >= gp.tv {
        return gp.v_star;
    }
    bisect_increasing(|v| delta(slice, v) - q, slice.lo, gp.v_star)
}

/// Upper-branch inverse with levels clamped to `[0, tv]`; the flag reports
/// that the root lies beyond the numeric cap and was truncated there.
pub(crate) fn upper_inverse(slice: &MarketSlice, gp: GapProfile, q: f64) -> (f64, bool) {
    if q >= gp.tv {
        return (gp.v_star, false);
    }
    if delta(slice, slice.cap) >= q {
        return (slice.cap, slice.hi > slice.cap);
    }
    (bisect_decreasing(|v| delta(slice, v) - q, gp.v_star, slice.cap), false)
}

/// Reflection of `v >= v*` onto the lower branch: `g` with `Δ(g) = Δ(v)`, and `h = v - g`.
pub fn reflect_g_h(slice: &MarketSlice, v: f64) -> Result<(f64, f64)> {
    let gp = gap_profile(slice)?;
    if v < gp.v_star - 1e-12 {
        return Err(Error::OutOfRange(format!("reflection needs v >= v* = {}, got {v}", gp.v_star)));
    }
    let g = lower_inverse(slice, gp, delta(slice, v));
    Ok((g, v - g))
}

/// A finite collection of slices with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    slices: Vec<(MarketSlice, f64)>,
}

impl Market {
    pub fn new(slices: Vec<(MarketSlice, f64)>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidSlice("a market needs at least one slice".into()));
        }
        if slices.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidSlice("slice weights must be nonnegative".into()));
        }
        let total: f64 = slices.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSlice(format!("slice weights sum to {total}, not 1")));
        }
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[(MarketSlice, f64)] {
        &self.slices
    }
}
