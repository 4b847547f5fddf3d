//! Pricing rules as explicit piecewise maps from a consumer's value to a price.
//!
//! Every rule is deterministic, so the randomization index that a general
//! rule may depend on is not part of any signature here. Segments are
//! left-closed and right-open; the last one of each group runs to the end of
//! the support.

use serde::{Serialize, Serializer};

use crate::cutoffs::{self, Cutoffs, Kappa};
use crate::dist::{delta, gap_profile, lower_inverse, upper_inverse, Group, MarketSlice};
use crate::error::{Error, Result};
use crate::numeric::bisect_increasing;

/// Default grid size for non-discrimination checks.
pub const ND_GRID: usize = 10_001;
/// A rule is non-discriminatory when its price cdfs differ by at most this much.
pub const ND_TOL: f64 = 1e-6;

/// Price formula applied on one segment of a group's values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "formula", content = "params", rename_all = "snake_case")]
pub enum Formula {
    /// `p = v`.
    Identity,
    /// `p = max{v, c}`.
    MaxWithCost,
    /// `p = price`.
    Constant { price: f64 },
    /// `p = F_to^{-1}(F_from(v) + offset)`.
    QuantileShift { from: Group, to: Group, offset: f64 },
    /// `p = upper Δ-inverse of (level - F_θ(v))`.
    DeltaUpperInverseOfComplement { level: f64 },
    /// `p = lower Δ-inverse of (F_θ(v) + offset)`.
    DeltaLowerInverseShift { offset: f64 },
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub theta: Group,
    pub v_lo: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub v_hi: f64,
    #[serde(flatten)]
    pub formula: Formula,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RuleDiagnostics {
    /// Some prices on an upper Δ-inverse segment were truncated at the
    /// `1 - 1e-10` quantile because the exact price diverges.
    pub upper_inverse_capped: bool,
}

/// A deterministic pricing rule for one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingRule {
    pub name: String,
    pub c: f64,
    pub segments: Vec<Segment>,
    pub diagnostics: RuleDiagnostics,
}

impl PricingRule {
    fn new(name: &str, slice: &MarketSlice) -> Self {
        Self { name: name.to_string(), c: slice.c(), segments: Vec::new(), diagnostics: RuleDiagnostics::default() }
    }

    fn push(&mut self, slice: &MarketSlice, theta: Group, lo: f64, hi: f64, formula: Formula) {
        let lo = lo.max(slice.lo());
        let hi = hi.min(slice.hi());
        if hi > lo {
            if matches!(formula, Formula::DeltaUpperInverseOfComplement { .. }) && slice.hi() > slice.cap() {
                self.diagnostics.upper_inverse_capped = true;
            }
            self.segments.push(Segment { theta, v_lo: lo, v_hi: hi, formula });
        }
    }

    /// Segments of one group in increasing order of value.
    pub fn group(&self, theta: Group) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.theta == theta)
    }

    /// Price charged to a `theta` consumer with value `v`.
    pub fn price(&self, slice: &MarketSlice, theta: Group, v: f64) -> f64 {
        let mut chosen = None;
        for s in self.group(theta) {
            if chosen.is_none() || v >= s.v_lo {
                chosen = Some(s);
            }
        }
        chosen.map_or(f64::NAN, |s| segment_price(slice, s, v))
    }

    /// Checks that each group's segments tile the support without gaps or overlaps.
    pub fn validate_partition(&self, slice: &MarketSlice) -> Result<()> {
        for theta in [Group::L, Group::H] {
            let mut at = slice.lo();
            for s in self.group(theta) {
                if s.v_lo != at || !(s.v_hi > s.v_lo) {
                    return Err(Error::OutOfRange(format!(
                        "{} segments of rule {} do not tile the support at {at}",
                        theta.as_str(),
                        self.name
                    )));
                }
                at = s.v_hi;
            }
            if at != slice.hi() {
                return Err(Error::OutOfRange(format!("rule {} stops at {at}", self.name)));
            }
        }
        Ok(())
    }
}

/// Evaluate a segment's formula at `v`, ignoring its interval.
pub fn segment_price(slice: &MarketSlice, seg: &Segment, v: f64) -> f64 {
    let fv = || slice.dist(seg.theta).cdf(v);
    match seg.formula {
        Formula::Identity => v,
        Formula::MaxWithCost => v.max(slice.c()),
        Formula::Constant { price } => price,
        Formula::QuantileShift { from, to, offset } => slice.quantile(to, slice.dist(from).cdf(v) + offset),
        Formula::DeltaUpperInverseOfComplement { level } => match gap_profile(slice) {
            Ok(gp) => upper_inverse(slice, gp, level - fv()).0,
            Err(_) => f64::NAN,
        },
        Formula::DeltaLowerInverseShift { offset } => match gap_profile(slice) {
            Ok(gp) => lower_inverse(slice, gp, fv() + offset),
            Err(_) => f64::NAN,
        },
    }
}

/// The profit-maximizing non-discriminatory rule, dispatched on the slice's region.
pub fn build_p_star(slice: &MarketSlice) -> Result<PricingRule> {
    match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => Ok(from_kappa(slice, &k, "p_star")),
        Cutoffs::C2(eta) => {
            let gp = gap_profile(slice)?;
            let c = slice.c();
            let mut r = PricingRule::new("p_star", slice);
            let level = gp.tv + slice.f_l().cdf(eta.eta_l);
            r.push(slice, Group::L, slice.lo(), eta.eta_l, Formula::Constant { price: c });
            r.push(slice, Group::L, eta.eta_l, c, Formula::DeltaUpperInverseOfComplement { level });
            r.push(slice, Group::L, c, slice.hi(), Formula::Identity);
            let offset = delta(slice, c) - slice.f_h().cdf(eta.eta_h);
            r.push(slice, Group::H, slice.lo(), eta.eta_h, Formula::Constant { price: c });
            r.push(slice, Group::H, eta.eta_h, c, Formula::DeltaLowerInverseShift { offset });
            r.push(slice, Group::H, c, slice.hi(), Formula::Identity);
            Ok(r)
        }
        Cutoffs::C3 => {
            let c = slice.c();
            let mut r = PricingRule::new("p_star", slice);
            let t = slice.f_l().quantile(slice.f_h().cdf(c));
            let level = slice.f_l().cdf(c);
            r.push(slice, Group::L, slice.lo(), t, Formula::Constant { price: c });
            r.push(slice, Group::L, t, c, Formula::DeltaUpperInverseOfComplement { level });
            r.push(slice, Group::L, c, slice.hi(), Formula::Identity);
            r.push(slice, Group::H, slice.lo(), slice.hi(), Formula::MaxWithCost);
            Ok(r)
        }
    }
}

/// The five-cutoff rule for any cutoff vector satisfying the first line of
/// the system (standard or noisy-signal).
pub fn from_kappa(slice: &MarketSlice, k: &Kappa, name: &str) -> PricingRule {
    let (lo, hi) = (slice.lo(), slice.hi());
    let [k1, k2, k3, k4, k5] = k.k;
    let mut r = PricingRule::new(name, slice);
    let level = delta(slice, k5);
    r.push(slice, Group::L, lo, k2, Formula::DeltaUpperInverseOfComplement { level });
    let offset = slice.f_h().cdf(k1) - slice.f_l().cdf(k2);
    r.push(slice, Group::L, k2, k3, Formula::QuantileShift { from: Group::L, to: Group::H, offset });
    r.push(slice, Group::L, k3, hi, Formula::Identity);
    r.push(slice, Group::H, lo, k1, Formula::DeltaLowerInverseShift { offset: delta(slice, k3) });
    r.push(slice, Group::H, k1, k4, Formula::Identity);
    let offset = delta(slice, k4);
    r.push(slice, Group::H, k4, k5, Formula::QuantileShift { from: Group::H, to: Group::L, offset });
    r.push(slice, Group::H, k5, hi, Formula::Identity);
    r
}

/// Rule for the noisy-signal objective, from its own cutoffs.
pub fn build_p_tilde_star(slice: &MarketSlice) -> Result<PricingRule> {
    let k = cutoffs::solve_kappa_tilde(slice)?;
    Ok(from_kappa(slice, &k, "p_tilde_star"))
}

/// `max{F_to^{-1}(F_from(v) + offset), c}` on `[a, b)`, split into a constant
/// piece and a shift piece.
fn push_shift_floored(r: &mut PricingRule, slice: &MarketSlice, theta: Group, a: f64, b: f64, offset: f64) {
    let to = match theta {
        Group::L => Group::H,
        Group::H => Group::L,
    };
    let c = slice.c();
    let split = slice.dist(theta).quantile((slice.dist(to).cdf(c) - offset).clamp(0.0, 1.0)).clamp(a, b);
    r.push(slice, theta, a, split, Formula::Constant { price: c });
    r.push(slice, theta, split, b, Formula::QuantileShift { from: theta, to, offset });
}

/// Assortative rule: each `h` consumer is priced at the `l` value of the same rank.
pub fn build_p_ass(slice: &MarketSlice) -> PricingRule {
    let mut r = PricingRule::new("p_ass", slice);
    r.push(slice, Group::L, slice.lo(), slice.hi(), Formula::MaxWithCost);
    push_shift_floored(&mut r, slice, Group::H, slice.lo(), slice.hi(), 0.0);
    r
}

/// Partly anti-assortative rule with quantile split `q`.
pub fn build_p_anti(slice: &MarketSlice, q: f64) -> Result<PricingRule> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("split quantile must lie in [0, 1], got {q}")));
    }
    let mut r = PricingRule::new("p_anti", slice);
    let s = slice.f_l().quantile(q).min(slice.hi());
    push_shift_floored(&mut r, slice, Group::L, slice.lo(), s, 1.0 - q);
    push_shift_floored(&mut r, slice, Group::L, s, slice.hi(), -q);
    r.push(slice, Group::H, slice.lo(), slice.hi(), Formula::MaxWithCost);
    Ok(r)
}

/// Smallest split quantile at which the anti-assortative rule serves every
/// `l` consumer above the split: the height of the gap.
pub fn q_star(slice: &MarketSlice) -> Result<f64> {
    Ok(gap_profile(slice)?.tv)
}

/// `p = max{v, c}` for both groups; discriminatory whenever the groups differ.
pub fn build_perfect_discrimination(slice: &MarketSlice) -> PricingRule {
    let mut r = PricingRule::new("perfect_discrimination", slice);
    r.push(slice, Group::L, slice.lo(), slice.hi(), Formula::MaxWithCost);
    r.push(slice, Group::H, slice.lo(), slice.hi(), Formula::MaxWithCost);
    r
}

/// One posted price for everyone.
pub fn build_uniform(slice: &MarketSlice, price: f64) -> PricingRule {
    let mut r = PricingRule::new("uniform", slice);
    r.push(slice, Group::L, slice.lo(), slice.hi(), Formula::Constant { price });
    r.push(slice, Group::H, slice.lo(), slice.hi(), Formula::Constant { price });
    r
}

/// Distribution of the price faced by one group, as an exact pushforward.
#[derive(Debug, Clone)]
pub struct PriceDistribution<'a> {
    slice: &'a MarketSlice,
    theta: Group,
    segments: Vec<&'a Segment>,
}

fn sale_tolerance(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

impl<'a> PriceDistribution<'a> {
    /// `P(price <= p)`.
    pub fn cdf(&self, p: f64) -> f64 {
        self.segments.iter().map(|s| self.mass_le(s, s.v_lo, s.v_hi, p)).sum()
    }

    /// Point masses `(price, mass)` from constant segments.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let f = self.slice.dist(self.theta);
        self.segments
            .iter()
            .filter_map(|s| match s.formula {
                Formula::Constant { price } => Some((price, f.cdf(s.v_hi) - f.cdf(s.v_lo))),
                Formula::MaxWithCost if s.v_lo < self.slice.c() => {
                    Some((self.slice.c(), f.cdf(s.v_hi.min(self.slice.c())) - f.cdf(s.v_lo)))
                }
                _ => None,
            })
            .collect()
    }

    /// Mass of values in `[a, b)` of segment `s` whose price is at most `p`.
    fn mass_le(&self, s: &Segment, a: f64, b: f64, p: f64) -> f64 {
        let slice = self.slice;
        let f = slice.dist(self.theta);
        let (fa, fb) = (f.cdf(a), f.cdf(b));
        let within = |x: f64| x.clamp(fa, fb) - fa;
        let all = fb - fa;
        match s.formula {
            Formula::Identity => within(f.cdf(p)),
            Formula::MaxWithCost => {
                if p < slice.c() {
                    0.0
                } else {
                    within(f.cdf(p))
                }
            }
            Formula::Constant { price } => {
                if p >= price {
                    all
                } else {
                    0.0
                }
            }
            Formula::QuantileShift { to, offset, .. } => {
                if p >= slice.cap() {
                    all
                } else {
                    within(slice.dist(to).cdf(p) - offset)
                }
            }
            Formula::DeltaUpperInverseOfComplement { level } => {
                let v_star = gap_profile(slice).map_or(f64::INFINITY, |g| g.v_star);
                if p >= slice.cap() {
                    all
                } else if p < v_star {
                    0.0
                } else {
                    within(level - delta(slice, p))
                }
            }
            Formula::DeltaLowerInverseShift { offset } => {
                let v_star = gap_profile(slice).map_or(f64::NEG_INFINITY, |g| g.v_star);
                if p >= v_star {
                    all
                } else {
                    within(delta(slice, p) - offset)
                }
            }
        }
    }
}

/// Pushforward of the group's value distribution through the rule.
pub fn price_cdf<'a>(rule: &'a PricingRule, slice: &'a MarketSlice, theta: Group) -> Result<PriceDistribution<'a>> {
    let segments: Vec<&Segment> = rule.group(theta).collect();
    for s in &segments {
        let b = s.v_hi.min(slice.cap());
        if !(b > s.v_lo) {
            continue;
        }
        let pts = [s.v_lo, 0.5 * (s.v_lo + b), b];
        let prices = pts.map(|v| segment_price(slice, s, v));
        if prices.iter().any(|p| p.is_nan()) || prices[1] < prices[0] - 1e-9 || prices[2] < prices[1] - 1e-9 {
            return Err(Error::NonMonotoneSegment { lo: s.v_lo, hi: s.v_hi });
        }
    }
    Ok(PriceDistribution { slice, theta, segments })
}

fn price_grid(rule: &PricingRule, slice: &MarketSlice, n: usize) -> Vec<f64> {
    let top = slice.cap();
    let mut grid: Vec<f64> = (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect();
    for s in &rule.segments {
        for v in [s.v_lo, s.v_hi.min(top)] {
            let p = segment_price(slice, s, v);
            grid.extend([p, p - 1e-9, p + 1e-9]);
        }
    }
    grid.extend([slice.c(), slice.c() - 1e-9]);
    if let Ok(gp) = gap_profile(slice) {
        grid.push(gp.v_star);
    }
    grid.retain(|p| p.is_finite());
    grid
}

/// Largest gap between the two groups' price cdfs over a price grid.
pub fn check_nondiscrimination(rule: &PricingRule, slice: &MarketSlice) -> Result<f64> {
    let l = price_cdf(rule, slice, Group::L)?;
    let h = price_cdf(rule, slice, Group::H)?;
    Ok(price_grid(rule, slice, ND_GRID).iter().fold(0.0f64, |m, &p| m.max((l.cdf(p) - h.cdf(p)).abs())))
}

/// A sub-interval of a segment on which the consumer either always buys or never does.
#[derive(Debug, Clone)]
pub struct SalePiece<'a> {
    pub segment: &'a Segment,
    pub a: f64,
    pub b: f64,
    pub sale: bool,
}

/// Split a group's segments where the sale decision `price <= v` flips,
/// truncating the support at its numeric cap.
pub fn sale_pieces<'a>(rule: &'a PricingRule, slice: &MarketSlice, theta: Group) -> Vec<SalePiece<'a>> {
    const SCAN: usize = 64;
    let mut out = Vec::new();
    for s in rule.group(theta) {
        let b = s.v_hi.min(slice.cap());
        if !(b > s.v_lo) {
            continue;
        }
        if s.formula == Formula::Identity {
            out.push(SalePiece { segment: s, a: s.v_lo, b, sale: true });
            continue;
        }
        let surplus = |v: f64| v - segment_price(slice, s, v) + sale_tolerance(v);
        let mut cuts = vec![s.v_lo];
        let mut prev_v = s.v_lo;
        let mut prev_buy = surplus(s.v_lo) >= 0.0;
        for i in 1..=SCAN {
            let v = s.v_lo + (b - s.v_lo) * i as f64 / SCAN as f64;
            let buy = surplus(v) >= 0.0;
            if buy != prev_buy {
                let x = if buy {
                    bisect_increasing(|x| if surplus(x) >= 0.0 { 1.0 } else { -1.0 }, prev_v, v)
                } else {
                    bisect_increasing(|x| if surplus(x) >= 0.0 { -1.0 } else { 1.0 }, prev_v, v)
                };
                cuts.push(x);
            }
            prev_v = v;
            prev_buy = buy;
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                let mid = 0.5 * (w[0] + w[1]);
                out.push(SalePiece { segment: s, a: w[0], b: w[1], sale: surplus(mid) >= 0.0 });
            }
        }
    }
    out
}

/// Largest gap between the groups' joint distributions of (price, sale).
pub fn check_outcome_nondiscrimination(rule: &PricingRule, slice: &MarketSlice) -> Result<f64> {
    let l = price_cdf(rule, slice, Group::L)?;
    let h = price_cdf(rule, slice, Group::H)?;
    let pl = sale_pieces(rule, slice, Group::L);
    let ph = sale_pieces(rule, slice, Group::H);
    let joint = |d: &PriceDistribution, pieces: &[SalePiece], sale: bool, p: f64| -> f64 {
        pieces.iter().filter(|x| x.sale == sale).map(|x| d.mass_le(x.segment, x.a, x.b, p)).sum()
    };
    let mut gap = 0.0f64;
    for p in price_grid(rule, slice, ND_GRID) {
        for sale in [false, true] {
            gap = gap.max((joint(&l, &pl, sale, p) - joint(&h, &ph, sale, p)).abs());
        }
    }
    Ok(gap)
}
