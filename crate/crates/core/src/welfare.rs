//! Profit, consumer surplus and welfare loss of pricing rules.

use serde::Serialize;

use crate::cutoffs::{self, Cutoffs, Kappa, Region};
use crate::dist::{delta, Group, Market, MarketSlice};
use crate::error::{Error, Result};
use crate::numeric::{bisect_increasing, integrate, integrate_split, QUAD_TOL};
use crate::pricing::{build_p_star, sale_pieces, segment_price, Formula, PricingRule};

/// Profit from selling to a pair at the better of the two values.
pub fn pair_profit(slice: &MarketSlice, v_l: f64, v_h: f64) -> f64 {
    let (c, a) = (slice.c(), slice.alpha());
    (v_l.min(v_h) - c).max(a * (v_h - c).max(0.0)).max((1.0 - a) * (v_l - c).max(0.0))
}

/// Price that attains [`pair_profit`]. Ties go to the lower value, so both
/// consumers buy whenever that is optimal. When nobody can be served at or
/// above cost the price is `c`.
pub fn optimal_pair_price(slice: &MarketSlice, v_l: f64, v_h: f64) -> f64 {
    let (c, a) = (slice.c(), slice.alpha());
    let lo = v_l.min(v_h);
    if v_l.max(v_h) < c {
        return c;
    }
    let both = lo - c;
    let only_h = a * (v_h - c);
    let only_l = (1.0 - a) * (v_l - c);
    if both >= only_h && both >= only_l {
        lo
    } else if only_h >= only_l {
        v_h
    } else {
        v_l
    }
}

/// Per-group averages under one rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GroupWelfare {
    /// `E[(p - c) 1{sale}]`.
    pub margin: f64,
    /// `E[(v - p) 1{sale}]`.
    pub cs: f64,
    /// `E[1{no sale} (v - c)^+]`.
    pub wl: f64,
    /// Share of the group that buys.
    pub sale_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub c: f64,
    pub alpha: f64,
    pub weight: f64,
    pub region: Option<Region>,
    pub profit: f64,
    pub cs_l: f64,
    pub cs_h: f64,
    pub wl_l: f64,
    pub wl_h: f64,
    pub gains: f64,
}

impl WelfareReport {
    pub fn share(&self) -> f64 {
        self.profit / self.gains
    }

    /// Gains from trade minus profit, consumer surplus and welfare loss.
    pub fn accounting_residual(&self) -> f64 {
        let a = self.alpha;
        self.gains - self.profit - a * (self.cs_h + self.wl_h) - (1.0 - a) * (self.cs_l + self.wl_l)
    }

    /// Weighted totals over a market's slices; `c`, `alpha` and `region` of
    /// the result are meaningless and left at zero or `None`.
    pub fn aggregate(reports: &[WelfareReport]) -> WelfareReport {
        let mut out = WelfareReport {
            c: 0.0,
            alpha: 0.0,
            weight: 0.0,
            region: None,
            profit: 0.0,
            cs_l: 0.0,
            cs_h: 0.0,
            wl_l: 0.0,
            wl_h: 0.0,
            gains: 0.0,
        };
        for r in reports {
            let w = r.weight;
            out.weight += w;
            out.profit += w * r.profit;
            out.cs_l += w * r.cs_l;
            out.cs_h += w * r.cs_h;
            out.wl_l += w * r.wl_l;
            out.wl_h += w * r.wl_h;
            out.gains += w * r.gains;
        }
        out
    }
}

/// Integrate margins, surplus and losses of one group over the rule's segments.
pub fn group_welfare(rule: &PricingRule, slice: &MarketSlice, theta: Group) -> GroupWelfare {
    let f = slice.dist(theta);
    let c = slice.c();
    let mut cuts = slice.breakpoints();
    cuts.push(c);
    let mut out = GroupWelfare::default();
    for piece in sale_pieces(rule, slice, theta) {
        let (a, b) = (piece.a, piece.b);
        let mut local = cuts.clone();
        local.extend((1..8).map(|i| a + (b - a) * i as f64 / 8.0));
        if piece.sale {
            out.sale_mass += f.cdf(b) - f.cdf(a);
            let seg = piece.segment;
            if seg.formula == Formula::Identity {
                out.margin += integrate_split(|v| (v - c) * f.pdf(v), a, b, &local, QUAD_TOL);
            } else {
                out.margin += integrate_split(|v| (segment_price(slice, seg, v) - c) * f.pdf(v), a, b, &local, QUAD_TOL);
                out.cs += integrate_split(|v| (v - segment_price(slice, seg, v)) * f.pdf(v), a, b, &local, QUAD_TOL);
            }
        } else {
            out.wl += integrate_split(|v| (v - c).max(0.0) * f.pdf(v), a, b, &local, QUAD_TOL);
        }
    }
    out
}

/// Profit and per-group surplus and losses of a rule on one slice.
pub fn welfare_report(rule: &PricingRule, slice: &MarketSlice) -> WelfareReport {
    let l = group_welfare(rule, slice, Group::L);
    let h = group_welfare(rule, slice, Group::H);
    let a = slice.alpha();
    WelfareReport {
        c: slice.c(),
        alpha: a,
        weight: 1.0,
        region: cutoffs::classify_region(slice).ok(),
        profit: a * h.margin + (1.0 - a) * l.margin,
        cs_l: l.cs,
        cs_h: h.cs,
        wl_l: l.wl,
        wl_h: h.wl,
        gains: slice.total_gains(),
    }
}

/// Reports of a rule family over every slice of a market, with slice weights set.
pub fn market_report<F>(market: &Market, build: F) -> Result<Vec<WelfareReport>>
where
    F: Fn(&MarketSlice) -> Result<PricingRule>,
{
    market
        .slices()
        .iter()
        .map(|(s, w)| {
            let mut r = welfare_report(&build(s)?, s);
            r.weight = *w;
            Ok(r)
        })
        .collect()
}

/// Consumer surplus of the optimal rule on a `C1` slice as quantile
/// integrals, independent of the segment-wise integration. Returns `(cs_l, cs_h)`.
pub fn closed_form_cs(slice: &MarketSlice, k: &Kappa) -> (f64, f64) {
    let (fl, fh) = (slice.f_l(), slice.f_h());
    let d4 = delta(slice, k.k4());
    let d3 = delta(slice, k.k3());
    let cs_h = integrate(|q| fh.quantile(q) - fl.quantile(q + d4), fh.cdf(k.k4()), fh.cdf(k.k5()), QUAD_TOL);
    let cs_l = integrate(|q| fl.quantile(q) - fh.quantile(q - d3), fl.cdf(k.k2()), fl.cdf(k.k3()), QUAD_TOL);
    (cs_l, cs_h)
}

/// The optimal rule's report together with the largest relative discrepancy
/// against [`closed_form_cs`] (zero outside `C1`).
pub fn p_star_report(slice: &MarketSlice) -> Result<(WelfareReport, f64)> {
    let rule = build_p_star(slice)?;
    let report = welfare_report(&rule, slice);
    let mismatch = match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => {
            let (cs_l, cs_h) = closed_form_cs(slice, &k);
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
            rel(report.cs_l, cs_l).max(rel(report.cs_h, cs_h))
        }
        _ => 0.0,
    };
    Ok((report, mismatch))
}

/// Lower bounds on the optimal profit as a share of gains from trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShareBound {
    /// Relative excess of `h` gains over `l` gains.
    pub r: f64,
    pub bound: f64,
    /// Bound that holds for every `α`.
    pub weak_bound: f64,
}

/// Bounds from the gains ratio `r` and the `h` share `alpha`.
pub fn share_bound_from_ratio(alpha: f64, r: f64) -> ShareBound {
    ShareBound { r, bound: 1f64.max(alpha * (r + 1.0)) / (alpha * r + 1.0), weak_bound: (r + 1.0) / (2.0 * r + 1.0) }
}

pub fn profit_share_bound(slice: &MarketSlice) -> Result<ShareBound> {
    let gl = slice.gains(Group::L);
    if !(gl > 1e-15) {
        return Err(Error::ZeroGains);
    }
    Ok(share_bound_from_ratio(slice.alpha(), slice.gains(Group::H) / gl - 1.0))
}

fn uniform_revenue_at(market: &Market, p: f64) -> f64 {
    market
        .slices()
        .iter()
        .map(|(s, w)| {
            let a = s.alpha();
            let demand = a * (1.0 - s.f_h().cdf(p)) + (1.0 - a) * (1.0 - s.f_l().cdf(p));
            w * (p - s.c()) * demand
        })
        .sum()
}

/// Best single posted price for the whole market and its profit.
pub fn uniform_price_revenue(market: &Market) -> (f64, f64) {
    const GRID: usize = 4_000;
    let lo = market.slices().iter().map(|(s, _)| s.c().max(s.lo())).fold(f64::INFINITY, f64::min);
    let hi = market.slices().iter().map(|(s, _)| s.cap()).fold(0.0, f64::max);
    let step = (hi - lo) / GRID as f64;
    let rev = |p: f64| uniform_revenue_at(market, p);
    let best = (0..=GRID).map(|i| lo + step * i as f64).max_by(|a, b| rev(*a).total_cmp(&rev(*b))).unwrap_or(lo);
    // Golden-section refinement on the neighbouring cells.
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if rev(x1) < rev(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let p = 0.5 * (a + b);
    if rev(p) >= rev(best) {
        (p, rev(p))
    } else {
        (best, rev(best))
    }
}

pub fn uniform_price_revenue_slice(slice: &MarketSlice) -> (f64, f64) {
    let m = Market::new(vec![(slice.clone(), 1.0)]).expect("a single slice with weight one is a valid market");
    uniform_price_revenue(&m)
}

/// Vertices `(profit, consumer surplus)` of the surplus triangle attainable
/// by unconstrained segmentation at zero cost.
pub fn bbm_triangle(market: &Market) -> Result<[(f64, f64); 3]> {
    if let Some((s, _)) = market.slices().iter().find(|(s, _)| s.c() > 0.0) {
        return Err(Error::UnsupportedConfiguration(format!("surplus triangle needs zero cost, got c = {}", s.c())));
    }
    let ev: f64 = market
        .slices()
        .iter()
        .map(|(s, w)| w * (s.alpha() * s.f_h().mean() + (1.0 - s.alpha()) * s.f_l().mean()))
        .sum();
    let (_, r) = uniform_price_revenue(market);
    Ok([(ev, 0.0), (r, 0.0), (r, ev - r)])
}

/// Smallest `α` at which the optimal rule leaves surplus to `l` consumers:
/// the root of `α (v̄ - c) = v̲ - c` when both ends are finite.
pub fn alpha_threshold(slice: &MarketSlice) -> Option<f64> {
    let (lo, hi, c) = (slice.lo(), slice.hi(), slice.c());
    if !hi.is_finite() {
        return Some(0.0);
    }
    Some(bisect_increasing(|a| a * (hi - c) - (lo - c), 0.0, 1.0))
}
