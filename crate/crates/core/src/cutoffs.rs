//! Region classification and the cutoff systems.
//!
//! Region C1 is the case where the low group cannot be fully served at cost;
//! it is described by five cutoffs `κ1 ≤ κ2 ≤ κ3 ≤ κ4 < v* < κ5`. In C2 two
//! cutoffs `η_l, η_h` suffice, and C3 needs none.

use serde::{Deserialize, Serialize};

use crate::dist::{delta, gap_profile, lower_inverse, GapProfile, MarketSlice};
use crate::error::{Error, Result};
use crate::numeric::{bisect_decreasing, bisect_increasing, integrate, QUAD_TOL};

/// Residual tolerance for the five-cutoff system.
pub const KAPPA_TOL: f64 = 1e-8;
/// Residual tolerance for the noisy-signal system.
pub const KAPPA_TILDE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    C1,
    C2,
    C3,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::C1 => "C1",
            Region::C2 => "C2",
            Region::C3 => "C3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Tilde,
}

/// Five cutoffs with the residuals of the equations they solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub k: [f64; 5],
    pub residuals: [f64; 5],
    pub variant: Variant,
    /// Set when the support is so narrow that the middle cutoffs collapse onto
    /// its lower end; the last equation then holds only as an inequality.
    pub boundary: bool,
}

impl Kappa {
    pub fn k1(&self) -> f64 {
        self.k[0]
    }
    pub fn k2(&self) -> f64 {
        self.k[1]
    }
    pub fn k3(&self) -> f64 {
        self.k[2]
    }
    pub fn k4(&self) -> f64 {
        self.k[3]
    }
    pub fn k5(&self) -> f64 {
        self.k[4]
    }
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

/// Cutoffs for region C2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub eta_l: f64,
    pub eta_h: f64,
}

/// Region-dispatched cutoffs of a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region")]
pub enum Cutoffs {
    C1(Kappa),
    C2(Eta),
    C3,
}

impl Cutoffs {
    pub fn region(&self) -> Region {
        match self {
            Cutoffs::C1(_) => Region::C1,
            Cutoffs::C2(_) => Region::C2,
            Cutoffs::C3 => Region::C3,
        }
    }
}

/// Solve whichever cutoff system the slice's region calls for.
pub fn solve(slice: &MarketSlice) -> Result<Cutoffs> {
    Ok(match classify_region(slice)? {
        Region::C1 => Cutoffs::C1(solve_kappa(slice)?),
        Region::C2 => Cutoffs::C2(solve_eta(slice)?),
        Region::C3 => Cutoffs::C3,
    })
}

pub fn classify_region(slice: &MarketSlice) -> Result<Region> {
    let gp = gap_profile(slice)?;
    let at_cost = slice.f_l().cdf(slice.c());
    Ok(if at_cost < gp.tv {
        Region::C1
    } else if slice.c() < gp.v_star {
        Region::C2
    } else {
        Region::C3
    })
}

fn require(slice: &MarketSlice, want: Region) -> Result<GapProfile> {
    let found = classify_region(slice)?;
    if found != want {
        return Err(Error::WrongRegion { expected: want.to_string(), found: found.to_string() });
    }
    gap_profile(slice)
}

/// Residuals of the five-cutoff system at `k`.
pub fn kappa_residuals(slice: &MarketSlice, k: &[f64; 5]) -> [f64; 5] {
    let (a, c) = (slice.alpha(), slice.c());
    let fl2 = slice.f_l().cdf(k[1]);
    [
        fl2 - delta(slice, k[2]) - slice.f_h().cdf(k[0]),
        fl2 - delta(slice, k[3]),
        fl2 - delta(slice, k[4]),
        (k[0] - c) - (1.0 - a) * (k[2] - c),
        (k[0] - c) - a * (k[4] - k[3]),
    ]
}

/// Search interval `[v̂, ṽ]` for the top cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointBracket {
    pub v_hat: f64,
    pub v_tilde: f64,
}

fn reflect_h(slice: &MarketSlice, gp: GapProfile, v: f64) -> f64 {
    v - lower_inverse(slice, gp, delta(slice, v))
}

/// `Δ(κ5) - Δ(κ3(κ5)) - F_h(κ1(κ5))`; nonincreasing on the bracket.
pub fn fixed_point_residual(slice: &MarketSlice, k5: f64) -> Result<f64> {
    let gp = gap_profile(slice)?;
    Ok(fixed_point_residual_with(slice, gp, k5))
}

fn fixed_point_residual_with(slice: &MarketSlice, gp: GapProfile, k5: f64) -> f64 {
    let (a, c) = (slice.alpha(), slice.c());
    let ah = a * reflect_h(slice, gp, k5);
    delta(slice, k5) - delta(slice, ah / (1.0 - a) + c) - slice.f_h().cdf(ah + c)
}

pub fn fixed_point_bracket(slice: &MarketSlice) -> Result<FixedPointBracket> {
    let gp = require(slice, Region::C1)?;
    let (a, c, lo, cap) = (slice.alpha(), slice.c(), slice.lo(), slice.cap());
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::UnsupportedConfiguration(format!("cutoffs need 0 < alpha < 1, got {a}")));
    }
    let v_tilde =
        bisect_increasing(|v| a * reflect_h(slice, gp, v) - (1.0 - a) * (gp.v_star - c), gp.v_star, cap);
    let v_hat = if lo <= c {
        gp.v_star
    } else {
        bisect_increasing(|v| a * reflect_h(slice, gp, v) - (1.0 - a) * (lo - c), gp.v_star, v_tilde)
    };
    Ok(FixedPointBracket { v_hat, v_tilde })
}

/// Number of sign changes of the fixed-point residual on an `n`-point scan of the bracket.
pub fn count_fixed_point_roots(slice: &MarketSlice, n: usize) -> Result<usize> {
    let gp = gap_profile(slice)?;
    let b = fixed_point_bracket(slice)?;
    let mut changes = 0;
    let mut prev = fixed_point_residual_with(slice, gp, b.v_hat);
    for i in 1..n {
        let v = b.v_hat + (b.v_tilde - b.v_hat) * i as f64 / (n - 1) as f64;
        let r = fixed_point_residual_with(slice, gp, v);
        if (prev > 0.0 && r <= 0.0) || (prev < 0.0 && r >= 0.0) {
            changes += 1;
        }
        if r != 0.0 {
            prev = r;
        }
    }
    Ok(changes)
}

/// Five cutoffs of a C1 slice, built by bisection on the top cutoff.
pub fn solve_kappa(slice: &MarketSlice) -> Result<Kappa> {
    let b = fixed_point_bracket(slice)?;
    let gp = gap_profile(slice)?;
    let (a, c, lo, hi) = (slice.alpha(), slice.c(), slice.lo(), slice.hi());

    if hi.is_finite() && a * (hi - c) <= lo - c {
        let k = [c + (1.0 - a) * (lo - c), lo, lo, lo, hi];
        return Ok(Kappa { k, residuals: kappa_residuals(slice, &k), variant: Variant::Standard, boundary: true });
    }

    let f = |v: f64| fixed_point_residual_with(slice, gp, v);
    if f(b.v_hat) < -KAPPA_TOL || f(b.v_tilde) > KAPPA_TOL {
        return Err(Error::NoConvergence { what: "top cutoff".into(), lo: b.v_hat, hi: b.v_tilde });
    }
    let k5 = bisect_decreasing(f, b.v_hat, b.v_tilde);
    let k4 = lower_inverse(slice, gp, delta(slice, k5));
    let h = k5 - k4;
    let k1 = a * h + c;
    let k3 = a * h / (1.0 - a) + c;
    let k2 = slice.f_l().quantile(delta(slice, k5));
    let k = [k1, k2, k3, k4, k5];
    Ok(Kappa { k, residuals: kappa_residuals(slice, &k), variant: Variant::Standard, boundary: false })
}

/// Cutoffs of a C2 slice.
pub fn solve_eta(slice: &MarketSlice) -> Result<Eta> {
    let gp = require(slice, Region::C2)?;
    let level = slice.f_l().cdf(slice.c()) - gp.tv;
    let eta_l = slice.f_l().quantile(level.max(0.0));
    let eta_h = slice.f_h().quantile(slice.f_l().cdf(eta_l));
    Ok(Eta { eta_l, eta_h })
}

fn beta_integral(slice: &MarketSlice, shift: f64, a: f64, b: f64) -> f64 {
    let f = |z: f64| {
        let beta = slice.f_h().quantile(slice.f_l().cdf(z) - shift).min(slice.cap());
        let s = z + beta;
        if s > 0.0 {
            (beta / s).powi(2)
        } else {
            0.0
        }
    };
    integrate(f, a, b, QUAD_TOL)
}

/// Middle expression of the noisy-signal system for candidate `κ̃2, κ̃3`.
fn tilde_middle(slice: &MarketSlice, k2: f64, k3: f64) -> f64 {
    k3 / 4.0 - beta_integral(slice, delta(slice, k3), k2, k3)
}

/// Right expression of the noisy-signal system for candidate `κ̃4, κ̃5`:
/// the `l` dual potential below `κ̃2` implied by continuity of the `h`
/// potential at `κ̃5`.
fn tilde_right(slice: &MarketSlice, k4: f64, k5: f64) -> f64 {
    beta_integral(slice, delta(slice, k4), k4, k5) - 0.25 * (k5 - k4)
}

/// Residuals of the noisy-signal system at `k`.
pub fn kappa_tilde_residuals(slice: &MarketSlice, k: &[f64; 5]) -> [f64; 5] {
    let fl2 = slice.f_l().cdf(k[1]);
    let harmonic = k[0] * k[1] / (k[0] + k[1]);
    [
        fl2 - delta(slice, k[2]) - slice.f_h().cdf(k[0]),
        fl2 - delta(slice, k[3]),
        fl2 - delta(slice, k[4]),
        harmonic - tilde_middle(slice, k[1], k[2]),
        harmonic - tilde_right(slice, k[3], k[4]),
    ]
}

/// Given the top cutoff, solve the other four and return them with the
/// remaining residual of the first equation.
fn tilde_inner(slice: &MarketSlice, gp: GapProfile, k5: f64) -> ([f64; 5], f64) {
    let k4 = lower_inverse(slice, gp, delta(slice, k5));
    let k2 = slice.f_l().quantile(delta(slice, k5));
    let t = tilde_right(slice, k4, k5);
    let k3 = bisect_increasing(|x| tilde_middle(slice, k2, x) - t, k2, gp.v_star);
    let k1 = if k2 > t { t * k2 / (k2 - t) } else { f64::INFINITY };
    let fh1 = if k1.is_finite() { slice.f_h().cdf(k1) } else { 1.0 };
    let r = slice.f_l().cdf(k2) - delta(slice, k3) - fh1;
    ([k1, k2, k3, k4, k5], r)
}

/// Cutoffs for the noisy-signal objective with uniform noise, zero cost and
/// equal group shares.
pub fn solve_kappa_tilde(slice: &MarketSlice) -> Result<Kappa> {
    if slice.c() != 0.0 || slice.alpha() != 0.5 {
        return Err(Error::UnsupportedConfiguration(format!(
            "the noisy-signal system is defined for c = 0 and alpha = 1/2, got c = {}, alpha = {}",
            slice.c(),
            slice.alpha()
        )));
    }
    let gp = gap_profile(slice)?;
    let (v_star, cap) = (gp.v_star, slice.cap());
    let resid = |k5: f64| tilde_inner(slice, gp, k5).1;

    const SCAN: usize = 400;
    let at = |i: usize| v_star + (cap - v_star) * (i as f64 / SCAN as f64).powi(3);
    let mut lo = at(1);
    let mut bracket = None;
    let mut r_lo = resid(lo);
    for i in 2..=SCAN {
        let v = at(i);
        let r = resid(v);
        if r_lo > 0.0 && r <= 0.0 {
            bracket = Some((lo, v));
            break;
        }
        lo = v;
        r_lo = r;
    }
    let (a, b) = bracket.ok_or(Error::NoConvergence { what: "noisy-signal top cutoff".into(), lo: v_star, hi: cap })?;
    let k5 = bisect_decreasing(resid, a, b);
    let (k, _) = tilde_inner(slice, gp, k5);
    let residuals = kappa_tilde_residuals(slice, &k);
    let out = Kappa { k, residuals, variant: Variant::Tilde, boundary: false };
    if out.max_residual() > KAPPA_TILDE_TOL {
        return Err(Error::NoConvergence { what: "noisy-signal cutoffs".into(), lo: a, hi: b });
    }
    Ok(out)
}
