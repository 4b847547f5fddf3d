//! Closed-form dual certificates for the pair-profit transport problem.

use rayon::prelude::*;
use serde::Serialize;

use crate::cutoffs::{self, Cutoffs, Kappa};
use crate::dist::{gap_profile, Group, MarketSlice};
use crate::error::{Error, Result};
use crate::matching::Coupling;
use crate::numeric::{integrate_split, QUAD_TOL};

/// Most negative slack tolerated by [`check_feasibility`].
pub const FEASIBILITY_FLOOR: f64 = -1e-6;
/// Largest slack tolerated on a coupling's support.
pub const SLACKNESS_TOL: f64 = 1e-6;

/// `slope * v + intercept` on `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineBranch {
    #[serde(serialize_with = "finite_or_null")]
    pub lo: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// A function built from affine branches on left-open, right-closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Piecewise(pub Vec<AffineBranch>);

impl Piecewise {
    fn from_cuts(cuts: &[f64], coeffs: &[(f64, f64)]) -> Self {
        let mut lo = f64::NEG_INFINITY;
        let mut out = Vec::with_capacity(coeffs.len());
        for (i, &(slope, intercept)) in coeffs.iter().enumerate() {
            let hi = cuts.get(i).copied().unwrap_or(f64::INFINITY);
            out.push(AffineBranch { lo, hi, slope, intercept });
            lo = hi;
        }
        Piecewise(out)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let b = self.0.iter().find(|b| v <= b.hi).unwrap_or_else(|| self.0.last().expect("nonempty"));
        b.slope * v + b.intercept
    }

    /// Largest jump between adjacent branches.
    pub fn max_jump(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| {
                let x = w[0].hi;
                ((w[0].slope - w[1].slope) * x + w[0].intercept - w[1].intercept).abs()
            })
            .fold(0.0, f64::max)
    }

    fn cuts(&self) -> Vec<f64> {
        self.0.iter().map(|b| b.hi).filter(|x| x.is_finite()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    C1 { kappa: [f64; 5] },
    /// Gains are split by group share: full extraction.
    Degenerate,
}

/// Functions `φ` of `v_l` and `ψ` of `v_h` with `φ + ψ >= π` everywhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub c: f64,
    pub alpha: f64,
    #[serde(flatten)]
    pub regime: Regime,
    pub phi: Piecewise,
    pub psi: Piecewise,
}

impl DualCertificate {
    pub fn pair_profit(&self, v_l: f64, v_h: f64) -> f64 {
        let (c, a) = (self.c, self.alpha);
        (v_l.min(v_h) - c).max(a * (v_h - c).max(0.0)).max((1.0 - a) * (v_l - c).max(0.0))
    }

    /// `φ(v_l) + ψ(v_h) - π(v_l, v_h)`.
    pub fn slack(&self, v_l: f64, v_h: f64) -> f64 {
        self.phi.eval(v_l) + self.psi.eval(v_h) - self.pair_profit(v_l, v_h)
    }

    fn kappa(&self) -> Option<[f64; 5]> {
        match self.regime {
            Regime::C1 { kappa } => Some(kappa),
            Regime::Degenerate => None,
        }
    }
}

/// Certificate for the slice's region.
pub fn build_duals(slice: &MarketSlice) -> Result<DualCertificate> {
    match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => Ok(duals_from_kappa(slice, &k)),
        _ => Ok(degenerate_duals(slice)),
    }
}

/// Five-branch certificate for a given cutoff vector.
pub fn duals_from_kappa(slice: &MarketSlice, k: &Kappa) -> DualCertificate {
    let (c, a) = (slice.c(), slice.alpha());
    let [k1, _, k3, k4, k5] = k.k;
    let m = k1 - c;
    let phi = Piecewise::from_cuts(
        &[k3, k4, k5],
        &[(0.0, m), (1.0 - a, -(1.0 - a) * c), (1.0, -c - a * (k4 - c)), (1.0 - a, -(1.0 - a) * c + m)],
    );
    let psi = Piecewise::from_cuts(
        &[k1, k3, k4, k5],
        &[(0.0, 0.0), (1.0, -k1), (a, -a * c), (0.0, a * (k4 - c)), (a, -a * c - m)],
    );
    DualCertificate { c, alpha: a, regime: Regime::C1 { kappa: k.k }, phi, psi }
}

/// `φ = (1 - α)(v - c)^+`, `ψ = α(v - c)^+`.
pub fn degenerate_duals(slice: &MarketSlice) -> DualCertificate {
    let (c, a) = (slice.c(), slice.alpha());
    let phi = Piecewise::from_cuts(&[c], &[(0.0, 0.0), (1.0 - a, -(1.0 - a) * c)]);
    let psi = Piecewise::from_cuts(&[c], &[(0.0, 0.0), (a, -a * c)]);
    DualCertificate { c, alpha: a, regime: Regime::Degenerate, phi, psi }
}

fn grid(slice: &MarketSlice, cert: &DualCertificate, theta: Group, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n).map(|i| slice.dist(theta).quantile((i as f64 + 0.5) / n as f64)).collect();
    g.extend(cert.kappa().into_iter().flatten());
    g.extend([slice.c(), slice.lo()]);
    if let Ok(gp) = gap_profile(slice) {
        g.push(gp.v_star);
    }
    g.retain(|x| x.is_finite() && *x >= slice.lo() && *x <= slice.cap());
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Minimum slack over a quantile grid and the pair attaining it.
pub fn feasibility_report(cert: &DualCertificate, slice: &MarketSlice, n: usize) -> (f64, (f64, f64)) {
    let gl = grid(slice, cert, Group::L, n);
    let gh = grid(slice, cert, Group::H, n);
    gl.par_iter()
        .map(|&v_l| {
            let phi = cert.phi.eval(v_l);
            gh.iter()
                .map(|&v_h| (phi + cert.psi.eval(v_h) - cert.pair_profit(v_l, v_h), (v_l, v_h)))
                .fold((f64::INFINITY, (v_l, f64::NAN)), |a, b| if b.0 < a.0 { b } else { a })
        })
        .reduce(|| (f64::INFINITY, (f64::NAN, f64::NAN)), |a, b| if b.0 < a.0 { b } else { a })
}

/// Minimum slack on an `n × n` grid; errors below [`FEASIBILITY_FLOOR`].
pub fn check_feasibility(cert: &DualCertificate, slice: &MarketSlice, n: usize) -> Result<f64> {
    let (slack, (v_l, v_h)) = feasibility_report(cert, slice, n);
    if slack < FEASIBILITY_FLOOR {
        return Err(Error::InfeasibleCertificate { v_l, v_h, slack });
    }
    Ok(slack)
}

/// Largest `|φ + ψ - π|` over the coupling's atoms and the atom attaining it.
pub fn slackness_report(cert: &DualCertificate, coupling: &Coupling) -> (f64, (f64, f64)) {
    coupling
        .atoms
        .iter()
        .map(|a| (cert.slack(a.v_l, a.v_h).abs(), (a.v_l, a.v_h)))
        .fold((0.0, (f64::NAN, f64::NAN)), |a, b| if b.0 > a.0 { b } else { a })
}

pub fn check_complementary_slackness(cert: &DualCertificate, coupling: &Coupling) -> Result<f64> {
    let (gap, (v_l, v_h)) = slackness_report(cert, coupling);
    if gap > SLACKNESS_TOL {
        return Err(Error::SlacknessViolation { v_l, v_h, gap });
    }
    Ok(gap)
}

/// `∫ φ dF_l + ∫ ψ dF_h`.
pub fn dual_value(cert: &DualCertificate, slice: &MarketSlice) -> f64 {
    let part = |f: &Piecewise, theta: Group| {
        let d = slice.dist(theta);
        let mut cuts = f.cuts();
        cuts.extend(slice.breakpoints());
        let (lo, hi) = (slice.lo(), slice.cap());
        cuts.extend((1..16).map(|i| lo + (hi - lo) * i as f64 / 16.0));
        let below = f.eval(lo) * d.cdf(lo);
        below + integrate_split(|v| f.eval(v) * d.pdf(v), lo, hi, &cuts, QUAD_TOL)
    };
    part(&cert.phi, Group::L) + part(&cert.psi, Group::H)
}

/// Dual objective against equal-weight atoms of each marginal.
pub fn dual_value_on_atoms(cert: &DualCertificate, v_l: &[f64], v_h: &[f64]) -> f64 {
    let mean = |xs: &[f64], f: &Piecewise| xs.iter().map(|&x| f.eval(x)).sum::<f64>() / xs.len() as f64;
    mean(v_l, &cert.phi) + mean(v_h, &cert.psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{build_rho_star, build_rho_tilde};
    use crate::welfare::p_star_report;

    fn exp13(c: f64) -> MarketSlice {
        MarketSlice::exponential(1.0, 3.0, 0.5, c).unwrap()
    }

    #[test]
    fn c1_certificate() {
        let s = exp13(0.0);
        let cert = build_duals(&s).unwrap();
        let k = cutoffs::solve_kappa(&s).unwrap();
        assert_eq!(cert.psi.eval(0.5 * k.k1()), 0.0);
        assert!(cert.phi.max_jump() < 1e-9, "phi jump {}", cert.phi.max_jump());
        assert!(cert.psi.max_jump() < 1e-9, "psi jump {}", cert.psi.max_jump());
        assert!(check_feasibility(&cert, &s, 300).unwrap() >= FEASIBILITY_FLOOR);
        let mid = 0.5 * (k.k3() + k.k4());
        assert!(cert.slack(mid, mid).abs() < 1e-12);
        let rho = build_rho_star(&s, 5_000).unwrap();
        assert!(check_complementary_slackness(&cert, &rho).unwrap() <= SLACKNESS_TOL);
        check_complementary_slackness(&cert, &build_rho_tilde(&s, 5_000).unwrap()).unwrap();
        assert!(cert.slack(0.5 * k.k2(), k.k3()) > 1e-3);
        let (report, _) = p_star_report(&s).unwrap();
        let dv = dual_value(&cert, &s);
        assert!((dv - report.profit).abs() / report.profit < 1e-5, "{dv} vs {}", report.profit);
    }

    #[test]
    fn degenerate_certificate() {
        let s = exp13(2.0);
        let cert = build_duals(&s).unwrap();
        assert_eq!(cert.regime, Regime::Degenerate);
        assert!((cert.phi.eval(3.0) - 0.5).abs() < 1e-15);
        assert_eq!(cert.slack(1.0, 5.0), 0.0);
        check_feasibility(&cert, &s, 200).unwrap();
        assert!((dual_value(&cert, &s) - s.total_gains()).abs() < 1e-8);
    }

    #[test]
    fn tampered_certificate_is_caught() {
        let s = exp13(0.0);
        let mut k = cutoffs::solve_kappa(&s).unwrap();
        k.k[0] += 0.01;
        let cert = duals_from_kappa(&s, &k);
        let rho = build_rho_star(&s, 5_000).unwrap();
        assert!(matches!(check_complementary_slackness(&cert, &rho), Err(Error::SlacknessViolation { .. })));
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(build_duals(&exp13(0.0)).unwrap()).unwrap();
        assert_eq!(v["regime"], "c1");
        assert_eq!(v["kappa"].as_array().unwrap().len(), 5);
        assert!(v["phi"][0]["lo"].is_null());
        assert_eq!(v["psi"].as_array().unwrap().len(), 5);
    }
}
