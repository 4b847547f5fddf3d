//! Optimal couplings of the two groups' values, held as weighted atoms.
//!
//! Sampling uses ChaCha8 seeded with `seed_from_u64(seed)`. Callers that
//! need several independent streams from one seed should derive them with
//! `set_stream`, which is how the CLI does it.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cutoffs::{self, Cutoffs, Eta, Kappa, Region};
use crate::dist::{delta, gap_profile, lower_inverse, Group, MarketSlice};
use crate::error::{Error, Result};
use crate::numeric::bisect_increasing;
use crate::welfare::{optimal_pair_price, pair_profit, p_star_report};

/// Smallest atom count accepted by the kernel discretizations.
pub const MIN_ATOMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Source {
    RhoStar,
    RhoTilde,
    /// Weight on `RhoStar`.
    Mixture(f64),
    OracleAssignment,
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::RhoStar => "rho_star".into(),
            Source::RhoTilde => "rho_tilde".into(),
            Source::Mixture(t) => format!("mixture({t})"),
            Source::OracleAssignment => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub v_l: f64,
    pub v_h: f64,
    pub weight: f64,
}

/// A discrete joint distribution of `(v_l, v_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub atoms: Vec<Atom>,
    pub source: Source,
}

impl Coupling {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Kolmogorov distance between one marginal and the slice's distribution.
    pub fn marginal_ks(&self, slice: &MarketSlice, theta: Group) -> f64 {
        let mut pts: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|a| (if theta == Group::L { a.v_l } else { a.v_h }, a.weight))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        weighted_ks(&pts, |x| slice.dist(theta).cdf(x))
    }

    /// Writes `v_l,v_h,weight,source` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["v_l", "v_h", "weight", "source"])?;
        let label = self.source.label();
        for a in &self.atoms {
            out.write_record([a.v_l.to_string(), a.v_h.to_string(), a.weight.to_string(), label.clone()])?;
        }
        out.flush()
    }
}

/// Kolmogorov distance of sorted weighted points from a continuous cdf.
pub fn weighted_ks(sorted: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let before = acc;
        while i < sorted.len() && sorted[i].0 == x {
            acc += sorted[i].1 / total;
            i += 1;
        }
        let f = cdf(x);
        worst = worst.max((f - before).abs()).max((f - acc).abs());
    }
    worst
}

fn h_atoms(slice: &MarketSlice, n: usize) -> Result<Vec<f64>> {
    if n < MIN_ATOMS {
        return Err(Error::OutOfRange(format!("need at least {MIN_ATOMS} atoms, got {n}")));
    }
    Ok((0..n).map(|i| slice.f_h().quantile((i as f64 + 0.5) / n as f64)).collect())
}

/// Atom above the top cutoff: the diagonal with weight `f_l/f_h`, the rest sent to `other`.
fn split(out: &mut Vec<Atom>, slice: &MarketSlice, v_h: f64, w: f64, other: f64) {
    let ratio = (slice.f_l().pdf(v_h) / slice.f_h().pdf(v_h)).clamp(0.0, 1.0);
    if ratio > 0.0 {
        out.push(Atom { v_l: v_h, v_h, weight: w * ratio });
    }
    if ratio < 1.0 {
        out.push(Atom { v_l: other, v_h, weight: w * (1.0 - ratio) });
    }
}

fn kernel_c1(slice: &MarketSlice, k: &Kappa, v_h: f64, w: f64, tilde: bool, out: &mut Vec<Atom>) -> Result<()> {
    let gp = gap_profile(slice)?;
    let fh = slice.f_h().cdf(v_h);
    let [k1, _, k3, k4, k5] = k.k;
    let (d3, d4, d5) = (delta(slice, k3), delta(slice, k4), delta(slice, k5));
    let v_l = if v_h <= k1 {
        lower_inverse(slice, gp, fh + d3)
    } else if v_h <= k3 && !tilde {
        slice.f_l().quantile(fh + d3)
    } else if v_h <= k4 {
        v_h
    } else if v_h <= k5 {
        slice.f_l().quantile(fh + d4)
    } else {
        let level = d5 - delta(slice, v_h);
        let other = if tilde { j_inverse(slice, k, level) } else { slice.f_l().quantile(level) };
        split(out, slice, v_h, w, other);
        return Ok(());
    };
    out.push(Atom { v_l, v_h, weight: w });
    Ok(())
}

/// `J(v) = min{F_l(v), Δ(v) + F_h(κ1)}` below `κ3` and `F_l(κ3)` above.
fn j_fn(slice: &MarketSlice, k: &Kappa, v: f64) -> f64 {
    if v <= k.k3() {
        slice.f_l().cdf(v).min(delta(slice, v) + slice.f_h().cdf(k.k1()))
    } else {
        delta(slice, k.k3()) + slice.f_h().cdf(k.k3())
    }
}

fn j_inverse(slice: &MarketSlice, k: &Kappa, y: f64) -> f64 {
    bisect_increasing(|v| j_fn(slice, k, v) - y, slice.lo(), k.k3())
}

fn kernel_c2(slice: &MarketSlice, eta: &Eta, v_h: f64, w: f64, out: &mut Vec<Atom>) -> Result<()> {
    let gp = gap_profile(slice)?;
    let c = slice.c();
    let fh = slice.f_h().cdf(v_h);
    let v_l = if v_h <= eta.eta_h {
        slice.f_l().quantile(fh)
    } else if v_h <= c {
        lower_inverse(slice, gp, fh - slice.f_h().cdf(eta.eta_h) + delta(slice, c))
    } else if v_h <= gp.v_star {
        v_h
    } else {
        let other = slice.f_l().quantile(gp.tv - delta(slice, v_h) + slice.f_l().cdf(eta.eta_l));
        split(out, slice, v_h, w, other);
        return Ok(());
    };
    out.push(Atom { v_l, v_h, weight: w });
    Ok(())
}

fn kernel_c3(slice: &MarketSlice, v_h: f64, w: f64, out: &mut Vec<Atom>) {
    let c = slice.c();
    if v_h <= c {
        out.push(Atom { v_l: slice.f_l().quantile(slice.f_h().cdf(v_h)), v_h, weight: w });
    } else {
        let other = slice.f_l().quantile(slice.f_l().cdf(c) - delta(slice, v_h));
        split(out, slice, v_h, w, other);
    }
}

/// Optimal coupling from `n` equal-mass `h` atoms pushed through the
/// region's optimal kernel.
pub fn build_rho_star(slice: &MarketSlice, n: usize) -> Result<Coupling> {
    let vs = h_atoms(slice, n)?;
    let w = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(2 * n);
    match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => return rho_from_kappa(slice, &k, n),
        Cutoffs::C2(eta) => {
            for v in vs {
                kernel_c2(slice, &eta, v, w, &mut atoms)?;
            }
        }
        Cutoffs::C3 => {
            for v in vs {
                kernel_c3(slice, v, w, &mut atoms);
            }
        }
    }
    Ok(Coupling { atoms, source: Source::RhoStar })
}

/// Five-cutoff coupling for any cutoff vector that satisfies the first line
/// of the system, so it also serves the noisy-signal cutoffs.
pub fn rho_from_kappa(slice: &MarketSlice, k: &Kappa, n: usize) -> Result<Coupling> {
    let vs = h_atoms(slice, n)?;
    let w = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(2 * n);
    for v in vs {
        kernel_c1(slice, k, v, w, false, &mut atoms)?;
    }
    Ok(Coupling { atoms, source: Source::RhoStar })
}

/// Optimal coupling that matches every `h` consumer in `(κ1, κ4]` with an
/// equal-valued `l` consumer, leaving no `l` surplus on the middle block.
pub fn build_rho_tilde(slice: &MarketSlice, n: usize) -> Result<Coupling> {
    let k = match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => k,
        other => {
            return Err(Error::WrongRegion { expected: Region::C1.to_string(), found: other.region().to_string() })
        }
    };
    let vs = h_atoms(slice, n)?;
    let w = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(2 * n);
    for v in vs {
        kernel_c1(slice, &k, v, w, true, &mut atoms)?;
    }
    Ok(Coupling { atoms, source: Source::RhoTilde })
}

/// `t ρ* + (1 - t) ρ̃` with `t` chosen so the `l` surplus equals `sigma_l`.
pub fn mix_for_target_surplus(slice: &MarketSlice, sigma_l: f64, n: usize) -> Result<Coupling> {
    let (report, _) = p_star_report(slice)?;
    let cs = report.cs_l;
    if !(sigma_l >= -1e-12 && sigma_l <= cs * (1.0 + 1e-12) + 1e-15) {
        return Err(Error::OutOfRange(format!("target l surplus {sigma_l} outside [0, {cs}]")));
    }
    let t = if cs > 0.0 { (sigma_l / cs).clamp(0.0, 1.0) } else { 0.0 };
    mix(&build_rho_star(slice, n)?, &build_rho_tilde(slice, n)?, t)
}

/// Convex combination with weight `t` on the first coupling.
pub fn mix(a: &Coupling, b: &Coupling, t: f64) -> Result<Coupling> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("mixture weight {t} outside [0, 1]")));
    }
    let mut atoms: Vec<Atom> = a.atoms.iter().map(|x| Atom { weight: t * x.weight, ..*x }).collect();
    atoms.extend(b.atoms.iter().map(|x| Atom { weight: (1.0 - t) * x.weight, ..*x }));
    atoms.retain(|x| x.weight > 0.0);
    Ok(Coupling { atoms, source: Source::Mixture(t) })
}

/// i.i.d. draws of atoms by weight.
pub fn sample_pairs(coupling: &Coupling, m: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let index = WeightedIndex::new(coupling.atoms.iter().map(|a| a.weight))
        .map_err(|e| Error::OutOfRange(format!("coupling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m)
        .map(|_| {
            let a = coupling.atoms[index.sample(&mut rng)];
            (a.v_l, a.v_h)
        })
        .collect())
}

/// Averages when every matched pair faces its optimal pair price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingOutcome {
    pub profit: f64,
    pub sigma_l: f64,
    pub sigma_h: f64,
}

pub fn coupling_outcome(slice: &MarketSlice, coupling: &Coupling) -> CouplingOutcome {
    let mut out = CouplingOutcome { profit: 0.0, sigma_l: 0.0, sigma_h: 0.0 };
    for a in &coupling.atoms {
        let p = optimal_pair_price(slice, a.v_l, a.v_h);
        out.profit += a.weight * pair_profit(slice, a.v_l, a.v_h);
        if a.v_l >= p {
            out.sigma_l += a.weight * (a.v_l - p);
        }
        if a.v_h >= p {
            out.sigma_h += a.weight * (a.v_h - p);
        }
    }
    out
}

/// Whether `(v_l, v_h)` lies in one of the six blocks that can carry mass
/// under any optimal coupling of a `C1` slice, with slack `tol`.
pub fn in_optimal_blocks(k: &Kappa, v_l: f64, v_h: f64, tol: f64) -> bool {
    let [k1, _, k3, k4, k5] = k.k;
    let within = |x: f64, a: f64, b: f64| x >= a - tol && x <= b + tol;
    let diag = (v_l - v_h).abs() <= tol;
    (v_l <= k3 + tol && v_h >= k5 - tol)
        || (within(v_l, k1, k3) && within(v_h, k1, k3) && v_l >= v_h - tol)
        || (within(v_l, k3, k4) && v_h <= k1 + tol)
        || (within(v_l, k3, k4) && within(v_h, k3, k4) && diag)
        || (within(v_l, k4, k5) && within(v_h, k4, k5) && v_l <= v_h + tol)
        || (v_l >= k5 - tol && v_h >= k5 - tol && diag)
}

/// Atoms outside the six optimal blocks.
pub fn block_violations(coupling: &Coupling, k: &Kappa, tol: f64) -> Vec<Atom> {
    coupling.atoms.iter().copied().filter(|a| !in_optimal_blocks(k, a.v_l, a.v_h, tol)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp13(c: f64) -> MarketSlice {
        MarketSlice::exponential(1.0, 3.0, 0.5, c).unwrap()
    }

    #[test]
    fn rho_star_structure_and_marginals() {
        let s = exp13(0.0);
        let k = cutoffs::solve_kappa(&s).unwrap();
        let rho = build_rho_star(&s, 10_000).unwrap();
        assert!((rho.total_weight() - 1.0).abs() < 1e-9);
        for a in &rho.atoms {
            if a.v_h > k.k3() && a.v_h <= k.k4() {
                assert_eq!(a.v_l, a.v_h);
            }
        }
        assert!(rho.marginal_ks(&s, Group::L) <= 0.02);
        assert!(rho.marginal_ks(&s, Group::H) <= 0.02);
        assert!(block_violations(&rho, &k, 1e-7).is_empty());
        assert!(build_rho_star(&s, 9).is_err());
    }

    #[test]
    fn rho_star_in_other_regions() {
        for c in [1.0, 2.0] {
            let s = exp13(c);
            let rho = build_rho_star(&s, 2_000).unwrap();
            assert!(rho.marginal_ks(&s, Group::L) <= 2.0 / (2000f64).sqrt());
            let out = coupling_outcome(&s, &rho);
            assert!((out.profit - s.total_gains()).abs() / s.total_gains() < 0.01);
        }
        let s = exp13(2.0);
        let rho = build_rho_star(&s, 100).unwrap();
        for a in rho.atoms.iter().filter(|a| a.v_h <= 2.0) {
            assert!((a.v_l - s.f_l().quantile(s.f_h().cdf(a.v_h))).abs() < 1e-12);
        }
        assert!(matches!(build_rho_tilde(&s, 100), Err(Error::WrongRegion { .. })));
    }

    #[test]
    fn rho_tilde_is_diagonal_in_the_middle() {
        let s = exp13(0.0);
        let k = cutoffs::solve_kappa(&s).unwrap();
        let rho = build_rho_tilde(&s, 10_000).unwrap();
        for a in rho.atoms.iter().filter(|a| a.v_h > k.k1() && a.v_h <= k.k4()) {
            assert_eq!(a.v_l, a.v_h);
        }
        assert!(rho.marginal_ks(&s, Group::L) <= 0.02);
        assert!(block_violations(&rho, &k, 1e-7).is_empty());
        let star = coupling_outcome(&s, &build_rho_star(&s, 10_000).unwrap());
        let tilde = coupling_outcome(&s, &rho);
        assert!((star.profit - tilde.profit).abs() / star.profit < 1e-3);
        assert!(tilde.sigma_l.abs() < 1e-4);
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = Coupling { atoms: vec![Atom { v_l: 1.0, v_h: 2.0, weight: 1.0 }], source: Source::RhoStar };
        assert_eq!(sample_pairs(&c, 5, 1).unwrap(), vec![(1.0, 2.0); 5]);
        let s = exp13(0.0);
        let rho = build_rho_star(&s, 1_000).unwrap();
        assert_eq!(sample_pairs(&rho, 100, 7).unwrap(), sample_pairs(&rho, 100, 7).unwrap());
    }

    #[test]
    fn csv_shape() {
        let c = Coupling { atoms: vec![Atom { v_l: 1.0, v_h: 2.0, weight: 1.0 }], source: Source::Mixture(0.5) };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "v_l,v_h,weight,source\n1,2,1,mixture(0.5)\n");
    }
}
