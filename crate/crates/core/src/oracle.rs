//! Brute-force check of the analytic solution: discretize both groups into
//! equal-mass atoms and solve the resulting assignment problem exactly.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cutoffs::{self, Cutoffs};
use crate::error::{Error, Result};
use crate::matching::{self, coupling_outcome, in_optimal_blocks};
use crate::dist::MarketSlice;
use crate::welfare::{pair_profit, p_star_report};

pub const MIN_N: usize = 10;
pub const MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Pair profit with the slice's cost and group share.
    Standard,
    /// `max{v_l/4, v_h/4, v_l v_h / (v_l + v_h)}`.
    Tilde,
}

/// Pair objective of the noisy-signal problem.
pub fn tilde_pair_value(v_l: f64, v_h: f64) -> f64 {
    let harmonic = if v_l + v_h > 0.0 { v_l * v_h / (v_l + v_h) } else { 0.0 };
    (0.25 * v_l).max(0.25 * v_h).max(harmonic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentInstance {
    pub v_l: Vec<f64>,
    pub v_h: Vec<f64>,
    /// Row-major `n × n`; row `i` is `l` atom `i`.
    pub cost: Vec<f64>,
    pub objective: Objective,
}

impl AssignmentInstance {
    pub fn n(&self) -> usize {
        self.v_l.len()
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n() + j]
    }

    /// Square instance from an explicit matrix; atoms are the indices.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self {
            v_l: (0..n).map(|i| i as f64).collect(),
            v_h: (0..n).map(|i| i as f64).collect(),
            cost: rows.iter().flatten().copied().collect(),
            objective: Objective::Standard,
        }
    }

    /// Rows `i,j,v_l,v_h,cost,assigned` for every cell.
    pub fn write_csv<W: Write>(&self, perm: &[usize], w: W) -> std::io::Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["i", "j", "v_l", "v_h", "cost", "assigned"])?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                out.write_record([
                    i.to_string(),
                    j.to_string(),
                    self.v_l[i].to_string(),
                    self.v_h[j].to_string(),
                    self.cost(i, j).to_string(),
                    u8::from(perm[i] == j).to_string(),
                ])?;
            }
        }
        out.flush()
    }
}

fn atoms(slice: &MarketSlice, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(Error::OutOfRange(format!("oracle size must lie in [{MIN_N}, {MAX_N}], got {n}")));
    }
    let q = |i: usize| (i as f64 + 0.5) / n as f64;
    Ok(((0..n).map(|i| slice.f_l().quantile(q(i))).collect(), (0..n).map(|i| slice.f_h().quantile(q(i))).collect()))
}

fn fill(v_l: &[f64], v_h: &[f64], f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    v_l.par_iter().flat_map_iter(|&a| v_h.iter().map(move |&b| (a, b))).map(|(a, b)| f(a, b)).collect()
}

/// Equal-mass atoms of both groups with pair profits as costs.
pub fn discretize(slice: &MarketSlice, n: usize) -> Result<AssignmentInstance> {
    let (v_l, v_h) = atoms(slice, n)?;
    let cost = fill(&v_l, &v_h, |a, b| pair_profit(slice, a, b));
    Ok(AssignmentInstance { v_l, v_h, cost, objective: Objective::Standard })
}

fn require_tilde(slice: &MarketSlice) -> Result<()> {
    if slice.c() != 0.0 || slice.alpha() != 0.5 {
        return Err(Error::UnsupportedConfiguration(format!(
            "the noisy-signal objective needs c = 0 and alpha = 1/2, got c = {}, alpha = {}",
            slice.c(),
            slice.alpha()
        )));
    }
    Ok(())
}

/// Equal-mass atoms with the noisy-signal pair objective.
pub fn discretize_tilde(slice: &MarketSlice, n: usize) -> Result<AssignmentInstance> {
    require_tilde(slice)?;
    let (v_l, v_h) = atoms(slice, n)?;
    let cost = fill(&v_l, &v_h, tilde_pair_value);
    Ok(AssignmentInstance { v_l, v_h, cost, objective: Objective::Tilde })
}

/// Maximum-weight perfect matching by the Hungarian method with potentials.
/// Returns `perm` with row `i` assigned to column `perm[i]`, and the mean cost.
pub fn solve_assignment(inst: &AssignmentInstance) -> (Vec<usize>, f64) {
    let n = inst.n();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let a = |i: usize, j: usize| -inst.cost(i - 1, j - 1);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let value = (0..n).map(|i| inst.cost(i, perm[i])).sum::<f64>() / n as f64;
    (perm, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub n: usize,
    pub assignment_value: f64,
    pub analytic_value: f64,
    pub relative_gap: f64,
}

/// Assignment value against the optimal rule's profit.
pub fn oracle_gap(slice: &MarketSlice, n: usize) -> Result<OracleResult> {
    let inst = discretize(slice, n)?;
    let (_, value) = solve_assignment(&inst);
    let (report, _) = p_star_report(slice)?;
    Ok(OracleResult {
        n,
        assignment_value: value,
        analytic_value: report.profit,
        relative_gap: (value - report.profit).abs() / report.profit,
    })
}

/// Expected noisy-signal pair value when `h` consumers are matched through
/// the five-cutoff kernel built from the noisy-signal cutoffs.
pub fn tilde_analytic_value(slice: &MarketSlice, n: usize) -> Result<f64> {
    require_tilde(slice)?;
    let k = cutoffs::solve_kappa_tilde(slice)?;
    let rho = matching::rho_from_kappa(slice, &k, n)?;
    Ok(rho.atoms.iter().map(|a| a.weight * tilde_pair_value(a.v_l, a.v_h)).sum())
}

/// Assignment value for the noisy-signal objective against its analytic value.
pub fn oracle_gap_tilde(slice: &MarketSlice, n: usize) -> Result<OracleResult> {
    let inst = discretize_tilde(slice, n)?;
    let (_, value) = solve_assignment(&inst);
    let analytic = tilde_analytic_value(slice, 20_000)?;
    Ok(OracleResult { n, assignment_value: value, analytic_value: analytic, relative_gap: (value - analytic).abs() / analytic })
}

/// Share of assigned pairs within `3 · range / n` of the blocks that can
/// carry mass under an optimal coupling. Only defined for `C1` slices.
pub fn support_agreement(slice: &MarketSlice, inst: &AssignmentInstance, perm: &[usize]) -> Result<f64> {
    let k = match cutoffs::solve(slice)? {
        Cutoffs::C1(k) => k,
        other => {
            return Err(Error::WrongRegion { expected: "C1".into(), found: other.region().to_string() });
        }
    };
    let n = inst.n();
    let lo = inst.v_l[0].min(inst.v_h[0]);
    let hi = inst.v_l[n - 1].max(inst.v_h[n - 1]);
    let tol = 3.0 * (hi - lo) / n as f64;
    let inside = (0..n).filter(|&i| in_optimal_blocks(&k, inst.v_l[i], inst.v_h[perm[i]], tol)).count();
    Ok(inside as f64 / n as f64)
}

/// Profit of the assignment read as a coupling, priced pair by pair.
pub fn assignment_outcome(slice: &MarketSlice, inst: &AssignmentInstance, perm: &[usize]) -> matching::CouplingOutcome {
    let n = inst.n();
    let atoms = (0..n)
        .map(|i| matching::Atom { v_l: inst.v_l[i], v_h: inst.v_h[perm[i]], weight: 1.0 / n as f64 })
        .collect();
    coupling_outcome(slice, &matching::Coupling { atoms, source: matching::Source::OracleAssignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(inst: &AssignmentInstance) -> f64 {
        fn go(inst: &AssignmentInstance, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = inst.n();
            if row == n {
                *best = best.max(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    go(inst, row + 1, used, acc + inst.cost(row, j), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        go(inst, 0, &mut vec![false; inst.n()], 0.0, &mut best);
        best / inst.n() as f64
    }

    #[test]
    fn two_by_two() {
        let inst = AssignmentInstance::from_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(solve_assignment(&inst), (vec![0, 1], 1.0));
    }

    #[test]
    fn unit_exponential_atoms() {
        let s = MarketSlice::exponential(1.0, 3.0, 0.5, 0.0).unwrap();
        let inst = discretize(&s, 10).unwrap();
        for (i, v) in inst.v_l.iter().enumerate() {
            let want = -(1.0 - (i as f64 + 0.5) / 10.0).ln();
            assert!((v - want).abs() < 1e-12);
        }
        assert!(discretize(&s, 9).is_err());
        assert!(matches!(
            discretize_tilde(&MarketSlice::exponential(1.0, 3.0, 0.4, 0.0).unwrap(), 10),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn supermodular_costs_sort() {
        let xs = [0.1, 0.4, 0.5, 1.2, 2.0, 3.3, 4.0];
        let ys = [0.2, 0.3, 0.9, 1.0, 2.5, 2.6, 5.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| (f64::min(*x, *y) - 0.25).max(0.0)).collect()).collect();
        let inst = AssignmentInstance::from_matrix(&rows);
        let (_, v) = solve_assignment(&inst);
        let sorted = (0..7).map(|i| rows[i][i]).sum::<f64>() / 7.0;
        assert!((v - sorted).abs() < 1e-12);
        assert!((v - brute_force(&inst)).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_match_diagonally() {
        // Nearly identical groups: the diagonal is optimal and worth the gains.
        let s = MarketSlice::exponential(1.0, 1.0 + 1e-7, 0.5, 0.2).unwrap();
        let inst = discretize(&s, 50).unwrap();
        let (_, v) = solve_assignment(&inst);
        let diag = (0..50).map(|i| (inst.v_l[i] - 0.2).max(0.0)).sum::<f64>() / 50.0;
        assert!((v - diag).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn hungarian_matches_enumeration(n in 1usize..=6, seed in proptest::collection::vec(0.0f64..10.0, 36)) {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| seed[i * 6 + j]).collect()).collect();
            let inst = AssignmentInstance::from_matrix(&rows);
            let (perm, v) = solve_assignment(&inst);
            let mut seen = perm.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert!((v - brute_force(&inst)).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_tracks_analytic_profit() {
        let s = MarketSlice::exponential(1.0, 3.0, 0.5, 0.0).unwrap();
        let r = oracle_gap(&s, 200).unwrap();
        assert!(r.relative_gap < 0.01, "{r:?}");
        let inst = discretize(&s, 200).unwrap();
        let (perm, _) = solve_assignment(&inst);
        assert!(support_agreement(&s, &inst, &perm).unwrap() >= 0.95);
    }
}
