use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Command, ExperimentConfig, SliceSpec};
use super::{num, write_json, CliError, RunSettings, Table};
use crate::cutoffs::{self, Cutoffs, Kappa, Region, Variant, KAPPA_TOL};
use crate::dist::{Family, Market, MarketSlice, ValueDistribution};
use crate::duality::{self, DualCertificate, FEASIBILITY_FLOOR, SLACKNESS_TOL};
use crate::matching::{self, Source};
use crate::oracle;
use crate::pricing::{self, PricingRule, ND_TOL};
use crate::welfare::{self, WelfareReport};

/// Atoms per group of the coupling used for slackness checks and outcomes.
pub const COUPLING_ATOMS: usize = 10_000;
/// Grid points per group for the dual feasibility scan.
pub const FEASIBILITY_GRID: usize = 500;
pub const ORACLE_TOL: f64 = 0.01;
pub const DUAL_VALUE_TOL: f64 = 1e-5;
pub const CLOSED_FORM_TOL: f64 = 1e-6;
pub const OUTCOME_TOL: f64 = 0.01;
pub const OUTCOME_SAMPLES: usize = 20_000;

pub fn execute(command: Command, cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    std::fs::create_dir_all(&settings.out).map_err(|e| CliError::Io(format!("{}: {e}", settings.out.display())))?;
    match command {
        Command::Solve => solve(cfg, settings),
        Command::Sweep => sweep(cfg, settings),
        Command::Verify => verify(cfg, settings),
        Command::Figures => figures(cfg, settings),
        Command::Outcomes => outcomes(cfg, settings),
    }
}

/// Everything `solve` and `verify` derive from one slice.
struct Solution {
    cutoffs: Cutoffs,
    from_config: bool,
    rule: PricingRule,
    nd_gap: f64,
    cert: DualCertificate,
    report: WelfareReport,
}

fn market(cfg: &ExperimentConfig) -> Result<Market, CliError> {
    cfg.market().map_err(|source| CliError::Model { slice: None, source })
}

fn resolve_cutoffs(i: usize, spec: &SliceSpec, slice: &MarketSlice) -> Result<Cutoffs, CliError> {
    let Some(k) = spec.kappa else {
        return cutoffs::solve(slice).map_err(CliError::model(i));
    };
    let region = cutoffs::classify_region(slice).map_err(CliError::model(i))?;
    if region != Region::C1 {
        return Err(CliError::Region { slices: vec![i], detail: format!("cutoffs given for a {region} slice") });
    }
    Ok(Cutoffs::C1(Kappa { k, residuals: cutoffs::kappa_residuals(slice, &k), variant: Variant::Standard, boundary: false }))
}

/// Fails unless the rule's price distributions agree across groups.
fn certify_rule(i: usize, rule: &PricingRule, slice: &MarketSlice) -> Result<f64, CliError> {
    let gap = pricing::check_nondiscrimination(rule, slice).map_err(CliError::model(i))?;
    if gap > ND_TOL {
        return Err(CliError::Verification {
            slice: i,
            check: "nondiscrimination".into(),
            detail: format!("rule {} has price-distribution gap {gap:e}", rule.name),
            witness: json!({"rule": rule.name, "gap": gap}),
        });
    }
    Ok(gap)
}

fn solve_slice(i: usize, spec: &SliceSpec, slice: &MarketSlice, weight: f64) -> Result<Solution, CliError> {
    let cutoffs = resolve_cutoffs(i, spec, slice)?;
    let (rule, cert) = match &cutoffs {
        Cutoffs::C1(k) => (pricing::from_kappa(slice, k, "p_star"), duality::duals_from_kappa(slice, k)),
        _ => (pricing::build_p_star(slice).map_err(CliError::model(i))?, duality::degenerate_duals(slice)),
    };
    let nd_gap = certify_rule(i, &rule, slice)?;
    let mut report = welfare::welfare_report(&rule, slice);
    report.weight = weight;
    report.region = Some(cutoffs.region());
    Ok(Solution { cutoffs, from_config: spec.kappa.is_some(), rule, nd_gap, cert, report })
}

fn solve_all(cfg: &ExperimentConfig) -> Result<(Market, Vec<Solution>), CliError> {
    let market = market(cfg)?;
    let sols = market
        .slices()
        .par_iter()
        .zip(cfg.market.slices.par_iter())
        .enumerate()
        .map(|(i, ((slice, w), spec))| solve_slice(i, spec, slice, *w))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok((market, sols))
}

const WELFARE_HEADER: [&str; 11] = ["slice", "c", "weight", "region", "profit", "cs_l", "cs_h", "wl_l", "wl_h", "gains", "share"];

fn welfare_row(label: String, r: &WelfareReport) -> Vec<String> {
    let region = r.region.map(|g| g.to_string()).unwrap_or_default();
    let c = if r.region.is_some() { num(r.c) } else { String::new() };
    vec![
        label,
        c,
        num(r.weight),
        region,
        num(r.profit),
        num(r.cs_l),
        num(r.cs_h),
        num(r.wl_l),
        num(r.wl_h),
        num(r.gains),
        num(r.share()),
    ]
}

fn solve(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    let (_, sols) = solve_all(cfg)?;
    let out = &settings.out;
    let tagged = |i: usize, key: &str, v: Value| -> Value {
        let mut m = serde_json::Map::new();
        m.insert("slice".into(), json!(i));
        m.insert(key.into(), v);
        Value::Object(m)
    };
    let to_value = |v: Result<Value, serde_json::Error>| v.map_err(|e| CliError::Io(e.to_string()));

    let mut kappa = Vec::new();
    let mut rules = Vec::new();
    let mut duals = Vec::new();
    let mut table = Table::new(&WELFARE_HEADER);
    for (i, s) in sols.iter().enumerate() {
        let mut k = tagged(i, "source", json!(if s.from_config { "config" } else { "solved" }));
        k["cutoffs"] = to_value(serde_json::to_value(&s.cutoffs))?;
        kappa.push(k);
        let mut r = tagged(i, "nondiscrimination_gap", json!(s.nd_gap));
        r["rule"] = to_value(serde_json::to_value(&s.rule))?;
        rules.push(r);
        duals.push(tagged(i, "certificate", to_value(serde_json::to_value(&s.cert))?));
        table.push(welfare_row(i.to_string(), &s.report));
    }
    let reports: Vec<WelfareReport> = sols.iter().map(|s| s.report.clone()).collect();
    table.push(welfare_row("total".into(), &WelfareReport::aggregate(&reports)));

    write_json(&out.join("kappa.json"), &kappa)?;
    write_json(&out.join("rule.json"), &rules)?;
    write_json(&out.join("duals.json"), &duals)?;
    table.write(&out.join("welfare.csv"))
}

/// One sweep point: slice `i` with `α` replaced and, when `gamma` is set,
/// `h` values equal to `l` values scaled by `gamma`.
fn sweep_slice(spec: &SliceSpec, alpha: f64, gamma: Option<f64>) -> crate::error::Result<MarketSlice> {
    let h = match gamma {
        Some(g) => Family::Scaled { base: Box::new(spec.l.clone()), scale: g },
        None => spec.h.clone(),
    };
    MarketSlice::new(spec.c, alpha, ValueDistribution::new(spec.l.clone())?, ValueDistribution::new(h)?)
}

fn sweep(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    market(cfg)?;
    let mut points = Vec::new();
    for (i, spec) in cfg.market.slices.iter().enumerate() {
        let alphas = cfg.sweep.alpha.clone().unwrap_or_else(|| vec![spec.alpha]);
        let gammas: Vec<Option<f64>> = match &cfg.sweep.gamma {
            Some(g) => g.iter().map(|x| Some(*x)).collect(),
            None => vec![None],
        };
        for &a in &alphas {
            for &g in &gammas {
                points.push((i, a, g));
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|&(i, a, g)| -> Result<Vec<String>, CliError> {
            let slice = sweep_slice(&cfg.market.slices[i], a, g).map_err(CliError::model(i))?;
            let (r, _) = welfare::p_star_report(&slice).map_err(CliError::model(i))?;
            let (_, uniform) = welfare::uniform_price_revenue_slice(&slice);
            let mut row = welfare_row(i.to_string(), &r);
            row.remove(2);
            row.insert(1, num(a));
            row.insert(2, g.map(num).unwrap_or_default());
            row.push(num(uniform));
            row.push(num(uniform / r.gains));
            Ok(row)
        })
        .collect::<Vec<_>>();
    let mut table = Table::new(&[
        "slice",
        "alpha",
        "gamma",
        "c",
        "region",
        "profit",
        "cs_l",
        "cs_h",
        "wl_l",
        "wl_h",
        "gains",
        "share",
        "uniform_profit",
        "uniform_share",
    ]);
    for row in rows {
        table.push(row?);
    }
    table.write(&settings.out.join("sweep.csv"))?;

    if let Some(gains) = &cfg.sweep.gains {
        let alphas = cfg.sweep.alpha.clone().unwrap_or_else(|| cfg.market.slices.iter().map(|s| s.alpha).collect());
        bound_table(gains, &alphas).write(&settings.out.join("share_bounds.csv"))?;
    }
    Ok(())
}

fn bound_table(ratios: &[f64], alphas: &[f64]) -> Table {
    let mut t = Table::new(&["r", "alpha", "bound", "weak_bound"]);
    for &r in ratios {
        for &a in alphas {
            let b = welfare::share_bound_from_ratio(a, r);
            t.push(vec![num(r), num(a), num(b.bound), num(b.weak_bound)]);
        }
    }
    t
}

/// Result of one named check inside `verify`.
#[derive(Debug, Clone, serde::Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
    witness: Value,
}

fn check(name: &'static str, value: f64, limit: f64, pass: bool, witness: Value) -> Check {
    Check { name, value, limit, pass, witness }
}

struct SliceVerification {
    checks: Vec<Check>,
    oracle: oracle::OracleResult,
    support: Option<f64>,
    region: Region,
}

fn verify_slice(i: usize, spec: &SliceSpec, slice: &MarketSlice, n: usize) -> Result<SliceVerification, CliError> {
    let cutoffs = resolve_cutoffs(i, spec, slice)?;
    let region = cutoffs.region();
    let (rule, cert) = match &cutoffs {
        Cutoffs::C1(k) => (pricing::from_kappa(slice, k, "p_star"), duality::duals_from_kappa(slice, k)),
        _ => (pricing::build_p_star(slice).map_err(CliError::model(i))?, duality::degenerate_duals(slice)),
    };
    let mut checks = Vec::new();

    let rho = matching::build_rho_star(slice, COUPLING_ATOMS).map_err(CliError::model(i))?;
    let (gap, (v_l, v_h)) = duality::slackness_report(&cert, &rho);
    checks.push(check("complementary_slackness", gap, SLACKNESS_TOL, gap <= SLACKNESS_TOL, json!({"v_l": v_l, "v_h": v_h, "gap": gap})));

    let (slack, (v_l, v_h)) = duality::feasibility_report(&cert, slice, FEASIBILITY_GRID);
    checks.push(check(
        "dual_feasibility",
        slack,
        FEASIBILITY_FLOOR,
        slack >= FEASIBILITY_FLOOR,
        json!({"v_l": v_l, "v_h": v_h, "slack": slack}),
    ));

    if let Cutoffs::C1(k) = &cutoffs {
        let res = k.max_residual();
        checks.push(check("cutoff_residuals", res, KAPPA_TOL, res <= KAPPA_TOL, json!({"residuals": k.residuals})));
    }

    let report = welfare::welfare_report(&rule, slice);
    let dual = duality::dual_value(&cert, slice);
    let rel = (dual - report.profit).abs() / report.profit.abs().max(1e-12);
    checks.push(check(
        "strong_duality",
        rel,
        DUAL_VALUE_TOL,
        rel <= DUAL_VALUE_TOL,
        json!({"dual_value": dual, "profit": report.profit}),
    ));

    let nd = pricing::check_nondiscrimination(&rule, slice).map_err(CliError::model(i))?;
    checks.push(check("nondiscrimination", nd, ND_TOL, nd <= ND_TOL, json!({"rule": rule.name, "gap": nd})));

    if let Cutoffs::C1(k) = &cutoffs {
        let (cs_l, cs_h) = welfare::closed_form_cs(slice, k);
        let r = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
        let m = r(report.cs_l, cs_l).max(r(report.cs_h, cs_h));
        checks.push(check(
            "closed_form_surplus",
            m,
            CLOSED_FORM_TOL,
            m <= CLOSED_FORM_TOL,
            json!({"cs_l": [report.cs_l, cs_l], "cs_h": [report.cs_h, cs_h]}),
        ));
    }

    let inst = oracle::discretize(slice, n).map_err(CliError::model(i))?;
    let (perm, value) = oracle::solve_assignment(&inst);
    let rel_gap = (value - report.profit).abs() / report.profit.abs().max(1e-12);
    let result = oracle::OracleResult { n, assignment_value: value, analytic_value: report.profit, relative_gap: rel_gap };
    checks.push(check(
        "oracle_gap",
        rel_gap,
        ORACLE_TOL,
        rel_gap <= ORACLE_TOL,
        json!({"assignment_value": value, "analytic_value": report.profit}),
    ));
    let support = if region == Region::C1 {
        Some(oracle::support_agreement(slice, &inst, &perm).map_err(CliError::model(i))?)
    } else {
        None
    };
    Ok(SliceVerification { checks, oracle: result, support, region })
}

fn verify(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    let market = market(cfg)?;
    let results = market
        .slices()
        .par_iter()
        .zip(cfg.market.slices.par_iter())
        .enumerate()
        .map(|(i, ((slice, _), spec))| verify_slice(i, spec, slice, settings.oracle_n))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut table =
        Table::new(&["slice", "region", "n", "assignment_value", "analytic_value", "relative_gap", "support_agreement"]);
    let mut summary = Vec::new();
    for (i, v) in results.iter().enumerate() {
        let o = &v.oracle;
        table.push(vec![
            i.to_string(),
            v.region.to_string(),
            o.n.to_string(),
            num(o.assignment_value),
            num(o.analytic_value),
            num(o.relative_gap),
            v.support.map(num).unwrap_or_default(),
        ]);
        summary.push(json!({"slice": i, "region": v.region, "checks": v.checks}));
    }
    table.write(&settings.out.join("oracle.csv"))?;
    write_json(&settings.out.join("verify.json"), &summary)?;

    for (i, v) in results.iter().enumerate() {
        if let Some(c) = v.checks.iter().find(|c| !c.pass) {
            return Err(CliError::Verification {
                slice: i,
                check: c.name.into(),
                detail: format!("{} = {:e} against limit {:e}", c.name, c.value, c.limit),
                witness: c.witness.clone(),
            });
        }
    }
    Ok(())
}

/// Zero cost or region `C1`: the parameter range the figures are drawn for.
fn in_scope(slice: &MarketSlice) -> bool {
    slice.c() == 0.0 || matches!(cutoffs::classify_region(slice), Ok(Region::C1))
}

fn default_grid(lo: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| ((lo + step * i as f64) * 1e9).round() / 1e9).collect()
}

fn figures(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    let market = market(cfg)?;
    let offending: Vec<usize> =
        market.slices().iter().enumerate().filter(|(_, (s, _))| !in_scope(s)).map(|(i, _)| i).collect();
    if !offending.is_empty() {
        return Err(CliError::Region { slices: offending, detail: "figures need zero cost or region C1".into() });
    }
    let dir = settings.out.join("figures");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;

    let ms = cfg.sweep.gamma.clone().unwrap_or_else(|| default_grid(1.5, 0.5, 18));
    profit_share_table(&ms)?.write(&dir.join("profit_share.csv"))?;

    let alphas = cfg.sweep.alpha.clone().unwrap_or_else(|| default_grid(0.05, 0.05, 19));
    cs_by_group_table(&market, &alphas)?.write(&dir.join("cs_by_group.csv"))?;

    bbm_table(&[0.0, 0.25, 0.5, 0.75, 1.0])?.write(&dir.join("bbm_triangle.csv"))?;

    let ratios = cfg.sweep.gains.clone().unwrap_or_else(|| default_grid(0.0, 0.1, 21));
    let bound_alphas = cfg.sweep.alpha.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]);
    bound_table(&ratios, &bound_alphas).write(&dir.join("profit_share_bound.csv"))
}

/// Profit shares of the benchmark rules on `Exp(1)` against `Exp(m)`, `α = 1/2`, zero cost.
fn profit_share_table(ms: &[f64]) -> Result<Table, CliError> {
    let rows = ms
        .par_iter()
        .enumerate()
        .map(|(i, &m)| -> Result<Vec<Vec<String>>, CliError> {
            let slice = MarketSlice::exponential(1.0, m, 0.5, 0.0).map_err(CliError::model(i))?;
            let q = pricing::q_star(&slice).map_err(CliError::model(i))?;
            let (p_uniform, _) = welfare::uniform_price_revenue_slice(&slice);
            let rules = [
                pricing::build_p_star(&slice).map_err(CliError::model(i))?,
                pricing::build_p_ass(&slice),
                named(pricing::build_p_anti(&slice, q).map_err(CliError::model(i))?, "p_anti_q_star"),
                named(pricing::build_p_anti(&slice, 1.0).map_err(CliError::model(i))?, "p_anti_1"),
                pricing::build_uniform(&slice, p_uniform),
            ];
            rules
                .iter()
                .map(|rule| {
                    certify_rule(i, rule, &slice)?;
                    let r = welfare::welfare_report(rule, &slice);
                    Ok(vec![num(m), rule.name.clone(), num(r.profit), num(r.gains), num(r.share())])
                })
                .collect()
        })
        .collect::<Vec<_>>();
    let mut t = Table::new(&["m", "rule", "profit", "gains", "share"]);
    for block in rows {
        for row in block? {
            t.push(row);
        }
    }
    Ok(t)
}

fn named(mut rule: PricingRule, name: &str) -> PricingRule {
    rule.name = name.to_string();
    rule
}

fn cs_by_group_table(market: &Market, alphas: &[f64]) -> Result<Table, CliError> {
    let points: Vec<(usize, f64)> =
        (0..market.slices().len()).flat_map(|i| alphas.iter().map(move |&a| (i, a))).collect();
    let rows = points
        .par_iter()
        .map(|&(i, a)| -> Result<Option<Vec<String>>, CliError> {
            let slice = market.slices()[i].0.with_alpha(a).map_err(CliError::model(i))?;
            if !in_scope(&slice) {
                return Ok(None);
            }
            let (r, _) = welfare::p_star_report(&slice).map_err(CliError::model(i))?;
            let region = r.region.map(|g| g.to_string()).unwrap_or_default();
            Ok(Some(vec![
                i.to_string(),
                num(a),
                region,
                num(r.profit),
                num(r.cs_l),
                num(r.cs_h),
                num(r.wl_l),
                num(r.wl_h),
                num(r.share()),
            ]))
        })
        .collect::<Vec<_>>();
    let mut t = Table::new(&["slice", "alpha", "region", "profit", "cs_l", "cs_h", "wl_l", "wl_h", "share"]);
    let mut offending = Vec::new();
    for (row, &(i, _)) in rows.into_iter().zip(&points) {
        match row? {
            Some(r) => t.push(r),
            None => offending.push(i),
        }
    }
    if !offending.is_empty() {
        offending.dedup();
        return Err(CliError::Region { slices: offending, detail: "the alpha grid leaves region C1 at positive cost".into() });
    }
    Ok(t)
}

/// Two-group split of the mixture `α Exp(10) + (1 - α) Exp(1)` at `α = 1/4`
/// whose group gap grows with `β` while the population stays fixed.
pub fn bbm_slice(beta: f64) -> crate::error::Result<MarketSlice> {
    let a = 0.25;
    let wh = beta + a * (1.0 - beta);
    let wl = (1.0 - beta) * a;
    let mix = |w: f64| ValueDistribution::new(Family::ExponentialMixture { weights: vec![w, 1.0 - w], means: vec![10.0, 1.0] });
    MarketSlice::new(0.0, a, mix(wl)?, mix(wh)?)
}

fn bbm_table(betas: &[f64]) -> Result<Table, CliError> {
    let mut t = Table::new(&["beta", "point", "profit", "cs"]);
    for (i, &beta) in betas.iter().enumerate() {
        let slice = bbm_slice(beta).map_err(CliError::model(i))?;
        let market = Market::new(vec![(slice.clone(), 1.0)]).map_err(CliError::model(i))?;
        let v = welfare::bbm_triangle(&market).map_err(CliError::model(i))?;
        for (name, (p, cs)) in ["efficient_extraction", "uniform_price", "uniform_price_all_buy"].iter().zip(v) {
            t.push(vec![num(beta), name.to_string(), num(p), num(cs)]);
        }
        match pricing::build_p_star(&slice) {
            Ok(rule) => {
                certify_rule(i, &rule, &slice)?;
                let r = welfare::welfare_report(&rule, &slice);
                let cs = slice.alpha() * r.cs_h + (1.0 - slice.alpha()) * r.cs_l;
                t.push(vec![num(beta), "p_star".into(), num(r.profit), num(cs)]);
            }
            // Identical groups: the optimal rule is not unique and no point is drawn.
            Err(crate::error::Error::DegenerateSlice { .. }) => {}
            Err(e) => return Err(CliError::model(i)(e)),
        }
    }
    Ok(t)
}

const OUTCOME_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn outcomes(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<(), CliError> {
    let market = market(cfg)?;
    let offending: Vec<usize> = market
        .slices()
        .iter()
        .enumerate()
        .filter(|(_, (s, _))| !matches!(cutoffs::classify_region(s), Ok(Region::C1)))
        .map(|(i, _)| i)
        .collect();
    if !offending.is_empty() {
        return Err(CliError::Region { slices: offending, detail: "outcome ranges need region C1".into() });
    }
    let points: Vec<(usize, usize)> =
        (0..market.slices().len()).flat_map(|i| (0..OUTCOME_FRACTIONS.len()).map(move |j| (i, j))).collect();
    let reports = market
        .slices()
        .par_iter()
        .enumerate()
        .map(|(i, (s, _))| welfare::p_star_report(s).map(|(r, _)| r).map_err(CliError::model(i)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let rows = points
        .par_iter()
        .map(|&(i, j)| -> Result<(Vec<String>, Option<Check>), CliError> {
            let slice = &market.slices()[i].0;
            let star = &reports[i];
            let target = OUTCOME_FRACTIONS[j] * star.cs_l;
            let coupling = matching::mix_for_target_surplus(slice, target, COUPLING_ATOMS).map_err(CliError::model(i))?;
            let o = matching::coupling_outcome(slice, &coupling);
            let t = match coupling.source {
                Source::Mixture(t) => t,
                _ => f64::NAN,
            };
            let stream = settings.seed.wrapping_add((i * OUTCOME_FRACTIONS.len() + j) as u64);
            let draws = matching::sample_pairs(&coupling, OUTCOME_SAMPLES, stream).map_err(CliError::model(i))?;
            let sampled = draws.iter().map(|&(l, h)| welfare::pair_profit(slice, l, h)).sum::<f64>() / draws.len() as f64;
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
            let worst = rel(o.sigma_h, star.cs_h).max(rel(o.profit, star.profit));
            let failed = (worst > OUTCOME_TOL).then(|| {
                check(
                    "outcome_constancy",
                    worst,
                    OUTCOME_TOL,
                    false,
                    json!({"target_sigma_l": target, "sigma_h": [o.sigma_h, star.cs_h], "profit": [o.profit, star.profit]}),
                )
            });
            let row = vec![
                i.to_string(),
                num(OUTCOME_FRACTIONS[j]),
                num(target),
                num(o.sigma_l),
                num(o.sigma_h),
                num(o.profit),
                num(t),
                num(sampled),
            ];
            Ok((row, failed))
        })
        .collect::<Vec<_>>();
    let mut t = Table::new(&[
        "slice",
        "fraction",
        "target_sigma_l",
        "sigma_l",
        "sigma_h",
        "profit",
        "mixture_weight",
        "sampled_profit",
    ]);
    let mut failure = None;
    for (r, &(i, _)) in rows.into_iter().zip(&points) {
        let (row, failed) = r?;
        t.push(row);
        if failure.is_none() {
            failure = failed.map(|c| (i, c));
        }
    }
    t.write(&settings.out.join("outcomes.csv"))?;
    if let Some((i, c)) = failure {
        return Err(CliError::Verification {
            slice: i,
            check: c.name.into(),
            detail: format!("{} = {:e} against limit {:e}", c.name, c.value, c.limit),
            witness: c.witness,
        });
    }
    Ok(())
}
