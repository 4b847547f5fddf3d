mod common;

use common::{exp, mixture};
use fairprice::cutoffs::{self, classify_region, Region, KAPPA_TOL};
use fairprice::dist::{self, Group};
use fairprice::pricing::{self, ND_TOL};
use fairprice::{duality, welfare, Family, MarketSlice, ValueDistribution};
use proptest::prelude::*;

fn exp_slice() -> impl Strategy<Value = MarketSlice> {
    (0.3f64..3.0, 1.2f64..10.0, 0.05f64..0.95, 0.0f64..1.0)
        .prop_map(|(ml, ratio, alpha, c)| exp(ml, ml * ratio, alpha, c * ml))
}

fn mixture_slice() -> impl Strategy<Value = MarketSlice> {
    (0.5f64..1.5, 2.0f64..10.0, 0.0f64..0.5, 0.1f64..0.5, 0.1f64..0.9).prop_map(|(small, k, wl, dw, alpha)| {
        let wh = (wl + dw).min(1.0);
        mixture([wl, 1.0 - wl], [wh, 1.0 - wh], [small * k, small], alpha, 0.0)
    })
}

fn any_slice() -> impl Strategy<Value = MarketSlice> {
    prop_oneof![exp_slice(), mixture_slice()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantile_inverts_cdf(mean in 0.1f64..10.0, w in 0.0f64..1.0, q in 1e-6f64..(1.0 - 1e-6)) {
        for family in [
            Family::Exponential { mean },
            Family::ExponentialMixture { weights: vec![w, 1.0 - w], means: vec![mean, 1.0] },
            Family::Scaled { base: Box::new(Family::Exponential { mean: 1.0 }), scale: mean },
            Family::PiecewiseLinear { knots: vec![[0.0, 0.0], [mean, 0.5], [mean + 1.0, 1.0]] },
        ] {
            let d = ValueDistribution::new(family).unwrap();
            let x = d.quantile(q);
            prop_assert!((d.cdf(x) - q).abs() < 1e-9, "q {} -> x {} -> {}", q, x, d.cdf(x));
        }
    }

    #[test]
    fn gap_is_quasi_concave(s in any_slice()) {
        let gp = dist::gap_profile(&s).unwrap();
        let hi = s.cap();
        let mut prev = dist::delta(&s, s.lo());
        for i in 1..=400 {
            let v = hi * i as f64 / 400.0;
            let d = dist::delta(&s, v);
            if v <= gp.v_star {
                prop_assert!(d >= prev - 1e-12);
            } else if v - hi / 400.0 >= gp.v_star {
                prop_assert!(d <= prev + 1e-12);
            }
            prop_assert!(d <= gp.tv + 1e-12);
            prev = d;
        }
    }

    #[test]
    fn assortative_rule_has_identical_pushforwards(s in any_slice()) {
        let rule = pricing::build_p_ass(&s);
        prop_assert!(pricing::check_nondiscrimination(&rule, &s).unwrap() <= 1e-9);
        if s.c() <= s.lo() {
            prop_assert!(pricing::check_outcome_nondiscrimination(&rule, &s).unwrap() <= ND_TOL);
        }
    }

    #[test]
    fn optimal_rule_is_nondiscriminatory_and_accounts(s in exp_slice()) {
        let rule = pricing::build_p_star(&s).unwrap();
        prop_assert!(pricing::check_nondiscrimination(&rule, &s).unwrap() <= ND_TOL);
        let r = welfare::welfare_report(&rule, &s);
        prop_assert!(r.accounting_residual().abs() <= 1e-7 * r.gains.max(1.0));
        let ass = welfare::welfare_report(&pricing::build_p_ass(&s), &s);
        prop_assert!(r.profit >= ass.profit - 1e-8);
        prop_assert!(r.share() >= welfare::profit_share_bound(&s).unwrap().bound - 1e-6);
    }

    #[test]
    fn cutoffs_solve_their_system(s in any_slice()) {
        prop_assume!(classify_region(&s) == Ok(Region::C1));
        let k = cutoffs::solve_kappa(&s).unwrap();
        prop_assert!(k.max_residual() <= KAPPA_TOL);
        prop_assert!(k.k.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let cert = duality::build_duals(&s).unwrap();
        prop_assert!(duality::feasibility_report(&cert, &s, 120).0 >= duality::FEASIBILITY_FLOOR);
    }

    #[test]
    fn pair_price_beats_every_candidate(s in exp_slice(), a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let (v_l, v_h) = (a.min(b), a.max(b));
        let best = welfare::pair_profit(&s, v_l, v_h);
        let (alpha, c) = (s.alpha(), s.c());
        for p in [v_l, v_h, c] {
            let m = alpha * (v_h >= p) as u8 as f64 + (1.0 - alpha) * (v_l >= p) as u8 as f64;
            prop_assert!(best >= (p - c) * m - 1e-12);
        }
    }

    #[test]
    fn profit_share_bound_is_ordered(alpha in 0.01f64..1.0, r in 0.0f64..50.0) {
        let b = welfare::share_bound_from_ratio(alpha, r);
        prop_assert!(b.bound >= b.weak_bound - 1e-12);
        prop_assert!(b.weak_bound > 0.5 && b.bound <= 1.0 + 1e-12);
    }
}

#[test]
fn group_distributions_are_independent_of_alpha() {
    let s = exp(1.0, 3.0, 0.5, 0.0);
    let t = s.with_alpha(0.2).unwrap();
    for q in [0.1, 0.5, 0.9] {
        assert_eq!(s.quantile(Group::H, q), t.quantile(Group::H, q));
    }
}
