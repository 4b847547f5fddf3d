#![allow(dead_code)]

use fairprice::cutoffs::{classify_region, Region};
use fairprice::{Family, MarketSlice, ValueDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn exp(mean_l: f64, mean_h: f64, alpha: f64, c: f64) -> MarketSlice {
    MarketSlice::exponential(mean_l, mean_h, alpha, c).unwrap()
}

/// Exponential values with means proportional to the cost.
pub fn scaled_exp(lambda_l: f64, lambda_h: f64, alpha: f64, c: f64) -> MarketSlice {
    let mk = |mean: f64| ValueDistribution::new(Family::Scaled { base: Box::new(Family::Exponential { mean }), scale: c }).unwrap();
    MarketSlice::new(c, alpha, mk(lambda_l), mk(lambda_h)).unwrap()
}

pub fn mixture(weights_l: [f64; 2], weights_h: [f64; 2], means: [f64; 2], alpha: f64, c: f64) -> MarketSlice {
    let mk = |w: [f64; 2]| {
        ValueDistribution::new(Family::ExponentialMixture { weights: w.to_vec(), means: means.to_vec() }).unwrap()
    };
    MarketSlice::new(c, alpha, mk(weights_l), mk(weights_h)).unwrap()
}

pub fn piecewise(l: Vec<[f64; 2]>, h: Vec<[f64; 2]>, alpha: f64, c: f64) -> MarketSlice {
    let mk = |knots| ValueDistribution::new(Family::PiecewiseLinear { knots }).unwrap();
    MarketSlice::new(c, alpha, mk(l), mk(h)).unwrap()
}

/// Seeded region-`C1` slices, alternating exponential and two-component
/// exponential mixtures, half of them at zero cost.
pub fn random_c1_slices(count: usize, seed: u64) -> Vec<(String, MarketSlice)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let alpha = rng.random_range(0.2..0.8);
        let zero_cost = rng.random_bool(0.5);
        let (label, slice) = if out.len() % 2 == 0 {
            let ml = rng.random_range(0.5..2.0);
            let mh = ml * rng.random_range(1.5..8.0);
            let c = if zero_cost { 0.0 } else { rng.random_range(0.0..0.3) * ml };
            (format!("exp({ml:.3}, {mh:.3}) α={alpha:.3} c={c:.3}"), exp(ml, mh, alpha, c))
        } else {
            let small = rng.random_range(0.5..1.5);
            let big = small * rng.random_range(3.0..10.0);
            let wl: f64 = rng.random_range(0.05..0.4);
            let wh = (wl + rng.random_range(0.2..0.5)).min(0.95);
            let c = if zero_cost { 0.0 } else { rng.random_range(0.0..0.3) * small };
            let s = mixture([wl, 1.0 - wl], [wh, 1.0 - wh], [big, small], alpha, c);
            (format!("mix(w_l={wl:.3}, w_h={wh:.3}, means {big:.3}/{small:.3}) α={alpha:.3} c={c:.3}"), s)
        };
        if classify_region(&slice) == Ok(Region::C1) {
            out.push((label, slice));
        }
    }
    out
}

/// Ten slices covering all three regions.
pub fn region_slices() -> Vec<(String, MarketSlice)> {
    vec![
        ("exp(1, 3) α=0.5 c=0".into(), exp(1.0, 3.0, 0.5, 0.0)),
        ("exp(1, 5) α=0.3 c=0".into(), exp(1.0, 5.0, 0.3, 0.0)),
        ("exp(1, 2) α=0.7 c=0.1".into(), exp(1.0, 2.0, 0.7, 0.1)),
        ("scaled(1, 12) α=0.5 c=1".into(), scaled_exp(1.0, 12.0, 0.5, 1.0)),
        ("mix(0.2/0.6, means 6/1) α=0.5 c=0".into(), mixture([0.2, 0.8], [0.6, 0.4], [6.0, 1.0], 0.5, 0.0)),
        ("scaled(1, 3) α=0.5 c=1".into(), scaled_exp(1.0, 3.0, 0.5, 1.0)),
        ("scaled(1, 4) α=0.4 c=1".into(), scaled_exp(1.0, 4.0, 0.4, 1.0)),
        ("exp(1, 3) α=0.5 c=2".into(), exp(1.0, 3.0, 0.5, 2.0)),
        ("exp(1, 2) α=0.5 c=1.5".into(), exp(1.0, 2.0, 0.5, 1.5)),
        ("exp(1, 4) α=0.6 c=3".into(), exp(1.0, 4.0, 0.6, 3.0)),
    ]
}

/// Zero-cost, even-split slices for the noisy-signal objective.
pub fn tilde_slices() -> Vec<(String, MarketSlice)> {
    [3.0, 5.0, 10.0].iter().map(|&m| (format!("exp(1, {m}) α=0.5 c=0"), exp(1.0, m, 0.5, 0.0))).collect()
}

pub fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-12)
}
