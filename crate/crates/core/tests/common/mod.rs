#![allow(dead_code)]

use drmech_core::{CostCurves, DiscomfortModel, Mechanism, OfferPlan, PiecewiseLinearCost, Scenario, SquareMatrix};
use rand::Rng;

pub const B: f64 = 110.0;

pub fn ontario_cost() -> CostCurves {
    CostCurves::shared(PiecewiseLinearCost::new(vec![16_300.0, 17_900.0], vec![10.0, 72.46, 91.0]).unwrap())
}

pub fn exponential(baseline: Vec<f64>, mu: f64) -> Scenario {
    let n = baseline.len();
    Scenario::new(
        baseline,
        B,
        ontario_cost(),
        DiscomfortModel::exponential(n, mu, B, 1.0).unwrap(),
        None,
    )
    .unwrap()
}

pub fn uniform(baseline: Vec<f64>, exponent: f64) -> Scenario {
    let n = baseline.len();
    Scenario::new(
        baseline,
        B,
        ontario_cost(),
        DiscomfortModel::uniform(n, B, exponent).unwrap(),
        None,
    )
    .unwrap()
}

/// Random scenario with `2..=max_n` slots straddling both cost breakpoints.
pub fn random_scenario(rng: &mut impl Rng, max_n: usize) -> Scenario {
    let n = rng.gen_range(2..=max_n);
    let baseline: Vec<f64> = (0..n).map(|_| rng.gen_range(12_000.0..20_000.0)).collect();
    let t = [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
    let model = if rng.gen_bool(0.5) {
        DiscomfortModel::exponential(n, rng.gen_range(0.05..2.0), B, t).unwrap()
    } else {
        DiscomfortModel::uniform(n, B, t).unwrap()
    };
    Scenario::new(baseline, B, ontario_cost(), model, None).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random point of the capped simplex `{q ≥ 0, Σq ≤ 1}` in `len` dimensions.
pub fn random_fractions(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..=len).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    q.truncate(len);
    q
}

pub fn random_plan(rng: &mut impl Rng, mechanism: Mechanism, n: usize) -> OfferPlan {
    let mut discount = || rng.gen_range(0.0..=B);
    match mechanism {
        Mechanism::Base => OfferPlan::Base {
            discounts: (0..n).map(|_| discount()).collect(),
        },
        Mechanism::Broadcast => OfferPlan::Broadcast {
            discounts: (0..n).map(|_| discount()).collect(),
        },
        Mechanism::Robust => {
            let discounts = (0..n).map(|_| discount()).collect();
            OfferPlan::Robust {
                discounts,
                fractions: random_fractions(rng, n),
            }
        }
        Mechanism::Optimized => {
            let discounts = SquareMatrix::from_fn(n, |z, i| if z == i { 0.0 } else { rng.gen_range(0.0..=B) });
            let mut fractions = SquareMatrix::zeros(n);
            for z in 0..n {
                let q = random_fractions(rng, n - 1);
                for (k, i) in (0..n).filter(|&i| i != z).enumerate() {
                    fractions[(z, i)] = q[k];
                }
            }
            OfferPlan::Optimized { discounts, fractions }
        }
    }
}
