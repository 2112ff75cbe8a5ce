//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use drmech_cli::scenario_file::load_scenario;
use drmech_core::microsim::{sample_population, simulate_plan, Correlation, Simulation};
use drmech_core::probability::{broadcast_shift_distribution, single_offer_accept_prob, TieRule};
use drmech_core::{
    dictatorial_bound, evaluate_broadcast, evaluate_plan, multi_start_minimize, optimize_mechanisms, sweep_flexibility,
    CostCurves, DiscomfortModel, Mechanism, OfferPlan, OptimizerOptions, PiecewiseLinearCost, Scenario, SquareMatrix,
    SweepPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const B: f64 = 110.0;

// Criterion 1
const CONSERVATION_TOL: f64 = 1e-9;
const CONSERVATION_PLANS: usize = 200;
const CONSERVATION_MAX_N: usize = 8;
const CONSERVATION_SECONDS: f64 = 10.0;
// Criterion 2
const ORACLE_TOL: f64 = 1e-3;
const ORACLE_GRID_STEP: f64 = 1e-2;
const ORACLE_ZOOM_LEVELS: usize = 3;
const ORACLE_STARTS: usize = 20;
const ORACLE_SECONDS: f64 = 300.0;
// Criterion 3
const RANKING_TOL: f64 = 1e-6;
// Criterion 4
const CEILING_TOL: f64 = 1e-9;
const TRANSFER_TOL: f64 = 1e-6;
const WORKED_SAVING: f64 = 20_592.0;
// Criterion 5
const SWEEP_MUS: [f64; 4] = [0.1, 1.0 / 6.0, 1.0 / 3.0, 1.0];
const SWEEP_STARTS: usize = 100;
const SWEEP_SECONDS: f64 = 900.0;
// Criterion 6
const WASTE_TOL: f64 = 1e-9;
// Criterion 7
const MC_USERS: usize = 100_000;
const MC_SEEDS: u64 = 10;
const MC_MAX_Z: f64 = 3.0;
const MC_TWO_SIGMA_SHARE: f64 = 0.95;
const MC_STARTS: usize = 10;
const MC_SECONDS: f64 = 120.0;
// Criterion 8
const TIE_TOL: f64 = 1e-12;
const TIE_SIGMAS: f64 = 3.0;
const TIE_PERTURBATION: f64 = 1e-6;
const TIE_EPSILON: f64 = 0.11;
// Criterion 9
const CLI_STARTS: &str = "2";
const CLI_USERS: &str = "10000";
const CSV_TOL: f64 = 1e-6;

struct Outcome {
    criterion: usize,
    pass: bool,
    detail: String,
}

/// Savings fractions seen anywhere in the suite, with the scenario's ceiling.
#[derive(Default)]
struct Ceiling {
    checked: usize,
    worst: f64,
    violations: Vec<String>,
}

impl Ceiling {
    fn observe(&mut self, label: &str, savings: f64, dictatorial: f64) {
        self.checked += 1;
        self.worst = self.worst.max(savings - dictatorial);
        if savings > dictatorial + CEILING_TOL {
            self.violations.push(format!("{label}: {savings} > {dictatorial}"));
        }
    }
}

fn ontario_cost() -> CostCurves {
    CostCurves::shared(PiecewiseLinearCost::new(vec![16_300.0, 17_900.0], vec![10.0, 72.46, 91.0]).unwrap())
}

/// The Ontario curve written out directly.
fn ontario(e: f64) -> f64 {
    let seg = |lo: f64, hi: f64| (e.min(hi) - lo).max(0.0);
    10.0 * seg(0.0, 16_300.0) + 72.46 * seg(16_300.0, 17_900.0) + 91.0 * seg(17_900.0, f64::INFINITY)
}

const ONTARIO_SEGMENTS: [(f64, f64, f64); 3] = [
    (0.0, 16_300.0, 10.0),
    (16_300.0, 17_900.0, 72.46),
    (17_900.0, f64::INFINITY, 91.0),
];

fn scenario(baseline: Vec<f64>, model: DiscomfortModel) -> Scenario {
    Scenario::new(baseline, B, ontario_cost(), model, None).unwrap()
}

fn uniform_flat(baseline: &[f64]) -> Scenario {
    scenario(
        baseline.to_vec(),
        DiscomfortModel::uniform(baseline.len(), B, 0.0).unwrap(),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let n = rng.gen_range(2..=CONSERVATION_MAX_N);
    let baseline: Vec<f64> = (0..n).map(|_| rng.gen_range(12_000.0..20_000.0)).collect();
    let t = [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
    let model = if rng.gen_bool(0.5) {
        DiscomfortModel::exponential(n, rng.gen_range(0.05..2.0), B, t).unwrap()
    } else {
        DiscomfortModel::uniform(n, B, t).unwrap()
    };
    scenario(baseline, model)
}

fn random_fractions(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..=len).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    q.truncate(len);
    q
}

fn random_plan(rng: &mut impl Rng, mechanism: Mechanism, n: usize) -> OfferPlan {
    let discounts = |rng: &mut dyn rand::RngCore| (0..n).map(|_| rng.gen_range(0.0..=B)).collect::<Vec<f64>>();
    match mechanism {
        Mechanism::Base => OfferPlan::Base {
            discounts: discounts(rng),
        },
        Mechanism::Broadcast => OfferPlan::Broadcast {
            discounts: discounts(rng),
        },
        Mechanism::Robust => OfferPlan::Robust {
            discounts: discounts(rng),
            fractions: random_fractions(rng, n),
        },
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

fn options(starts: usize) -> OptimizerOptions {
    OptimizerOptions {
        starts,
        ..OptimizerOptions::default()
    }
}

fn criterion_1(ceiling: &mut Ceiling) -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for mechanism in Mechanism::ALL {
        for _ in 0..CONSERVATION_PLANS {
            let s = random_scenario(&mut rng);
            let plan = random_plan(&mut rng, mechanism, s.n_slots());
            match evaluate_plan(&s, &plan, 0.0) {
                Ok((shift, breakdown)) => {
                    let before: f64 = s.baseline().iter().sum();
                    let after: f64 = shift.final_consumption().iter().sum();
                    worst = worst.max(rel(after, before));
                    let dict = dictatorial_bound(&s).saving_fraction;
                    ceiling.observe(&format!("random {mechanism} plan"), breakdown.savings_fraction, dict);
                }
                Err(e) => errors.push(format!("{mechanism}: {e}")),
            }
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    Outcome {
        criterion: 1,
        pass: errors.is_empty() && worst <= CONSERVATION_TOL && seconds < CONSERVATION_SECONDS,
        detail: format!(
            "{} plans, worst relative imbalance {worst:.2e} (tol {CONSERVATION_TOL:.0e}), {} errors, {seconds:.1}s",
            4 * CONSERVATION_PLANS,
            errors.len()
        ),
    }
}

/// Minimum of `f` over `[0, 1]^dim`: a full grid of step `ORACLE_GRID_STEP`,
/// then `ORACLE_ZOOM_LEVELS` tenfold finer grids around the incumbent.
fn grid_minimum(dim: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let points = (1.0 / ORACLE_GRID_STEP).round() as usize + 1;
    let mut best = (f64::INFINITY, vec![0.0; dim]);
    let mut x = vec![0.0; dim];
    let mut index = vec![0usize; dim];
    loop {
        for (v, k) in x.iter_mut().zip(&index) {
            *v = *k as f64 * ORACLE_GRID_STEP;
        }
        let value = f(&x);
        if value < best.0 {
            best = (value, x.clone());
        }
        let Some(d) = (0..dim).find(|&d| index[d] + 1 < points) else {
            break;
        };
        index[d] += 1;
        index[..d].iter_mut().for_each(|k| *k = 0);
    }
    let mut step = ORACLE_GRID_STEP;
    for _ in 0..ORACLE_ZOOM_LEVELS {
        let centre = best.1.clone();
        step /= 10.0;
        let mut offset = vec![-10i64; dim];
        loop {
            for d in 0..dim {
                x[d] = (centre[d] + offset[d] as f64 * step).clamp(0.0, 1.0);
            }
            let value = f(&x);
            if value < best.0 {
                best = (value, x.clone());
            }
            let Some(d) = (0..dim).find(|&d| offset[d] < 10) else {
                break;
            };
            offset[d] += 1;
            offset[..d].iter_mut().for_each(|k| *k = -10);
        }
    }
    best.0
}

/// Base offer fractions, decaying as `1/(distance + 1)`.
fn base_fraction(n: usize, j: usize, i: usize) -> f64 {
    let w = |a: usize, b: usize| 1.0 / (a.abs_diff(b) as f64 + 1.0);
    w(i, j) / (0..n).map(|k| w(k, j)).sum::<f64>()
}

fn production(e1: &[f64]) -> f64 {
    e1.iter().map(|&e| ontario(e)).sum()
}

/// With exponent 0 and uniform discomfort on `[0, B]` every move costs a
/// user `β ~ U[0, B]`, so an offer of `R` is taken with probability `R/B`.
fn base_oracle(e0: &[f64]) -> f64 {
    let n = e0.len();
    grid_minimum(n, &|a| {
        let mut e1 = e0.to_vec();
        let mut paid = 0.0;
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                let m = base_fraction(n, j, i) * a[i] * e0[j];
                e1[j] -= m;
                e1[i] += m;
                paid += a[i] * B * m;
            }
        }
        production(&e1) + paid
    })
}

/// Everyone moves to the best other slot when it beats staying by more than
/// `β`; equal best slots share the movers.
fn broadcast_oracle(e0: &[f64]) -> f64 {
    let n = e0.len();
    grid_minimum(n, &|a| {
        let mut e1 = e0.to_vec();
        for j in 0..n {
            let best = (0..n)
                .filter(|&i| i != j)
                .map(|i| a[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if best <= a[j] {
                continue;
            }
            let winners: Vec<usize> = (0..n).filter(|&i| i != j && a[i] == best).collect();
            let moved = (best - a[j]) * e0[j];
            e1[j] -= moved;
            for &i in &winners {
                e1[i] += moved / winners.len() as f64;
            }
        }
        let paid: f64 = e1.iter().zip(a).map(|(e, a)| e * a * B).sum();
        production(&e1) + paid
    })
}

/// In terms of `y_i = q_i R_i / B` the shifts are `E⁰_j y_i` and the group
/// payments `B (y_i E⁰_i + y_i² (T − E⁰_i) / q_i)`; for fixed `y` the best
/// fractions solve `min Σ c_i / q_i` over `q ≥ y`, `Σ q = 1`.
fn robust_oracle(e0: &[f64]) -> f64 {
    let n = e0.len();
    let total: f64 = e0.iter().sum();
    grid_minimum(n, &|y| {
        let used: f64 = y.iter().sum();
        if used > 1.0 + 1e-12 {
            return f64::INFINITY;
        }
        let weight: Vec<f64> = (0..n).map(|i| y[i] * (total - e0[i]).sqrt()).collect();
        let fill = |s: f64| (0..n).map(|i| y[i].max(weight[i] * s)).sum::<f64>();
        let q: Vec<f64> = if used >= 1.0 || weight.iter().all(|&w| w == 0.0) {
            y.to_vec()
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            while fill(hi) < 1.0 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if fill(mid) < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0..n).map(|i| y[i].max(weight[i] * hi)).collect()
        };
        let mut e1 = e0.to_vec();
        let mut paid = 0.0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let m = e0[j] * y[i];
                e1[j] -= m;
                e1[i] += m;
            }
            if y[i] > 0.0 {
                paid += B * (y[i] * e0[i] + y[i] * y[i] * (total - e0[i]) / q[i]);
            }
        }
        production(&e1) + paid
    })
}

/// Origin `z` sending `M_z` in total pays at least `B M_z² / E⁰_z` (fractions
/// proportional to the flows). Given the outflows, any inflows with
/// `In_i ≤ S − M_i` are realizable, and the cheapest fill greedily.
fn optimized_oracle(e0: &[f64]) -> f64 {
    let n = e0.len();
    grid_minimum(n, &|m| {
        let out: Vec<f64> = (0..n).map(|z| m[z] * e0[z]).collect();
        let sent: f64 = out.iter().sum();
        let paid: f64 = (0..n).map(|z| B * out[z] * out[z] / e0[z]).sum();
        let mut pieces = Vec::new();
        let mut cost = 0.0;
        for i in 0..n {
            let level = e0[i] - out[i];
            let cap = sent - out[i];
            cost += ontario(level);
            for (lo, hi, rate) in ONTARIO_SEGMENTS {
                let room = (hi.min(level + cap) - lo.max(level)).max(0.0);
                if room > 0.0 {
                    pieces.push((rate, room));
                }
            }
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = sent;
        for (rate, room) in pieces {
            let take = room.min(left);
            cost += rate * take;
            left -= take;
        }
        cost + paid
    })
}

fn criterion_2(ceiling: &mut Ceiling) -> Outcome {
    let clock = Instant::now();
    let cases: [&[f64]; 4] = [
        &[18_000.0, 16_000.0],
        &[19_000.0, 14_000.0],
        &[18_500.0, 15_000.0, 17_200.0],
        &[16_800.0, 18_600.0, 14_500.0],
    ];
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for e0 in cases {
        let s = uniform_flat(e0);
        let dict = dictatorial_bound(&s).saving_fraction;
        for mechanism in Mechanism::ALL {
            let oracle = match mechanism {
                Mechanism::Base => base_oracle(e0),
                Mechanism::Optimized => optimized_oracle(e0),
                Mechanism::Robust => robust_oracle(e0),
                Mechanism::Broadcast => broadcast_oracle(e0),
            };
            match multi_start_minimize(mechanism, &s, &options(ORACLE_STARTS)) {
                Ok(result) => {
                    let total = result.best_breakdown.total;
                    let gap = rel(total, oracle);
                    worst = worst.max(gap);
                    if gap > ORACLE_TOL {
                        failures.push(format!("{mechanism} {e0:?}: {total:.2} vs oracle {oracle:.2}"));
                    }
                    ceiling.observe(
                        &format!("{mechanism} optimum {e0:?}"),
                        result.best_breakdown.savings_fraction,
                        dict,
                    );
                }
                Err(e) => failures.push(format!("{mechanism} {e0:?}: {e}")),
            }
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    Outcome {
        criterion: 2,
        pass: failures.is_empty() && seconds < ORACLE_SECONDS,
        detail: format!(
            "{} scenarios x 4 mechanisms, worst relative gap to grid oracle {worst:.2e} (tol {ORACLE_TOL:.0e}), {seconds:.1}s{}",
            cases.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn shipped_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/ontario24.scenario")
}

fn total_of(point: &SweepPoint, mechanism: Mechanism) -> f64 {
    point
        .results
        .iter()
        .find(|r| r.mechanism == mechanism)
        .unwrap()
        .best_breakdown
        .total
}

fn savings_of(point: &SweepPoint, mechanism: Mechanism) -> f64 {
    point
        .results
        .iter()
        .find(|r| r.mechanism == mechanism)
        .unwrap()
        .best_breakdown
        .savings_fraction
}

fn criterion_3(sweep: &[SweepPoint]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for point in sweep {
        let optimized = total_of(point, Mechanism::Optimized);
        for other in [Mechanism::Base, Mechanism::Robust] {
            worst = worst.max((optimized - total_of(point, other)) / total_of(point, other));
        }
    }
    Outcome {
        criterion: 3,
        pass: worst <= RANKING_TOL,
        detail: format!(
            "largest (optimized - min(base, robust)) / cost over mu in {{1/10, 1/6, 1/3, 1}}: {worst:.3e} (tol {RANKING_TOL:.0e})"
        ),
    }
}

fn criterion_4(ceiling: &Ceiling) -> Outcome {
    let mut failures = ceiling.violations.clone();
    let mut worst_transfer: f64 = 0.0;
    for (a, b) in [
        (18_000.0, 16_000.0),
        (19_500.0, 12_000.0),
        (16_000.0, 16_100.0),
        (21_000.0, 19_000.0),
    ] {
        let s = uniform_flat(&[a, b]);
        let total: f64 = a + b;
        // every kink of the objective sits on an integer MWh
        let best = (0..=total as i64)
            .map(|x| ontario(x as f64) + ontario(total - x as f64))
            .fold(f64::INFINITY, f64::min);
        let oracle = ontario(a) + ontario(b) - best;
        worst_transfer = worst_transfer.max((dictatorial_bound(&s).saving - oracle).abs());
    }
    let worked = dictatorial_bound(&uniform_flat(&[18_000.0, 16_000.0])).saving;
    if worst_transfer > TRANSFER_TOL {
        failures.push(format!("transfer grid mismatch {worst_transfer:.2e}"));
    }
    if (worked - WORKED_SAVING).abs() > TRANSFER_TOL {
        failures.push(format!("worked example saving {worked}"));
    }
    Outcome {
        criterion: 4,
        pass: failures.is_empty(),
        detail: format!(
            "{} savings checked, max excess over dictatorial {:.3e} (tol {CEILING_TOL:.0e}); transfer grid error {worst_transfer:.1e}, worked example {worked:.6} $",
            ceiling.checked, ceiling.worst
        ),
    }
}

fn criterion_5(sweep: &[SweepPoint], seconds: f64) -> Outcome {
    let series = |m: Mechanism| sweep.iter().map(|p| savings_of(p, m)).collect::<Vec<f64>>();
    let optimized = series(Mechanism::Optimized);
    let robust = series(Mechanism::Robust);
    let gap: Vec<f64> = optimized.iter().zip(&robust).map(|(o, r)| o - r).collect();
    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Outcome {
        criterion: 5,
        pass: nondecreasing(&optimized)
            && nondecreasing(&robust)
            && gap.windows(2).all(|w| w[1] <= w[0])
            && seconds < SWEEP_SECONDS,
        detail: format!(
            "savings optimized [{}], robust [{}], gap [{}], {SWEEP_STARTS} starts, {seconds:.1}s",
            fmt(&optimized),
            fmt(&robust),
            fmt(&gap)
        ),
    }
}

fn robust_waste(plan: &OfferPlan, e0: &[f64]) -> f64 {
    match plan {
        OfferPlan::Robust { discounts, fractions } => (0..e0.len()).map(|i| discounts[i] * fractions[i] * e0[i]).sum(),
        _ => 0.0,
    }
}

fn criterion_6(sweep: &[SweepPoint], shipped: &Scenario) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut check = |s: &Scenario, plan: &OfferPlan, label: &str| {
        let (_, breakdown) = evaluate_plan(s, plan, 0.0).unwrap();
        checked += 1;
        match plan {
            OfferPlan::Base { .. } | OfferPlan::Optimized { .. } => {
                if breakdown.wasted_discounts != 0.0 {
                    failures.push(format!("{label}: waste {}", breakdown.wasted_discounts));
                }
            }
            OfferPlan::Robust { .. } => {
                let expected = robust_waste(plan, s.baseline());
                let err = if expected == 0.0 {
                    breakdown.wasted_discounts.abs()
                } else {
                    rel(breakdown.wasted_discounts, expected)
                };
                worst = worst.max(err);
                if err > WASTE_TOL {
                    failures.push(format!("{label}: waste {} vs {expected}", breakdown.wasted_discounts));
                }
            }
            OfferPlan::Broadcast { .. } => {}
        }
    };
    for mechanism in [Mechanism::Base, Mechanism::Optimized, Mechanism::Robust] {
        for _ in 0..CONSERVATION_PLANS {
            let s = random_scenario(&mut rng);
            let plan = random_plan(&mut rng, mechanism, s.n_slots());
            check(&s, &plan, &format!("random {mechanism}"));
        }
    }
    for point in sweep {
        let at_mu = shipped.with_mu(point.mu).unwrap();
        for r in &point.results {
            check(
                &at_mu,
                &r.best_plan,
                &format!("{} optimum at mu {}", r.mechanism, point.mu),
            );
        }
    }
    Outcome {
        criterion: 6,
        pass: failures.is_empty(),
        detail: format!(
            "{checked} plans; base/optimized waste exactly 0; robust waste vs sum R_i q_i E0_i worst relative error {worst:.1e} (tol {WASTE_TOL:.0e}){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

/// Analytic probability behind each tally of a simulation.
fn analytic(s: &Scenario, plan: &OfferPlan, sim: &Simulation) -> Vec<f64> {
    let model = s.discomfort();
    sim.tallies
        .iter()
        .map(|t| {
            let (j, i) = (t.origin, t.destination);
            match plan {
                OfferPlan::Base { discounts } | OfferPlan::Robust { discounts, .. } => {
                    single_offer_accept_prob(model, j, i, discounts[i]).unwrap()
                }
                OfferPlan::Optimized { discounts, .. } => {
                    single_offer_accept_prob(model, j, i, discounts[(j, i)]).unwrap()
                }
                OfferPlan::Broadcast { discounts } => {
                    broadcast_shift_distribution(model, j, discounts, TieRule::for_flat_rate(B, 0.0)).probabilities[i]
                }
            }
        })
        .collect()
}

fn criterion_7(ceiling: &mut Ceiling) -> Outcome {
    let clock = Instant::now();
    let s = scenario(
        vec![18_500.0, 15_000.0, 17_200.0],
        DiscomfortModel::exponential(3, 1.0 / 3.0, B, 1.0).unwrap(),
    );
    let dict = dictatorial_bound(&s).saving_fraction;
    let results = optimize_mechanisms(&s, &Mechanism::ALL, &options(MC_STARTS), &[]).unwrap();
    let (mut total, mut within_two, mut max_z, mut degenerate_misses) = (0usize, 0usize, 0.0f64, 0usize);
    for r in &results {
        ceiling.observe(
            &format!("{} optimum (simulation scenario)", r.mechanism),
            r.best_breakdown.savings_fraction,
            dict,
        );
    }
    for seed in 0..MC_SEEDS {
        let population = sample_population(&s, MC_USERS, seed, Correlation::Correlated).unwrap();
        for r in &results {
            let sim = simulate_plan(&s, &r.best_plan, &population).unwrap();
            for (t, p) in sim.tallies.iter().zip(analytic(&s, &r.best_plan, &sim)) {
                if t.group_size == 0 {
                    continue;
                }
                let realized = t.moved as f64 / t.group_size as f64;
                let sd = (p * (1.0 - p) / t.group_size as f64).sqrt();
                if sd == 0.0 {
                    degenerate_misses += usize::from(realized != p);
                    continue;
                }
                let z = (realized - p).abs() / sd;
                total += 1;
                within_two += usize::from(z <= 2.0);
                max_z = max_z.max(z);
            }
        }
    }
    let share = within_two as f64 / total.max(1) as f64;
    let seconds = clock.elapsed().as_secs_f64();
    Outcome {
        criterion: 7,
        pass: max_z <= MC_MAX_Z && share >= MC_TWO_SIGMA_SHARE && degenerate_misses == 0 && seconds < MC_SECONDS,
        detail: format!(
            "{total} shift fractions over {MC_SEEDS} seeds at U = {MC_USERS}: max |z| {max_z:.2} (limit {MC_MAX_Z}), {:.1}% within 2 sigma (need {:.0}%), {degenerate_misses} deterministic mismatches, {seconds:.1}s",
            100.0 * share,
            100.0 * MC_TWO_SIGMA_SHARE
        ),
    }
}

fn criterion_8() -> Outcome {
    // mean discomfort 10 $/MWh per slot of distance; slot 1 sees two equal offers
    let model = DiscomfortModel::exponential(3, 1.0, 10.0, 1.0).unwrap();
    let discounts = [10.0, 0.0, 10.0];
    let expected = 0.5 * (1.0 - (-1.0f64).exp());
    let exact = broadcast_shift_distribution(&model, 1, &discounts, TieRule::for_flat_rate(B, 0.0));
    let analytic_err = (exact.probabilities[0] - expected)
        .abs()
        .max((exact.probabilities[2] - expected).abs());

    let s = scenario(vec![17_000.0, 15_000.0, 15_500.0], model);
    let population = sample_population(&s, MC_USERS, 8, Correlation::Correlated).unwrap();
    let sim = simulate_plan(
        &s,
        &OfferPlan::Broadcast {
            discounts: discounts.to_vec(),
        },
        &population,
    )
    .unwrap();
    let group: u64 = sim.counts[1].iter().sum();
    let sd = (expected * (1.0 - expected) / group as f64).sqrt();
    let sim_z = [0, 2]
        .iter()
        .map(|&i| (sim.counts[1][i] as f64 / group as f64 - expected).abs() / sd)
        .fold(0.0, f64::max);

    let nudged = [10.0 + TIE_PERTURBATION, 0.0, 10.0];
    let cost = |d: &[f64], eps: f64| evaluate_broadcast(&s, d, eps).unwrap().1.total;
    let jump = (cost(&nudged, 0.0) - cost(&discounts, 0.0)).abs();
    let smooth_change = (cost(&nudged, TIE_EPSILON) - cost(&discounts, TIE_EPSILON)).abs();
    let e0_scale = s.baseline().iter().copied().fold(0.0, f64::max);
    let smooth_limit = 10.0 * TIE_EPSILON * e0_scale;
    Outcome {
        criterion: 8,
        pass: exact.tie_detected
            && analytic_err <= TIE_TOL
            && sim_z <= TIE_SIGMAS
            && jump > 0.0
            && smooth_change < smooth_limit,
        detail: format!(
            "tie split error {analytic_err:.1e} (tol {TIE_TOL:.0e}), simulated |z| {sim_z:.2} (limit {TIE_SIGMAS}); exact cost jump {jump:.2} $ over a {TIE_PERTURBATION:.0e} nudge, smoothed change {smooth_change:.3e} $ < {smooth_limit:.0} $ at eps {TIE_EPSILON}"
        ),
    }
}

fn run_cli(out: &Path, threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_drmech"))
        .args(["simulate", "--scenario"])
        .arg(shipped_scenario())
        .args([
            "--mechanism",
            "all",
            "--starts",
            CLI_STARTS,
            "--seed",
            "7",
            "--users",
            CLI_USERS,
        ])
        .args(["--mu", "1/3", "--out"])
        .arg(out)
        .env("DRMECH_THREADS", threads)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("drmech exited with {status}"))
    }
}

/// `results.csv` without its wall-time column.
fn without_wall_time(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .map(|line| line.rsplit_once(',').map_or(line, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn csv_identities(path: &Path) -> Result<f64, String> {
    let rows = drmech_cli::results::read_results(path).map_err(|e| e.to_string())?;
    let baseline = dictatorial_bound(&load_scenario(shipped_scenario()).map_err(|e| e.to_string())?).baseline_cost;
    let mut worst: f64 = 0.0;
    for r in rows {
        worst = worst.max(rel(r.production_cost + r.discounts_paid, r.total_cost));
        worst = worst.max((r.savings_fraction - (1.0 - r.total_cost / baseline)).abs());
    }
    Ok(worst)
}

fn criterion_9() -> Outcome {
    let attempt = || -> Result<String, String> {
        let s = scenario(
            vec![18_500.0, 15_000.0, 17_200.0, 16_100.0],
            DiscomfortModel::exponential(4, 1.0 / 3.0, B, 1.0).unwrap(),
        );
        for mechanism in Mechanism::ALL {
            let runs: Vec<_> = [Some(1), Some(4), Some(1)]
                .into_iter()
                .map(|threads| {
                    let o = OptimizerOptions {
                        starts: 6,
                        seed: 11,
                        threads,
                        ..OptimizerOptions::default()
                    };
                    multi_start_minimize(mechanism, &s, &o).map_err(|e| e.to_string())
                })
                .collect::<Result<_, _>>()?;
            if !(runs[0].same_outcome(&runs[1]) && runs[0].same_outcome(&runs[2])) {
                return Err(format!("{mechanism} optimum depends on the run or thread count"));
            }
        }

        let root = std::env::temp_dir().join(format!("drmech-acceptance-{}", std::process::id()));
        let dirs: Vec<PathBuf> = ["a1", "b1", "c4"].iter().map(|d| root.join(d)).collect();
        for (dir, threads) in dirs.iter().zip(["1", "1", "4"]) {
            run_cli(dir, threads)?;
        }
        let reference = without_wall_time(&dirs[0].join("results.csv"))?;
        for dir in &dirs[1..] {
            if without_wall_time(&dir.join("results.csv"))? != reference {
                return Err(format!("results.csv differs in {}", dir.display()));
            }
            for file in ["plans.json", "simulation.csv"] {
                let a = fs::read(dirs[0].join(file)).map_err(|e| e.to_string())?;
                let b = fs::read(dir.join(file)).map_err(|e| e.to_string())?;
                if a != b {
                    return Err(format!("{file} differs in {}", dir.display()));
                }
            }
        }
        let worst = csv_identities(&dirs[0].join("results.csv"))?;
        let _ = fs::remove_dir_all(&root);
        if worst > CSV_TOL {
            return Err(format!("CSV accounting identities off by {worst:.2e}"));
        }
        Ok(format!(
            "optima identical over repeated runs and 1 vs 4 threads; CLI outputs byte-identical (results.csv without wall_time_s, plans.json, simulation.csv) for DRMECH_THREADS 1, 1, 4; CSV identities within {worst:.1e}"
        ))
    };
    match attempt() {
        Ok(detail) => Outcome {
            criterion: 9,
            pass: true,
            detail,
        },
        Err(detail) => Outcome {
            criterion: 9,
            pass: false,
            detail,
        },
    }
}

fn main() -> ExitCode {
    let mut ceiling = Ceiling::default();
    let mut outcomes = vec![criterion_1(&mut ceiling), criterion_2(&mut ceiling)];

    let shipped = load_scenario(shipped_scenario()).expect("shipped scenario loads");
    let clock = Instant::now();
    let sweep = sweep_flexibility(
        &shipped,
        &[Mechanism::Base, Mechanism::Robust, Mechanism::Optimized],
        &SWEEP_MUS,
        &options(SWEEP_STARTS),
    )
    .expect("sweep of the shipped scenario");
    let sweep_seconds = clock.elapsed().as_secs_f64();
    let dict = dictatorial_bound(&shipped).saving_fraction;
    for point in &sweep {
        for r in &point.results {
            ceiling.observe(
                &format!("{} at mu {}", r.mechanism, point.mu),
                r.best_breakdown.savings_fraction,
                dict,
            );
        }
    }
    outcomes.push(criterion_3(&sweep));
    outcomes.push(criterion_5(&sweep, sweep_seconds));
    outcomes.push(criterion_6(&sweep, &shipped));
    outcomes.push(criterion_7(&mut ceiling));
    outcomes.push(criterion_8());
    outcomes.push(criterion_9());
    outcomes.push(criterion_4(&ceiling));
    outcomes.sort_by_key(|o| o.criterion);

    for o in &outcomes {
        println!(
            "criterion {}: {} - {}",
            o.criterion,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if outcomes.iter().all(|o| o.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
