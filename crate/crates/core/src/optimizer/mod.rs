//! Multi-start projected local descent over each mechanism's feasible set.
//!
//! Variables are normalized before descent: discounts are divided by the flat
//! rate (so every box is `[0, 1]`) and the objective is the total cost divided
//! by the baseline production cost.

mod descent;
mod projection;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use descent::{local_descent, DescentOptions, DescentOutcome, FiniteDifference, Objective};
pub use projection::{project_box, project_box_in_place, project_capped_simplex, project_capped_simplex_in_place};

use crate::error::{Error, Result};
use crate::mechanisms::{base_offers, broadcast_outcome, robust_offers, single_offer_outcome};
use crate::model::{CostBreakdown, Mechanism, OfferPlan, OptimizationResult, Scenario, SquareMatrix, StartRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Closed-form gradients for base, optimized and robust; broadcast always
    /// falls back to finite differences.
    Analytic,
    FiniteDifference,
}

/// Geometric sequence of smoothing widths, as fractions of a reference unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSchedule {
    pub start: f64,
    pub end: f64,
    pub stages: usize,
}

impl Default for SmoothingSchedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 1e-3,
            stages: 3,
        }
    }
}

impl SmoothingSchedule {
    /// Smoothing widths in units of `unit`.
    pub fn epsilons(&self, unit: f64) -> Vec<f64> {
        if self.stages == 0 {
            return Vec::new();
        }
        if self.stages == 1 {
            return vec![self.end * unit];
        }
        let ratio = (self.end / self.start).powf(1.0 / (self.stages - 1) as f64);
        (0..self.stages)
            .map(|k| self.start * ratio.powi(k as i32) * unit)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub starts: usize,
    pub descent: DescentOptions,
    pub gradient: GradientMode,
    /// Finite-difference step as a fraction of the flat rate.
    pub fd_step: f64,
    /// Broadcast tie smoothing, relative to the flat rate.
    pub smoothing: SmoothingSchedule,
    /// Softening of the production-cost kinks for base, optimized and robust
    /// descents, relative to the mean baseline demand of a slot. A final
    /// exact stage always follows.
    pub cost_smoothing: SmoothingSchedule,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            starts: 100,
            descent: DescentOptions::default(),
            gradient: GradientMode::Analytic,
            fd_step: 1e-5,
            smoothing: SmoothingSchedule::default(),
            cost_smoothing: SmoothingSchedule {
                start: 0.02,
                end: 0.002,
                stages: 3,
            },
            seed: 0,
            threads: None,
        }
    }
}

/// One mechanism's problem in normalized coordinates.
#[derive(Clone)]
pub(crate) struct Problem<'a> {
    scenario: &'a Scenario,
    mechanism: Mechanism,
    /// Off-diagonal `(z, i)` pairs in row-major order (optimized layout).
    pairs: Vec<(usize, usize)>,
    norm: f64,
    /// $ per unit of a discount coordinate: a typical discomfort, so that
    /// discount and fraction coordinates have comparable curvature.
    unit: f64,
    /// Broadcast smoothing width in $/MWh.
    smoothing: f64,
    /// Production-cost kink width in MWh.
    cost_smoothing: f64,
    gradient: GradientMode,
    fd_step: f64,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(scenario: &'a Scenario, mechanism: Mechanism, gradient: GradientMode, fd_step: f64) -> Self {
        let n = scenario.n_slots();
        let pairs = (0..n)
            .flat_map(|z| (0..n).filter(move |&i| i != z).map(move |i| (z, i)))
            .collect();
        let baseline = scenario.baseline_cost();
        Self {
            scenario,
            mechanism,
            pairs,
            norm: if baseline > 0.0 { baseline } else { 1.0 },
            unit: discount_unit(scenario),
            smoothing: 0.0,
            cost_smoothing: 0.0,
            gradient,
            fd_step,
        }
    }

    fn n(&self) -> usize {
        self.scenario.n_slots()
    }

    /// Upper bound of a discount coordinate, i.e. the flat rate.
    fn discount_max(&self) -> f64 {
        self.scenario.flat_rate() / self.unit
    }

    pub(crate) fn dim(&self) -> usize {
        match self.mechanism {
            Mechanism::Base | Mechanism::Broadcast => self.n(),
            Mechanism::Robust => 2 * self.n(),
            Mechanism::Optimized => 2 * self.pairs.len(),
        }
    }

    /// Length of the leading discount block.
    fn discount_dim(&self) -> usize {
        match self.mechanism {
            Mechanism::Optimized => self.pairs.len(),
            _ => self.n(),
        }
    }

    pub(crate) fn project(&self, x: &mut [f64]) {
        let split = self.discount_dim();
        let (discounts, fractions) = x.split_at_mut(split);
        project_box_in_place(discounts, 0.0, self.discount_max());
        match self.mechanism {
            Mechanism::Robust => project_capped_simplex_in_place(fractions, 1.0),
            Mechanism::Optimized => {
                for row in fractions.chunks_mut(self.n() - 1) {
                    project_capped_simplex_in_place(row, 1.0);
                }
            }
            Mechanism::Base | Mechanism::Broadcast => {}
        }
    }

    pub(crate) fn decode(&self, x: &[f64]) -> OfferPlan {
        let b = self.scenario.flat_rate();
        let n = self.n();
        let price = |v: f64| (v * self.unit).clamp(0.0, b);
        match self.mechanism {
            Mechanism::Base => OfferPlan::Base {
                discounts: x.iter().map(|&v| price(v)).collect(),
            },
            Mechanism::Broadcast => OfferPlan::Broadcast {
                discounts: x.iter().map(|&v| price(v)).collect(),
            },
            Mechanism::Robust => OfferPlan::Robust {
                discounts: x[..n].iter().map(|&v| price(v)).collect(),
                fractions: x[n..].to_vec(),
            },
            Mechanism::Optimized => {
                let m = self.pairs.len();
                let mut discounts = SquareMatrix::zeros(n);
                let mut fractions = SquareMatrix::zeros(n);
                for (k, &(z, i)) in self.pairs.iter().enumerate() {
                    discounts[(z, i)] = price(x[k]);
                    fractions[(z, i)] = x[m + k];
                }
                OfferPlan::Optimized { discounts, fractions }
            }
        }
    }

    pub(crate) fn encode(&self, plan: &OfferPlan) -> Vec<f64> {
        match plan {
            OfferPlan::Base { discounts } | OfferPlan::Broadcast { discounts } => {
                discounts.iter().map(|r| r / self.unit).collect()
            }
            OfferPlan::Robust { discounts, fractions } => discounts
                .iter()
                .map(|r| r / self.unit)
                .chain(fractions.iter().copied())
                .collect(),
            OfferPlan::Optimized { discounts, fractions } => self
                .pairs
                .iter()
                .map(|&p| discounts[p] / self.unit)
                .chain(self.pairs.iter().map(|&p| fractions[p]))
                .collect(),
        }
    }

    /// Uniform draw from the feasible set.
    pub(crate) fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let hi = self.discount_max();
        let mut x: Vec<f64> = (0..self.discount_dim()).map(|_| hi * rng.gen::<f64>()).collect();
        match self.mechanism {
            Mechanism::Robust => x.extend(sample_capped_simplex(self.n(), rng)),
            Mechanism::Optimized => {
                for _ in 0..self.n() {
                    x.extend(sample_capped_simplex(self.n() - 1, rng));
                }
            }
            Mechanism::Base | Mechanism::Broadcast => {}
        }
        x
    }

    /// Full breakdown at `x`; broadcast uses the current smoothing width.
    pub(crate) fn breakdown(&self, x: &[f64]) -> CostBreakdown {
        self.evaluate(x, false).0
    }

    fn evaluate(&self, x: &[f64], with_gradient: bool) -> (CostBreakdown, Option<Vec<f64>>) {
        let n = self.n();
        let (outcome, grad) = match self.decode(x) {
            OfferPlan::Broadcast { discounts } => {
                return (broadcast_outcome(self.scenario, &discounts, self.smoothing).1, None);
            }
            OfferPlan::Base { discounts } => {
                let (r, w) = base_offers(self.scenario, &discounts);
                let out = single_offer_outcome(self.scenario, &r, &w, None, with_gradient, self.cost_smoothing);
                let grad = out.grad_discount.as_ref().map(SquareMatrix::column_sums);
                (out, grad)
            }
            OfferPlan::Robust { discounts, fractions } => {
                let (r, w) = robust_offers(n, &discounts, &fractions);
                let out = single_offer_outcome(
                    self.scenario,
                    &r,
                    &w,
                    Some((&discounts, &fractions)),
                    with_gradient,
                    self.cost_smoothing,
                );
                let grad = out
                    .grad_discount
                    .as_ref()
                    .zip(out.grad_fraction.as_ref())
                    .map(|(gr, gw)| {
                        let mut g = gr.column_sums();
                        g.extend(gw.column_sums());
                        g
                    });
                (out, grad)
            }
            OfferPlan::Optimized { discounts, fractions } => {
                let out = single_offer_outcome(
                    self.scenario,
                    &discounts,
                    &fractions,
                    None,
                    with_gradient,
                    self.cost_smoothing,
                );
                let grad = out
                    .grad_discount
                    .as_ref()
                    .zip(out.grad_fraction.as_ref())
                    .map(|(gr, gw)| {
                        self.pairs
                            .iter()
                            .map(|&p| gr[p])
                            .chain(self.pairs.iter().map(|&p| gw[p]))
                            .collect()
                    });
                (out, grad)
            }
        };
        let split = self.discount_dim();
        let grad = grad.map(|mut g: Vec<f64>| {
            for (k, v) in g.iter_mut().enumerate() {
                *v *= if k < split { self.unit } else { 1.0 } / self.norm;
            }
            g
        });
        (outcome.breakdown, grad)
    }

    /// `(discount, fraction)` coordinate pairs of every individual offer.
    fn offers(&self) -> Vec<(usize, usize)> {
        let split = self.discount_dim();
        match self.mechanism {
            Mechanism::Robust | Mechanism::Optimized => (0..split).map(|k| (k, split + k)).collect(),
            Mechanism::Base | Mechanism::Broadcast => Vec::new(),
        }
    }

    /// Offers with a zero fraction have no gradient in their discount, so a
    /// descent can strand them at a discount where switching them on never
    /// pays. For each such offer, scans the discount with a small trial
    /// fraction and keeps the best change that lowers the objective.
    fn reactivate(&self, x: &mut [f64], value: &mut f64) -> bool {
        const TRIAL_FRACTION: f64 = 1e-3;
        const DISCOUNT_STEPS: usize = 32;
        let row_len = match self.mechanism {
            Mechanism::Optimized => self.n() - 1,
            _ => self.n(),
        };
        let split = self.discount_dim();
        let mut changed = false;
        for (d, f) in self.offers() {
            if x[f] != 0.0 {
                continue;
            }
            let row = (f - split) / row_len;
            let row_sum: f64 = x[split + row * row_len..split + (row + 1) * row_len].iter().sum();
            if row_sum + TRIAL_FRACTION > 1.0 {
                continue;
            }
            let old = x[d];
            x[f] = TRIAL_FRACTION;
            let mut best = (*value, old);
            for step in 1..=DISCOUNT_STEPS {
                x[d] = self.discount_max() * step as f64 / DISCOUNT_STEPS as f64;
                let v = self.value(x);
                if v < best.0 {
                    best = (v, x[d]);
                }
            }
            if best.0 < *value {
                x[d] = best.1;
                *value = best.0;
                changed = true;
            } else {
                x[d] = old;
                x[f] = 0.0;
            }
        }
        changed
    }

    fn uses_finite_differences(&self) -> bool {
        self.mechanism == Mechanism::Broadcast || self.gradient == GradientMode::FiniteDifference
    }

    fn fd_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let split = self.discount_dim();
        let discount_step = self.fd_step * self.scenario.flat_rate() / self.unit;
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            let (h, hi) = if k < split {
                (discount_step, self.discount_max())
            } else {
                (self.fd_step, 1.0)
            };
            let up = (x[k] + h).min(hi);
            let down = (x[k] - h).max(0.0);
            probe[k] = up;
            let f_up = self.value(&probe);
            probe[k] = down;
            let f_down = self.value(&probe);
            probe[k] = x[k];
            grad[k] = if up > down { (f_up - f_down) / (up - down) } else { 0.0 };
        }
        self.value(x)
    }
}

impl Objective for Problem<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.breakdown(x).total / self.norm
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        if self.uses_finite_differences() {
            return self.fd_gradient(x, grad);
        }
        let (breakdown, g) = self.evaluate(x, true);
        grad.copy_from_slice(&g.expect("analytic gradient for single-offer mechanisms"));
        breakdown.total / self.norm
    }
}

/// Mean over origin slots of the `1 − 1/e` discomfort quantile at unit
/// distance (the mean for exponential discomfort), capped at the flat rate.
fn discount_unit(scenario: &Scenario) -> f64 {
    let b = scenario.flat_rate();
    let slots = scenario.discomfort().slots();
    let typical = slots.iter().map(|s| s.quantile(1.0 - (-1.0f64).exp())).sum::<f64>() / slots.len() as f64;
    if typical.is_finite() && typical > 0.0 {
        typical.min(b)
    } else {
        b
    }
}

/// Uniform point of `{q ≥ 0, Σ q ≤ 1}` in `dim` dimensions: the first `dim`
/// coordinates of normalized exponential spacings.
fn sample_capped_simplex(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let spacings: Vec<f64> = (0..=dim).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = spacings.iter().sum();
    spacings[..dim].iter().map(|s| s / total).collect()
}

/// Where a start comes from.
enum StartPoint {
    Random(u64),
    Given(Vec<f64>),
}

struct StartOutcome {
    record: StartRecord,
    x: Option<Vec<f64>>,
}

fn run_start(problem: &Problem, start: &StartPoint, index: usize, options: &OptimizerOptions) -> StartOutcome {
    let x0 = match start {
        StartPoint::Random(seed) => problem.sample(&mut ChaCha8Rng::seed_from_u64(*seed)),
        StartPoint::Given(x) => x.clone(),
    };
    let result = if problem.mechanism == Mechanism::Broadcast {
        descend_broadcast(problem, x0, options)
    } else {
        descend_single_offer(problem, x0, options)
    };
    match result {
        Ok((x, iterations)) => {
            let exact = Problem {
                smoothing: 0.0,
                cost_smoothing: 0.0,
                ..problem.clone()
            };
            let total = exact.breakdown(&x).total;
            StartOutcome {
                record: StartRecord {
                    index,
                    objective: Some(total),
                    iterations,
                    diagnostic: None,
                },
                x: Some(x),
            }
        }
        Err(e) => StartOutcome {
            record: StartRecord {
                index,
                objective: None,
                iterations: 0,
                diagnostic: Some(e.to_string()),
            },
            x: None,
        },
    }
}

/// Local descent plus reactivation rounds, within `budget` iterations.
fn descend_with_reactivation(
    problem: &Problem,
    x0: Vec<f64>,
    descent: &DescentOptions,
    budget: usize,
) -> Result<(Vec<f64>, usize)> {
    const MAX_ROUNDS: usize = 25;
    let project = |x: &mut [f64]| problem.project(x);
    let limited = |used: usize| DescentOptions {
        max_iters: budget - used,
        ..*descent
    };
    let mut out = local_descent(problem, x0, &project, &limited(0))?;
    let mut used = out.iterations;
    for _ in 0..MAX_ROUNDS {
        if used >= budget {
            break;
        }
        let mut x = out.x;
        let mut value = out.value;
        if !problem.reactivate(&mut x, &mut value) {
            return Ok((x, used));
        }
        out = local_descent(problem, x, &project, &limited(used))?;
        used += out.iterations;
    }
    Ok((out.x, used))
}

/// Splits `max_iters` over the first `main` stages; iterations a stage leaves
/// unused carry over, and any later stages share what is left. Returns the
/// point with the lowest exact cost among the start and the end of every
/// stage, since a smoothed stage can move uphill in exact cost.
fn staged(
    x0: Vec<f64>,
    options: &OptimizerOptions,
    stages: &[Problem],
    main: usize,
    reactivate: bool,
) -> Result<(Vec<f64>, usize)> {
    let exact = Problem {
        smoothing: 0.0,
        cost_smoothing: 0.0,
        ..stages[0].clone()
    };
    let mut best = (exact.value(&x0), x0.clone());
    let mut x = x0;
    let mut used = 0;
    for (k, stage) in stages.iter().enumerate() {
        let share = if k < main { main - k } else { stages.len() - k };
        let budget = (options.descent.max_iters - used) / share;
        let (next, its) = if reactivate {
            descend_with_reactivation(stage, x, &options.descent, budget)?
        } else {
            let descent = DescentOptions {
                max_iters: budget,
                ..options.descent
            };
            let out = local_descent(stage, x, &|x: &mut [f64]| stage.project(x), &descent)?;
            (out.x, out.iterations)
        };
        x = next;
        used += its;
        let value = exact.value(&x);
        if value < best.0 {
            best = (value, x.clone());
        }
    }
    Ok((best.1, used))
}

/// Descends with softened production-cost kinks of decreasing width, then
/// exactly. Optima often sit where a slot's load is pinned to a breakpoint;
/// the exact stage cannot follow such a valley, so a last pass at a tenth of
/// the final width and another exact stage close the remaining gap.
fn descend_single_offer(problem: &Problem, x0: Vec<f64>, options: &OptimizerOptions) -> Result<(Vec<f64>, usize)> {
    let mean_demand = problem.scenario.total_demand() / problem.n() as f64;
    let mut widths = options.cost_smoothing.epsilons(mean_demand);
    widths.push(0.0);
    let main = widths.len();
    if let Some(&last) = widths.iter().rev().nth(1) {
        widths.extend([last / 10.0, 0.0]);
    }
    let stages: Vec<Problem> = widths
        .into_iter()
        .map(|width| Problem {
            cost_smoothing: width,
            ..problem.clone()
        })
        .collect();
    staged(x0, options, &stages, main, true)
}

/// Descends the smoothed broadcast objective, re-polishing at each smaller
/// width and finally on the exact tie law. The smoothing spreads mass over
/// every option of an equal-slope class, which can make a tie point a smoothed
/// local minimum even when the exact cost still decreases from it.
fn descend_broadcast(problem: &Problem, x0: Vec<f64>, options: &OptimizerOptions) -> Result<(Vec<f64>, usize)> {
    let mut widths = options.smoothing.epsilons(problem.scenario.flat_rate());
    widths.push(0.0);
    let stages: Vec<Problem> = widths
        .into_iter()
        .map(|eps| Problem {
            smoothing: eps,
            ..problem.clone()
        })
        .collect();
    staged(x0, options, &stages, stages.len(), false)
}

/// Best of `options.starts` uniformly drawn starts plus the zero plan.
pub fn multi_start_minimize(
    mechanism: Mechanism,
    scenario: &Scenario,
    options: &OptimizerOptions,
) -> Result<OptimizationResult> {
    multi_start_minimize_with(mechanism, scenario, options, &[])
}

/// Like [`multi_start_minimize`], with extra starts taken from `warm_starts`
/// (plans of the same mechanism, or of a mechanism that embeds into it).
///
/// Start `k < options.starts` is drawn with seed `options.seed ^ k`, so the
/// result does not depend on scheduling or thread count.
pub fn multi_start_minimize_with(
    mechanism: Mechanism,
    scenario: &Scenario,
    options: &OptimizerOptions,
    warm_starts: &[OfferPlan],
) -> Result<OptimizationResult> {
    let clock = Instant::now();
    let problem = Problem::new(scenario, mechanism, options.gradient, options.fd_step);

    let mut starts: Vec<StartPoint> = (0..options.starts as u64)
        .map(|k| StartPoint::Random(options.seed ^ k))
        .collect();
    starts.push(StartPoint::Given(vec![0.0; problem.dim()]));
    for plan in warm_starts {
        let embedded = plan.embed_into(mechanism, scenario)?;
        embedded.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
        let mut x = problem.encode(&embedded);
        problem.project(&mut x);
        starts.push(StartPoint::Given(x));
    }

    let run_all = || -> Vec<StartOutcome> {
        starts
            .par_iter()
            .enumerate()
            .map(|(index, start)| run_start(&problem, start, index, options))
            .collect()
    };
    let outcomes = match options.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let best = outcomes
        .iter()
        .filter_map(|o| Some((o.record.objective?, o.record.index, o.x.as_ref()?)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some((_, _, best_x)) = best else {
        return Err(Error::AllStartsFailed(
            outcomes
                .iter()
                .map(|o| {
                    format!(
                        "start {}: {}",
                        o.record.index,
                        o.record.diagnostic.clone().unwrap_or_default()
                    )
                })
                .collect(),
        ));
    };

    let best_plan = problem.decode(best_x);
    let best_breakdown = problem.breakdown(best_x);
    Ok(OptimizationResult {
        mechanism,
        best_plan,
        best_breakdown,
        starts: outcomes.len(),
        per_start: outcomes.into_iter().map(|o| o.record).collect(),
        seed: options.seed,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Optimizes several mechanisms on one scenario. Base and robust optima are
/// added as starts of the optimized mechanism, so its reported cost never
/// exceeds theirs.
pub fn optimize_mechanisms(
    scenario: &Scenario,
    mechanisms: &[Mechanism],
    options: &OptimizerOptions,
    warm_starts: &[OfferPlan],
) -> Result<Vec<OptimizationResult>> {
    let mut done: Vec<OptimizationResult> = Vec::new();
    let mut order: Vec<Mechanism> = mechanisms.to_vec();
    order.sort();
    order.dedup();
    // Optimized last so it can reuse the simpler optima.
    order.sort_by_key(|&m| m == Mechanism::Optimized);
    for mechanism in order {
        let mut extra: Vec<OfferPlan> = warm_starts
            .iter()
            .filter(|p| p.embed_into(mechanism, scenario).is_ok())
            .cloned()
            .collect();
        if mechanism == Mechanism::Optimized {
            extra.extend(
                done.iter()
                    .filter(|r| matches!(r.mechanism, Mechanism::Base | Mechanism::Robust))
                    .map(|r| r.best_plan.clone()),
            );
        }
        done.push(multi_start_minimize_with(mechanism, scenario, options, &extra)?);
    }
    Ok(mechanisms
        .iter()
        .filter_map(|m| done.iter().find(|r| r.mechanism == *m).cloned())
        .collect())
}

/// Optima of one flexibility value in a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub mu: f64,
    pub results: Vec<OptimizationResult>,
}

/// Optimizes `mechanisms` on `scenario.with_mu(mu)` for each `mu`.
///
/// Values are visited in increasing order and each one also starts from the
/// previous optima with discounts scaled by `mu_prev / mu`. With exponential
/// discomfort that reproduces the previous flows at a lower price, so the
/// reported savings never decrease with flexibility. Points come back in the
/// order of `mus`.
pub fn sweep_flexibility(
    scenario: &Scenario,
    mechanisms: &[Mechanism],
    mus: &[f64],
    options: &OptimizerOptions,
) -> Result<Vec<SweepPoint>> {
    let mut points: Vec<Option<SweepPoint>> = vec![None; mus.len()];
    sweep_flexibility_with(scenario, mechanisms, mus, options, |k, point| {
        points[k] = Some(point.clone());
        Ok::<(), Error>(())
    })?;
    Ok(points.into_iter().map(|p| p.expect("every value visited")).collect())
}

/// [`sweep_flexibility`] that hands each point to `visit` (with its index in
/// `mus`) as soon as it is done, in increasing order of `mu`. An error from
/// `visit` stops the sweep.
pub fn sweep_flexibility_with<E: From<Error>>(
    scenario: &Scenario,
    mechanisms: &[Mechanism],
    mus: &[f64],
    options: &OptimizerOptions,
    mut visit: impl FnMut(usize, &SweepPoint) -> std::result::Result<(), E>,
) -> std::result::Result<(), E> {
    let mut order: Vec<usize> = (0..mus.len()).collect();
    order.sort_by(|&a, &b| mus[a].total_cmp(&mus[b]).then(a.cmp(&b)));
    let mut previous: Option<(f64, Vec<OfferPlan>)> = None;
    for k in order {
        let mu = mus[k];
        let at_mu = scenario.with_mu(mu)?;
        let warm: Vec<OfferPlan> = match &previous {
            Some((prev_mu, plans)) => plans
                .iter()
                .map(|p| p.scale_discounts(prev_mu / mu, scenario.flat_rate()))
                .collect(),
            None => Vec::new(),
        };
        let results = optimize_mechanisms(&at_mu, mechanisms, options, &warm)?;
        previous = Some((mu, results.iter().map(|r| r.best_plan.clone()).collect()));
        visit(k, &SweepPoint { mu, results })?;
    }
    Ok(())
}
