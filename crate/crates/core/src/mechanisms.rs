//! Shift matrices and cost breakdowns induced by each mechanism's plan, the
//! default base-mechanism population fractions, production cost and the
//! dictatorial (provider-rearranges-everything) lower bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostBreakdown, CostCurves, OfferPlan, Scenario, ShiftMatrix, SquareMatrix};
use crate::probability::{accept_prob, broadcast_shift_distribution, TieRule};

/// Fraction of slot-`j` users offered a move to `i`, decaying with `|i − j|`:
/// `q_{j→i} = (1/(|i−j|+1)) / Σ_k 1/(|k−j|+1)` with the sum over all slots
/// (including `k = j`) and `q_{j→j} = 0`.
pub fn default_base_fractions(n: usize) -> SquareMatrix {
    let weight = |a: usize, b: usize| 1.0 / (a.abs_diff(b) as f64 + 1.0);
    SquareMatrix::from_fn(n, |j, i| {
        if i == j {
            0.0
        } else {
            let denom: f64 = (0..n).map(|k| weight(k, j)).sum();
            weight(i, j) / denom
        }
    })
}

/// `Σ_i c_i(E¹_i)`.
pub fn production_cost(costs: &CostCurves, consumption: &[f64]) -> Result<f64> {
    for (index, &value) in consumption.iter().enumerate() {
        if value.is_nan() || value < 0.0 {
            return Err(Error::NegativeConsumption { index, value });
        }
    }
    Ok(production_unchecked(costs, consumption))
}

fn production_unchecked(costs: &CostCurves, consumption: &[f64]) -> f64 {
    consumption
        .iter()
        .enumerate()
        .map(|(i, &e)| costs.for_slot(i).eval(e.max(0.0)))
        .sum()
}

/// Evaluates any plan with its mechanism's evaluator. Broadcast uses `smoothing`.
pub fn evaluate_plan(scenario: &Scenario, plan: &OfferPlan, smoothing: f64) -> Result<(ShiftMatrix, CostBreakdown)> {
    match plan {
        OfferPlan::Base { discounts } => evaluate_base(scenario, discounts),
        OfferPlan::Optimized { discounts, fractions } => evaluate_optimized(scenario, discounts, fractions),
        OfferPlan::Robust { discounts, fractions } => evaluate_robust(scenario, discounts, fractions),
        OfferPlan::Broadcast { discounts } => evaluate_broadcast(scenario, discounts, smoothing),
    }
}

/// Base mechanism: fixed fractions `q_{j→i}`, discount `R_i` paid on moved demand only.
pub fn evaluate_base(scenario: &Scenario, discounts: &[f64]) -> Result<(ShiftMatrix, CostBreakdown)> {
    let plan = OfferPlan::Base {
        discounts: discounts.to_vec(),
    };
    plan.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
    let (r, w) = base_offers(scenario, discounts);
    Ok(single_offer_outcome(scenario, &r, &w, None, false, 0.0).into_parts())
}

/// Optimized mechanism: per-pair discounts and fractions.
pub fn evaluate_optimized(
    scenario: &Scenario,
    discounts: &SquareMatrix,
    fractions: &SquareMatrix,
) -> Result<(ShiftMatrix, CostBreakdown)> {
    let plan = OfferPlan::Optimized {
        discounts: discounts.clone(),
        fractions: fractions.clone(),
    };
    plan.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
    Ok(single_offer_outcome(scenario, discounts, fractions, None, false, 0.0).into_parts())
}

/// Robust mechanism: group `i` is paid `R_i` on all its consumption in slot `i`,
/// including its own baseline there.
pub fn evaluate_robust(
    scenario: &Scenario,
    discounts: &[f64],
    fractions: &[f64],
) -> Result<(ShiftMatrix, CostBreakdown)> {
    let plan = OfferPlan::Robust {
        discounts: discounts.to_vec(),
        fractions: fractions.to_vec(),
    };
    plan.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
    let (r, w) = robust_offers(scenario.n_slots(), discounts, fractions);
    Ok(single_offer_outcome(scenario, &r, &w, Some((discounts, fractions)), false, 0.0).into_parts())
}

/// Broadcast mechanism: everyone sees `discounts` and pays the discounted
/// price on all final consumption. `smoothing = 0` is the exact tie law.
pub fn evaluate_broadcast(
    scenario: &Scenario,
    discounts: &[f64],
    smoothing: f64,
) -> Result<(ShiftMatrix, CostBreakdown)> {
    let plan = OfferPlan::Broadcast {
        discounts: discounts.to_vec(),
    };
    plan.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
    Ok(broadcast_outcome(scenario, discounts, smoothing))
}

pub(crate) fn base_offers(scenario: &Scenario, discounts: &[f64]) -> (SquareMatrix, SquareMatrix) {
    let n = scenario.n_slots();
    (
        SquareMatrix::from_fn(n, |_, i| discounts[i]),
        scenario.base_fractions().clone(),
    )
}

pub(crate) fn robust_offers(n: usize, discounts: &[f64], fractions: &[f64]) -> (SquareMatrix, SquareMatrix) {
    (
        SquareMatrix::from_fn(n, |_, i| discounts[i]),
        SquareMatrix::from_fn(n, |_, i| fractions[i]),
    )
}

/// Evaluation of a single-offer mechanism, optionally with the cost gradient
/// with respect to each pair's discount and fraction.
pub(crate) struct SingleOfferOutcome {
    pub shift: ShiftMatrix,
    pub breakdown: CostBreakdown,
    /// `∂cost/∂R_{j→i}` and `∂cost/∂q_{j→i}` (diagonals zero).
    pub grad_discount: Option<SquareMatrix>,
    pub grad_fraction: Option<SquareMatrix>,
}

impl SingleOfferOutcome {
    fn into_parts(self) -> (ShiftMatrix, CostBreakdown) {
        (self.shift, self.breakdown)
    }
}

/// `E_{j→i} = w_{j→i} · P_{j→i}(r_{j→i}) · E⁰_j`, discount `r_{j→i}` paid on
/// each moved MWh. `robust_waste` adds `Σ_i R_i q_i E⁰_i` for robust groups.
pub(crate) fn single_offer_outcome(
    scenario: &Scenario,
    r: &SquareMatrix,
    w: &SquareMatrix,
    robust_waste: Option<(&[f64], &[f64])>,
    with_gradient: bool,
    cost_smoothing: f64,
) -> SingleOfferOutcome {
    let n = scenario.n_slots();
    let e0 = scenario.baseline();
    let model = scenario.discomfort();

    let mut flows = SquareMatrix::zeros(n);
    let mut dflow_dr = SquareMatrix::zeros(n);
    let mut prob = SquareMatrix::zeros(n);
    let mut paid = 0.0;
    for j in 0..n {
        let slot = model.slot(j);
        let mut moved = 0.0;
        for i in (0..n).filter(|&i| i != j) {
            let weight = w[(j, i)];
            if weight == 0.0 {
                continue;
            }
            let (p, dp) = accept_prob(slot, j, i, r[(j, i)]);
            let m = weight * p * e0[j];
            flows[(j, i)] = m;
            prob[(j, i)] = p;
            dflow_dr[(j, i)] = weight * dp * e0[j];
            paid += r[(j, i)] * m;
            moved += m;
        }
        flows[(j, j)] = (e0[j] - moved).max(0.0);
    }

    let mut wasted = 0.0;
    if let Some((discounts, fractions)) = robust_waste {
        for i in 0..n {
            wasted += discounts[i] * fractions[i] * e0[i];
        }
        paid += wasted;
    }

    let shift = ShiftMatrix::new(flows);
    let e1 = shift.final_consumption();
    let (production, marginal): (f64, Vec<f64>) = if cost_smoothing > 0.0 {
        let parts: Vec<(f64, f64)> = e1
            .iter()
            .enumerate()
            .map(|(i, &e)| scenario.costs().for_slot(i).eval_smooth(e, cost_smoothing))
            .collect();
        (parts.iter().map(|p| p.0).sum(), parts.iter().map(|p| p.1).collect())
    } else {
        let marginal = if with_gradient {
            e1.iter()
                .enumerate()
                .map(|(i, &e)| scenario.costs().for_slot(i).marginal(e))
                .collect()
        } else {
            Vec::new()
        };
        (production_unchecked(scenario.costs(), &e1), marginal)
    };
    let breakdown = CostBreakdown::new(production, paid, wasted, scenario.baseline_cost());

    let (grad_discount, grad_fraction) = if with_gradient {
        let mut gr = SquareMatrix::zeros(n);
        let mut gw = SquareMatrix::zeros(n);
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                let per_flow = r[(j, i)] + marginal[i] - marginal[j];
                gr[(j, i)] = shift.get(j, i) + per_flow * dflow_dr[(j, i)];
                gw[(j, i)] = per_flow * prob[(j, i)] * e0[j];
            }
        }
        if let Some((discounts, fractions)) = robust_waste {
            // Waste term R_i q_i E⁰_i, attributed to the diagonal entries.
            for i in 0..n {
                gr[(i, i)] = fractions[i] * e0[i];
                gw[(i, i)] = discounts[i] * e0[i];
            }
        }
        (Some(gr), Some(gw))
    } else {
        (None, None)
    };

    SingleOfferOutcome {
        shift,
        breakdown,
        grad_discount,
        grad_fraction,
    }
}

pub(crate) fn broadcast_outcome(
    scenario: &Scenario,
    discounts: &[f64],
    smoothing: f64,
) -> (ShiftMatrix, CostBreakdown) {
    let n = scenario.n_slots();
    let e0 = scenario.baseline();
    let rule = TieRule::for_flat_rate(scenario.flat_rate(), smoothing);
    let mut flows = SquareMatrix::zeros(n);
    for j in 0..n {
        let dist = broadcast_shift_distribution(scenario.discomfort(), j, discounts, rule);
        let mut moved = 0.0;
        for i in (0..n).filter(|&i| i != j) {
            let m = dist.probabilities[i] * e0[j];
            flows[(j, i)] = m;
            moved += m;
        }
        flows[(j, j)] = (e0[j] - moved).max(0.0);
    }
    let shift = ShiftMatrix::new(flows);
    let e1 = shift.final_consumption();
    let production = production_unchecked(scenario.costs(), &e1);
    let paid: f64 = discounts.iter().zip(&e1).map(|(r, e)| r * e).sum();
    let wasted: f64 = (0..n).map(|i| discounts[i] * shift.get(i, i)).sum();
    let breakdown = CostBreakdown::new(production, paid, wasted, scenario.baseline_cost());
    (shift, breakdown)
}

/// Production-cost-minimal rearrangement of the total demand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictatorialSolution {
    pub allocation: Vec<f64>,
    pub cost: f64,
    pub baseline_cost: f64,
    pub saving: f64,
    pub saving_fraction: f64,
}

/// Minimizes `Σ_i c_i(E¹_i)` subject to `Σ E¹ = Σ E⁰`, `E¹ ≥ 0`, by filling
/// cost segments in order of marginal rate. Segments with the same rate share
/// the remaining demand evenly (up to their capacity).
pub fn dictatorial_bound(scenario: &Scenario) -> DictatorialSolution {
    let n = scenario.n_slots();
    let mut segments: Vec<(f64, usize, f64)> = Vec::new();
    for i in 0..n {
        for (start, end, rate) in scenario.costs().for_slot(i).segments() {
            segments.push((rate, i, end - start));
        }
    }
    segments.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut allocation = vec![0.0; n];
    let mut remaining = scenario.total_demand();
    let mut start = 0;
    while start < segments.len() && remaining > 0.0 {
        let rate = segments[start].0;
        let end = start + segments[start..].iter().take_while(|s| s.0 == rate).count();
        let mut level: Vec<(f64, usize)> = segments[start..end].iter().map(|s| (s.2, s.1)).collect();
        level.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let capacity: f64 = level.iter().map(|l| l.0).sum();
        if capacity <= remaining {
            for &(cap, slot) in &level {
                allocation[slot] += cap;
            }
            remaining -= capacity;
        } else {
            let mut left = remaining;
            let count = level.len();
            for (pos, &(cap, slot)) in level.iter().enumerate() {
                let give = (left / (count - pos) as f64).min(cap);
                allocation[slot] += give;
                left -= give;
            }
            remaining = 0.0;
        }
        start = end;
    }

    let cost = production_unchecked(scenario.costs(), &allocation);
    let baseline_cost = scenario.baseline_cost();
    let saving = baseline_cost - cost;
    DictatorialSolution {
        allocation,
        cost,
        baseline_cost,
        saving,
        saving_fraction: if baseline_cost > 0.0 {
            saving / baseline_cost
        } else {
            0.0
        },
    }
}
