//! Acceptance and choice probabilities derived from the discomfort model.
//!
//! With a single offer a user moves iff the discount beats the discomfort, so
//! `P_{j→i}(R) = F_j(R / |i−j|^t)`. Under a broadcast discount vector every
//! option `k` is a line `v_k(β) = R_k − β·c_k` in the user's discomfort factor
//! `β`; the user picks the highest line, so the choice probabilities are the
//! `F_j`-measures of the pieces of the upper envelope over `β ≥ 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DiscomfortModel, SlotDiscomfort};

/// Relative tolerance (times the flat rate) under which two discounts tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `F_j(x)` for the origin slot `j`.
pub fn cdf_eval(model: &DiscomfortModel, j: usize, x: f64) -> Result<f64> {
    check_slot(model, j)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::NegativeArgument(x));
    }
    Ok(model.slot(j).cdf(x))
}

/// Probability that a user of slot `j` accepts a single offer to move to `i` for discount `r`.
pub fn single_offer_accept_prob(model: &DiscomfortModel, j: usize, i: usize, r: f64) -> Result<f64> {
    check_slot(model, j)?;
    check_slot(model, i)?;
    if i == j {
        return Err(Error::SelfOffer(j));
    }
    Ok(accept_prob(model.slot(j), j, i, r).0)
}

/// `(P, dP/dR)` for a single offer.
pub(crate) fn accept_prob(slot: &SlotDiscomfort, j: usize, i: usize, r: f64) -> (f64, f64) {
    let c = slot.distance_factor(j, i);
    let x = r / c;
    (slot.cdf(x), slot.density(x) / c)
}

fn check_slot(model: &DiscomfortModel, slot: usize) -> Result<()> {
    if slot < model.n_slots() {
        Ok(())
    } else {
        Err(Error::SlotOutOfRange {
            slot,
            n_slots: model.n_slots(),
        })
    }
}

/// How options with the same distance factor share their envelope piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieRule {
    /// Only the highest discount of an equal-slope class is chosen; discounts
    /// within `tolerance` of it split the mass equally.
    Exact { tolerance: f64 },
    /// Softmax weights `exp(R_k / epsilon)` within each equal-slope class.
    Smoothed { epsilon: f64 },
}

impl TieRule {
    /// Exact mode when `epsilon == 0`, smoothed otherwise.
    pub fn for_flat_rate(flat_rate: f64, epsilon: f64) -> Self {
        if epsilon > 0.0 {
            TieRule::Smoothed { epsilon }
        } else {
            TieRule::Exact {
                tolerance: TIE_TOLERANCE * flat_rate,
            }
        }
    }
}

/// Where the demand of one origin slot goes under a broadcast discount vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftDistribution {
    pub origin: usize,
    /// `P_{origin→i}`; the stay entry absorbs rounding so the vector sums to 1.
    pub probabilities: Vec<f64>,
    /// An exact tie between equal-slope options received positive mass.
    pub tie_detected: bool,
}

/// A class of options sharing one distance factor.
struct SlopeClass {
    slope: f64,
    intercept: f64,
    members: Vec<usize>,
}

/// Broadcast choice distribution of origin slot `j` under discount vector `discounts`.
pub fn broadcast_shift_distribution(
    model: &DiscomfortModel,
    j: usize,
    discounts: &[f64],
    rule: TieRule,
) -> ShiftDistribution {
    let slot = model.slot(j);
    let n = discounts.len();

    let mut order: Vec<(f64, usize)> = (0..n).map(|k| (slot.distance_factor(j, k), k)).collect();
    // Steepest first: slopes -c ascending.
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut classes: Vec<SlopeClass> = Vec::new();
    for (c, k) in order {
        match classes.last_mut() {
            Some(cls) if cls.slope == c => {
                cls.intercept = cls.intercept.max(discounts[k]);
                cls.members.push(k);
            }
            _ => classes.push(SlopeClass {
                slope: c,
                intercept: discounts[k],
                members: vec![k],
            }),
        }
    }

    let class_mass = envelope_masses(slot, &classes);

    let mut probabilities = vec![0.0; n];
    let mut tie_detected = false;
    for (cls, &mass) in classes.iter().zip(&class_mass) {
        if mass <= 0.0 {
            continue;
        }
        match rule {
            TieRule::Exact { tolerance } => {
                let winners: Vec<usize> = cls
                    .members
                    .iter()
                    .copied()
                    .filter(|&k| cls.intercept - discounts[k] <= tolerance)
                    .collect();
                tie_detected |= winners.len() > 1;
                let share = mass / winners.len() as f64;
                for k in winners {
                    probabilities[k] = share;
                }
            }
            TieRule::Smoothed { epsilon } => {
                let weights: Vec<f64> = cls
                    .members
                    .iter()
                    .map(|&k| ((discounts[k] - cls.intercept) / epsilon).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                for (&k, w) in cls.members.iter().zip(weights) {
                    probabilities[k] = mass * w / total;
                }
            }
        }
    }

    let moved: f64 = probabilities
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, p)| p)
        .sum();
    probabilities[j] = (1.0 - moved).max(0.0);

    ShiftDistribution {
        origin: j,
        probabilities,
        tie_detected,
    }
}

/// `F`-measure of the β-interval on which each class's line is the strict
/// maximum, over `β ∈ [0, ∞)`. Classes must be sorted by decreasing `slope`
/// (so the lines `intercept − β·slope` have increasing slopes).
fn envelope_masses(slot: &SlotDiscomfort, classes: &[SlopeClass]) -> Vec<f64> {
    let cross =
        |a: usize, b: usize| (classes[a].intercept - classes[b].intercept) / (classes[a].slope - classes[b].slope);

    let mut hull: Vec<usize> = Vec::with_capacity(classes.len());
    for idx in 0..classes.len() {
        while hull.len() >= 2 {
            let (l1, l2) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(l1, idx) <= cross(l1, l2) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(idx);
    }

    let mut masses = vec![0.0; classes.len()];
    let mut lower = 0.0;
    for (pos, &idx) in hull.iter().enumerate() {
        let upper = if pos + 1 < hull.len() {
            cross(idx, hull[pos + 1]).max(0.0)
        } else {
            f64::INFINITY
        };
        if upper > lower {
            masses[idx] = slot.cdf(upper) - slot.cdf(lower);
            lower = upper;
        }
    }
    masses
}
