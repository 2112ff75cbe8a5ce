//! Monte Carlo agent simulation: sample each user's private discomfort, let
//! every user pick the best option it was offered (ties broken uniformly at
//! random) and bill the realized consumption.
//!
//! Users are processed in fixed-size shards. Each shard owns two ChaCha
//! streams derived from the seed and the shard index (one for sampling
//! discomforts, one for tie-breaking), so results do not depend on the number
//! of worker threads and a population can be replayed under different plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::production_cost;
use crate::model::{CostBreakdown, OfferPlan, Scenario, ShiftMatrix, SquareMatrix};
use crate::probability::{accept_prob, broadcast_shift_distribution, TieRule, TIE_TOLERANCE};

const SHARD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Correlation {
    /// One `β_j` per user and origin slot; `d_{j→i} = β_j |i−j|^t`.
    Correlated,
    /// Every `d_{j→i}` drawn separately from its marginal.
    Independent,
}

/// Sampled private types of `users` homogeneous users.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    users: usize,
    n_slots: usize,
    mode: Correlation,
    /// Correlated: `β[u·n + j]`. Independent: `d[(u·n + j)·n + i]`.
    draws: Vec<f64>,
    factors: SquareMatrix,
    seed: u64,
}

fn shard_rng(seed: u64, shard: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * shard as u64 + purpose);
    rng
}

pub fn sample_population(scenario: &Scenario, users: usize, seed: u64, mode: Correlation) -> Result<Population> {
    if users == 0 {
        return Err(Error::EmptyPopulation);
    }
    let n = scenario.n_slots();
    let model = scenario.discomfort();
    let per_user = match mode {
        Correlation::Correlated => n,
        Correlation::Independent => n * n,
    };
    let factors = SquareMatrix::from_fn(n, |j, i| model.slot(j).distance_factor(j, i));
    let mut draws = vec![0.0; users * per_user];
    draws
        .par_chunks_mut(SHARD * per_user)
        .enumerate()
        .for_each(|(shard, chunk)| {
            let mut rng = shard_rng(seed, shard, 0);
            for user in chunk.chunks_mut(per_user) {
                match mode {
                    Correlation::Correlated => {
                        for (j, beta) in user.iter_mut().enumerate() {
                            *beta = model.slot(j).quantile(rng.gen::<f64>());
                        }
                    }
                    Correlation::Independent => {
                        for j in 0..n {
                            for i in 0..n {
                                let u: f64 = rng.gen();
                                user[j * n + i] = if i == j {
                                    0.0
                                } else {
                                    factors[(j, i)] * model.slot(j).quantile(u)
                                };
                            }
                        }
                    }
                }
            }
        });
    Ok(Population {
        users,
        n_slots: n,
        mode,
        draws,
        factors,
        seed,
    })
}

impl Population {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn mode(&self) -> Correlation {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `β_j` of user `u` (correlated populations only).
    pub fn beta(&self, user: usize, origin: usize) -> Option<f64> {
        (self.mode == Correlation::Correlated).then(|| self.draws[user * self.n_slots + origin])
    }

    /// `d^u_{j→i}`.
    pub fn discomfort(&self, user: usize, from: usize, to: usize) -> f64 {
        let n = self.n_slots;
        match self.mode {
            Correlation::Correlated => self.draws[user * n + from] * self.factors[(from, to)],
            Correlation::Independent => self.draws[(user * n + from) * n + to],
        }
    }
}

/// Realized outcome of one offer group (or, for broadcast, the whole population).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfferTally {
    pub origin: usize,
    pub destination: usize,
    pub group_size: usize,
    pub moved: usize,
}

impl OfferTally {
    pub fn fraction(&self) -> f64 {
        if self.group_size == 0 {
            0.0
        } else {
            self.moved as f64 / self.group_size as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub shift: ShiftMatrix,
    pub breakdown: CostBreakdown,
    /// Users of origin `j` that ended in slot `i`.
    pub counts: Vec<Vec<u64>>,
    pub tallies: Vec<OfferTally>,
}

/// Contiguous user ranges `[bounds[k], bounds[k+1])` with sizes proportional to `fractions`.
fn stratify(users: usize, fractions: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut bounds = vec![0];
    let mut cumulative = 0.0;
    for q in fractions {
        cumulative += q;
        let b = ((users as f64 * cumulative).floor() as usize).min(users);
        bounds.push(b.max(*bounds.last().unwrap()));
    }
    bounds
}

fn group_of(bounds: &[usize], user: usize) -> Option<usize> {
    let k = bounds.partition_point(|&b| b <= user);
    (k >= 1 && k < bounds.len()).then(|| k - 1)
}

/// What one user of origin `j` was offered.
enum Offer {
    Stay,
    Single { to: usize, discount: f64 },
    Broadcast,
}

/// Simulates every user's choice under `plan` and bills the realized loads.
pub fn simulate_plan(scenario: &Scenario, plan: &OfferPlan, population: &Population) -> Result<Simulation> {
    let n = scenario.n_slots();
    plan.check_feasible(n, scenario.flat_rate())?;
    if population.n_slots != n {
        return Err(Error::PopulationShape {
            expected: n,
            got: population.n_slots,
        });
    }
    if matches!(plan, OfferPlan::Broadcast { .. }) && population.mode != Correlation::Correlated {
        return Err(Error::IncompatibleCorrelation);
    }
    simulate(scenario, plan, population)
}

/// Broadcast simulation that also accepts independent discomforts; a
/// Monte Carlo reference with no analytic counterpart.
pub fn simulate_broadcast_reference(
    scenario: &Scenario,
    discounts: &[f64],
    population: &Population,
) -> Result<Simulation> {
    let plan = OfferPlan::Broadcast {
        discounts: discounts.to_vec(),
    };
    plan.check_feasible(scenario.n_slots(), scenario.flat_rate())?;
    simulate(scenario, &plan, population)
}

fn simulate(scenario: &Scenario, plan: &OfferPlan, population: &Population) -> Result<Simulation> {
    let n = scenario.n_slots();
    let users = population.users;
    let tie_tolerance = TIE_TOLERANCE * scenario.flat_rate();

    // Group boundaries per origin slot; group k of origin j is offered slot dest[j][k].
    let (bounds, dests): (Vec<Vec<usize>>, Vec<Vec<usize>>) = (0..n)
        .map(|j| match plan {
            OfferPlan::Base { .. } => {
                let q = scenario.base_fractions();
                let d: Vec<usize> = (0..n).filter(|&i| i != j).collect();
                (stratify(users, d.iter().map(|&i| q[(j, i)])), d)
            }
            OfferPlan::Optimized { fractions, .. } => {
                let d: Vec<usize> = (0..n).filter(|&i| i != j).collect();
                (stratify(users, d.iter().map(|&i| fractions[(j, i)])), d)
            }
            OfferPlan::Robust { fractions, .. } => (stratify(users, fractions.iter().copied()), (0..n).collect()),
            OfferPlan::Broadcast { .. } => (vec![0, users], vec![j]),
        })
        .unzip();

    let offer_for = |j: usize, user: usize| -> Offer {
        let Some(k) = group_of(&bounds[j], user) else {
            return Offer::Stay;
        };
        let to = dests[j][k];
        match plan {
            OfferPlan::Base { discounts } => Offer::Single {
                to,
                discount: discounts[to],
            },
            OfferPlan::Optimized { discounts, .. } => Offer::Single {
                to,
                discount: discounts[(j, to)],
            },
            OfferPlan::Robust { discounts, .. } if to != j => Offer::Single {
                to,
                discount: discounts[to],
            },
            OfferPlan::Robust { .. } => Offer::Stay,
            OfferPlan::Broadcast { .. } => Offer::Broadcast,
        }
    };

    let shard_counts: Vec<Vec<u64>> = (0..users.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let mut counts = vec![0u64; n * n];
            let mut tie_rng = shard_rng(population.seed, shard, 1);
            let mut best: Vec<usize> = Vec::with_capacity(n);
            for user in shard * SHARD..((shard + 1) * SHARD).min(users) {
                for j in 0..n {
                    let dest = match offer_for(j, user) {
                        Offer::Stay => j,
                        Offer::Single { to, discount } => {
                            if discount - population.discomfort(user, j, to) > 0.0 {
                                to
                            } else {
                                j
                            }
                        }
                        Offer::Broadcast => {
                            let OfferPlan::Broadcast { discounts } = plan else {
                                unreachable!()
                            };
                            let utility = |k: usize| discounts[k] - population.discomfort(user, j, k);
                            let top = (0..n).map(utility).fold(f64::NEG_INFINITY, f64::max);
                            best.clear();
                            best.extend((0..n).filter(|&k| top - utility(k) <= tie_tolerance));
                            if best.len() == 1 {
                                best[0]
                            } else {
                                best[tie_rng.gen_range(0..best.len())]
                            }
                        }
                    };
                    counts[j * n + dest] += 1;
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![vec![0u64; n]; n];
    for shard in &shard_counts {
        for j in 0..n {
            for i in 0..n {
                counts[j][i] += shard[j * n + i];
            }
        }
    }

    let e0 = scenario.baseline();
    let share: Vec<f64> = e0.iter().map(|e| e / users as f64).collect();
    let mut flows = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut moved = 0.0;
        for i in (0..n).filter(|&i| i != j) {
            flows[(j, i)] = counts[j][i] as f64 * share[j];
            moved += flows[(j, i)];
        }
        flows[(j, j)] = (e0[j] - moved).max(0.0);
    }
    let shift = ShiftMatrix::new(flows);
    let e1 = shift.final_consumption();

    let mut tallies = Vec::new();
    let mut paid = 0.0;
    let mut wasted = 0.0;
    match plan {
        OfferPlan::Base { discounts } => {
            for j in 0..n {
                for (k, &i) in dests[j].iter().enumerate() {
                    tallies.push(tally(j, i, &bounds[j], k, &counts));
                    paid += discounts[i] * shift.get(j, i);
                }
            }
        }
        OfferPlan::Optimized { discounts, .. } => {
            for j in 0..n {
                for (k, &i) in dests[j].iter().enumerate() {
                    tallies.push(tally(j, i, &bounds[j], k, &counts));
                    paid += discounts[(j, i)] * shift.get(j, i);
                }
            }
        }
        OfferPlan::Robust { discounts, .. } => {
            for j in 0..n {
                for (k, &i) in dests[j].iter().enumerate().filter(|&(_, &i)| i != j) {
                    tallies.push(tally(j, i, &bounds[j], k, &counts));
                    paid += discounts[i] * shift.get(j, i);
                }
            }
            for i in 0..n {
                let group = bounds[i][i + 1] - bounds[i][i];
                let own = discounts[i] * group as f64 * share[i];
                paid += own;
                wasted += own;
            }
        }
        OfferPlan::Broadcast { discounts } => {
            for (j, row) in counts.iter().enumerate() {
                for (i, &moved) in row.iter().enumerate() {
                    tallies.push(OfferTally {
                        origin: j,
                        destination: i,
                        group_size: users,
                        moved: moved as usize,
                    });
                }
            }
            paid = discounts.iter().zip(&e1).map(|(r, e)| r * e).sum();
            wasted = (0..n).map(|i| discounts[i] * shift.get(i, i)).sum();
        }
    }

    let production = production_cost(scenario.costs(), &e1)?;
    let breakdown = CostBreakdown::new(production, paid, wasted, scenario.baseline_cost());
    Ok(Simulation {
        shift,
        breakdown,
        counts,
        tallies,
    })
}

/// `(realized − p) / σ` for every tally of `simulation`, with `p` the analytic
/// probability behind it and `σ = √(p(1 − p)/group)`. Tallies with an empty
/// group are skipped; a degenerate `p` gives `0` when matched exactly and
/// `±∞` otherwise.
pub fn binomial_z_scores(scenario: &Scenario, plan: &OfferPlan, simulation: &Simulation) -> Vec<f64> {
    let model = scenario.discomfort();
    let rule = TieRule::for_flat_rate(scenario.flat_rate(), 0.0);
    let broadcast: Vec<Vec<f64>> = match plan {
        OfferPlan::Broadcast { discounts } => (0..scenario.n_slots())
            .map(|j| broadcast_shift_distribution(model, j, discounts, rule).probabilities)
            .collect(),
        _ => Vec::new(),
    };
    simulation
        .tallies
        .iter()
        .filter(|t| t.group_size > 0)
        .map(|t| {
            let (j, i) = (t.origin, t.destination);
            let p = match plan {
                OfferPlan::Base { discounts } | OfferPlan::Robust { discounts, .. } => {
                    accept_prob(model.slot(j), j, i, discounts[i]).0
                }
                OfferPlan::Optimized { discounts, .. } => accept_prob(model.slot(j), j, i, discounts[(j, i)]).0,
                OfferPlan::Broadcast { .. } => broadcast[j][i],
            };
            let err = t.fraction() - p;
            let sd = (p * (1.0 - p) / t.group_size as f64).sqrt();
            if sd > 0.0 {
                err / sd
            } else if err == 0.0 {
                0.0
            } else {
                err.signum() * f64::INFINITY
            }
        })
        .collect()
}

fn tally(origin: usize, destination: usize, bounds: &[usize], group: usize, counts: &[Vec<u64>]) -> OfferTally {
    OfferTally {
        origin,
        destination,
        group_size: bounds[group + 1] - bounds[group],
        // Only members of this group were offered `destination`.
        moved: counts[origin][destination] as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostCurves, DiscomfortModel, Mechanism, PiecewiseLinearCost};

    fn scenario(discomfort: DiscomfortModel) -> Scenario {
        let n = discomfort.n_slots();
        Scenario::new(
            (0..n).map(|k| 10_000.0 + 500.0 * k as f64).collect(),
            110.0,
            CostCurves::shared(PiecewiseLinearCost::new(vec![16_300.0, 17_900.0], vec![10.0, 72.46, 91.0]).unwrap()),
            discomfort,
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_user_population() {
        let s = scenario(DiscomfortModel::exponential(3, 1.0, 110.0, 1.0).unwrap());
        let p = sample_population(&s, 1, 5, Correlation::Correlated).unwrap();
        assert_eq!(p.users(), 1);
        assert_eq!(p.draws.len(), 3);
        assert!(matches!(
            sample_population(&s, 0, 5, Correlation::Correlated),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn same_seed_same_population() {
        let s = scenario(DiscomfortModel::exponential(3, 1.0, 110.0, 1.0).unwrap());
        for mode in [Correlation::Correlated, Correlation::Independent] {
            let a = sample_population(&s, 9_000, 77, mode).unwrap();
            let b = sample_population(&s, 9_000, 77, mode).unwrap();
            assert_eq!(a, b);
            let c = sample_population(&s, 9_000, 78, mode).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn self_discomfort_is_zero() {
        let s = scenario(DiscomfortModel::exponential(3, 1.0, 110.0, 1.0).unwrap());
        let p = sample_population(&s, 100, 1, Correlation::Independent).unwrap();
        for u in 0..100 {
            for j in 0..3 {
                assert_eq!(p.discomfort(u, j, j), 0.0);
                assert!(p.discomfort(u, j, (j + 1) % 3) >= 0.0);
            }
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let s = scenario(DiscomfortModel::exponential(2, 1.0, 110.0, 1.0).unwrap());
        let users = 100_000;
        let p = sample_population(&s, users, 2024, Correlation::Correlated).unwrap();
        let mean = (0..users).map(|u| p.beta(u, 0).unwrap()).sum::<f64>() / users as f64;
        assert!(
            (mean - 110.0).abs() <= 3.0 * 110.0 / (users as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn zero_plans_leave_demand_in_place() {
        let s = scenario(DiscomfortModel::exponential(3, 1.0, 110.0, 1.0).unwrap());
        let p = sample_population(&s, 5_000, 3, Correlation::Correlated).unwrap();
        for m in Mechanism::ALL {
            let sim = simulate_plan(&s, &OfferPlan::zero(m, 3), &p).unwrap();
            assert_eq!(sim.shift, ShiftMatrix::identity(s.baseline()), "{m}");
            assert_eq!(sim.breakdown.total, s.baseline_cost());
        }
    }

    #[test]
    fn base_acceptance_concentrates() {
        let s = scenario(DiscomfortModel::uniform(2, 110.0, 0.0).unwrap());
        let users = 100_000;
        let p = sample_population(&s, users, 11, Correlation::Correlated).unwrap();
        let plan = OfferPlan::Base {
            discounts: vec![0.0, 55.0],
        };
        let sim = simulate_plan(&s, &plan, &p).unwrap();
        let t = sim
            .tallies
            .iter()
            .find(|t| t.origin == 0 && t.destination == 1)
            .unwrap();
        assert_eq!(t.group_size, users / 3);
        let sigma = (0.25 / t.group_size as f64).sqrt();
        assert!((t.fraction() - 0.5).abs() <= 3.0 * sigma, "{}", t.fraction());
    }

    #[test]
    fn robust_bills_own_baseline() {
        let s = scenario(DiscomfortModel::uniform(2, 110.0, 0.0).unwrap());
        let p = sample_population(&s, 10_000, 4, Correlation::Correlated).unwrap();
        let plan = OfferPlan::Robust {
            discounts: vec![0.0, 55.0],
            fractions: vec![0.0, 1.0],
        };
        let sim = simulate_plan(&s, &plan, &p).unwrap();
        assert!((sim.breakdown.wasted_discounts - 55.0 * s.baseline()[1]).abs() < 1e-6);
    }

    #[test]
    fn independent_broadcast_needs_reference_entry_point() {
        let s = scenario(DiscomfortModel::exponential(3, 1.0, 10.0, 1.0).unwrap());
        let p = sample_population(&s, 1_000, 4, Correlation::Independent).unwrap();
        let plan = OfferPlan::Broadcast {
            discounts: vec![10.0, 0.0, 10.0],
        };
        assert_eq!(simulate_plan(&s, &plan, &p), Err(Error::IncompatibleCorrelation));
        let sim = simulate_broadcast_reference(&s, &[10.0, 0.0, 10.0], &p).unwrap();
        // Independent discomforts never tie, so both sides get demand and nobody splits.
        assert!(sim.counts[1][0] > 0 && sim.counts[1][2] > 0);
    }

    #[test]
    fn stratified_groups_match_fractions() {
        let b = stratify(10, [0.25, 0.25, 0.5].into_iter());
        assert_eq!(b, vec![0, 2, 5, 10]);
        assert_eq!(group_of(&b, 0), Some(0));
        assert_eq!(group_of(&b, 4), Some(1));
        assert_eq!(group_of(&b, 9), Some(2));
        let partial = stratify(10, [0.3].into_iter());
        assert_eq!(group_of(&partial, 5), None);
    }
}
