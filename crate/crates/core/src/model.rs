//! Domain types shared by every other module: the scenario (horizon, baseline
//! demand, flat rate, production cost curves, discomfort model), offer plans,
//! shift matrices, cost breakdowns and optimization records.
//!
//! Slots are indexed from 0 in code. Energies are MWh, prices and discounts
//! are $/MWh, costs are $.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::default_base_fractions;

/// Slack allowed on `Σ q ≤ 1` row constraints.
pub const FRACTION_SUM_SLACK: f64 = 1e-12;

/// Dense row-major `n × n` matrix; entry `(j, i)` usually reads "from slot j to slot i".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from rows; `None` unless every row has `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for r in 0..self.n {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|r| self.row(r).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.n + c]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.n + c]
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        SquareMatrix::from_rows(&rows).ok_or_else(|| "matrix must be square".to_string())
    }
}

// ---------------------------------------------------------------------------
// Production cost
// ---------------------------------------------------------------------------

/// Convex, increasing, piecewise-linear production cost with `cost(0) = 0`.
///
/// `marginal_rates[k]` applies between `breakpoints[k-1]` and `breakpoints[k]`
/// (with implicit `0` and `+∞` at the ends).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearCost {
    breakpoints: Vec<f64>,
    rates: Vec<f64>,
    /// Cost accumulated at each breakpoint.
    offsets: Vec<f64>,
}

impl PiecewiseLinearCost {
    pub fn new(breakpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != breakpoints.len() + 1 {
            return Err(Error::RateCount {
                breakpoints: breakpoints.len(),
                rates: rates.len(),
            });
        }
        if !(rates[0].is_finite() && rates[0] > 0.0) {
            return Err(Error::NonPositiveRate(rates[0]));
        }
        for (k, w) in rates.windows(2).enumerate() {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::RatesNotIncreasing {
                    index: k + 1,
                    value: w[1],
                });
            }
        }
        let mut prev = 0.0;
        for (k, &b) in breakpoints.iter().enumerate() {
            if !(b.is_finite() && b > prev) {
                return Err(Error::BreakpointsNotAscending { index: k, value: b });
            }
            prev = b;
        }
        let mut offsets = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        let mut start = 0.0;
        for (k, &b) in breakpoints.iter().enumerate() {
            acc += rates[k] * (b - start);
            offsets.push(acc);
            start = b;
        }
        Ok(Self {
            breakpoints,
            rates,
            offsets,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn marginal_rates(&self) -> &[f64] {
        &self.rates
    }

    /// Exact integral of the marginal rate from 0 to `energy` (`energy ≥ 0`).
    pub fn eval(&self, energy: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b < energy);
        if k == 0 {
            self.rates[0] * energy
        } else {
            self.offsets[k - 1] + self.rates[k] * (energy - self.breakpoints[k - 1])
        }
    }

    /// Right derivative: at a breakpoint the rate of the segment above it.
    pub fn marginal(&self, energy: f64) -> f64 {
        self.rates[self.breakpoints.partition_point(|&b| b <= energy)]
    }

    /// Value and derivative with every kink `max(0, E − b)` replaced by the
    /// softplus `w·ln(1 + e^{(E − b)/w})`. `width = 0` gives [`Self::eval`]
    /// and [`Self::marginal`].
    pub fn eval_smooth(&self, energy: f64, width: f64) -> (f64, f64) {
        if width <= 0.0 {
            return (self.eval(energy), self.marginal(energy));
        }
        let mut value = self.rates[0] * energy;
        let mut slope = self.rates[0];
        for (k, &b) in self.breakpoints.iter().enumerate() {
            let jump = self.rates[k + 1] - self.rates[k];
            let u = (energy - b) / width;
            // softplus(u) = max(u, 0) + ln(1 + e^{-|u|})
            value += jump * width * (u.max(0.0) + (-u.abs()).exp().ln_1p());
            slope += jump / (1.0 + (-u).exp());
        }
        (value, slope)
    }

    /// `(start, end, rate)` for each segment; the last `end` is `+∞`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.rates.iter().enumerate().map(move |(k, &rate)| {
            let start = if k == 0 { 0.0 } else { self.breakpoints[k - 1] };
            let end = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            (start, end, rate)
        })
    }
}

/// One curve shared by all slots, or one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCurves(Vec<PiecewiseLinearCost>);

impl CostCurves {
    pub fn shared(curve: PiecewiseLinearCost) -> Self {
        Self(vec![curve])
    }

    pub fn per_slot(curves: Vec<PiecewiseLinearCost>) -> Self {
        Self(curves)
    }

    pub fn for_slot(&self, slot: usize) -> &PiecewiseLinearCost {
        if self.0.len() == 1 {
            &self.0[0]
        } else {
            &self.0[slot]
        }
    }

    pub fn is_shared(&self) -> bool {
        self.0.len() == 1
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() == 1 || self.0.len() == n {
            Ok(())
        } else {
            Err(Error::CostCurveCount {
                expected: n,
                got: self.0.len(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Discomfort
// ---------------------------------------------------------------------------

/// Distribution of the per-user discomfort factor `β_j` of one origin slot.
#[derive(Debug, Clone, PartialEq)]
pub enum CdfFamily {
    /// `β ~ U[0, scale]`.
    Uniform,
    /// `F(β) = 1 − exp(−μ·β/scale)`; larger `mu` means more flexible users.
    Exponential { mu: f64 },
    /// Monotone linear interpolation through `(β, F)` knots in $ units.
    /// Starts at `(0, 0)`, ends at `F = 1`, concave.
    Tabulated { knots: Vec<(f64, f64)> },
}

/// Discomfort model of one origin slot `j`: `d_{j→i} = β_j · |i − j|^exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDiscomfort {
    pub family: CdfFamily,
    pub exponent: f64,
    /// Dollar scale `s` of the uniform and exponential families.
    pub scale: f64,
}

impl SlotDiscomfort {
    pub fn new(family: CdfFamily, exponent: f64, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Scale(scale));
        }
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(Error::Exponent(exponent));
        }
        match &family {
            CdfFamily::Uniform => {}
            CdfFamily::Exponential { mu } => {
                if !(mu.is_finite() && *mu > 0.0) {
                    return Err(Error::Mu(*mu));
                }
            }
            CdfFamily::Tabulated { knots } => check_knots(knots)?,
        }
        Ok(Self {
            family,
            exponent,
            scale,
        })
    }

    /// `F(x) = Prob(β < x)`, for `x ≥ 0` (and `x = +∞`).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.family {
            CdfFamily::Uniform => (x / self.scale).min(1.0),
            CdfFamily::Exponential { mu } => -(-mu * x / self.scale).exp_m1(),
            CdfFamily::Tabulated { knots } => {
                let k = knots.partition_point(|&(kx, _)| kx <= x);
                if k >= knots.len() {
                    return 1.0;
                }
                let (x0, f0) = knots[k - 1];
                let (x1, f1) = knots[k];
                f0 + (f1 - f0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Right derivative of the CDF.
    pub fn density(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match &self.family {
            CdfFamily::Uniform => {
                if x < self.scale {
                    1.0 / self.scale
                } else {
                    0.0
                }
            }
            CdfFamily::Exponential { mu } => mu / self.scale * (-mu * x / self.scale).exp(),
            CdfFamily::Tabulated { knots } => {
                let k = knots.partition_point(|&(kx, _)| kx <= x);
                if k >= knots.len() {
                    return 0.0;
                }
                let (x0, f0) = knots[k - 1];
                let (x1, f1) = knots[k];
                (f1 - f0) / (x1 - x0)
            }
        }
    }

    /// Inverse CDF for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.family {
            CdfFamily::Uniform => u * self.scale,
            CdfFamily::Exponential { mu } => -(self.scale / mu) * (-u).ln_1p(),
            CdfFamily::Tabulated { knots } => {
                let k = knots.partition_point(|&(_, f)| f <= u).max(1);
                if k >= knots.len() {
                    return knots[knots.len() - 1].0;
                }
                let (x0, f0) = knots[k - 1];
                let (x1, f1) = knots[k];
                x0 + (u - f0) / (f1 - f0) * (x1 - x0)
            }
        }
    }

    /// `|i − j|^exponent`, the multiplier turning `β_j` into `d_{j→i}`.
    pub fn distance_factor(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            (from.abs_diff(to) as f64).powf(self.exponent)
        }
    }
}

fn check_knots(knots: &[(f64, f64)]) -> Result<()> {
    let bad = |msg: &str| Err(Error::Knots(msg.to_string()));
    if knots.len() < 2 {
        return bad("need at least two knots");
    }
    if knots[0] != (0.0, 0.0) {
        return bad("first knot must be (0, 0)");
    }
    let mut prev_slope = f64::INFINITY;
    for w in knots.windows(2) {
        let ((x0, f0), (x1, f1)) = (w[0], w[1]);
        if !(x1.is_finite() && x1 > x0) {
            return bad("knot positions must be finite and strictly increasing");
        }
        if !(f1 >= f0 && f1 <= 1.0) {
            return bad("CDF values must be nondecreasing and at most 1");
        }
        let slope = (f1 - f0) / (x1 - x0);
        if slope > prev_slope * (1.0 + 1e-12) {
            return bad("CDF must be concave (segment slopes nonincreasing)");
        }
        prev_slope = slope;
    }
    if knots[knots.len() - 1].1 != 1.0 {
        return bad("last knot must reach F = 1");
    }
    Ok(())
}

/// Per-origin-slot discomfort models.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscomfortModel {
    slots: Vec<SlotDiscomfort>,
}

impl DiscomfortModel {
    pub fn per_slot(slots: Vec<SlotDiscomfort>) -> Self {
        Self { slots }
    }

    pub fn shared(n_slots: usize, slot: SlotDiscomfort) -> Self {
        Self {
            slots: vec![slot; n_slots],
        }
    }

    pub fn uniform(n_slots: usize, scale: f64, exponent: f64) -> Result<Self> {
        Ok(Self::shared(
            n_slots,
            SlotDiscomfort::new(CdfFamily::Uniform, exponent, scale)?,
        ))
    }

    pub fn exponential(n_slots: usize, mu: f64, scale: f64, exponent: f64) -> Result<Self> {
        Ok(Self::shared(
            n_slots,
            SlotDiscomfort::new(CdfFamily::Exponential { mu }, exponent, scale)?,
        ))
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, j: usize) -> &SlotDiscomfort {
        &self.slots[j]
    }

    pub fn slots(&self) -> &[SlotDiscomfort] {
        &self.slots
    }

    /// Same model with every exponential family's `mu` replaced.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Mu(mu));
        }
        let mut slots = self.slots.clone();
        for s in &mut slots {
            match &mut s.family {
                CdfFamily::Exponential { mu: m } => *m = mu,
                _ => return Err(Error::NotExponential),
            }
        }
        Ok(Self { slots })
    }

    /// The common `mu` when every slot is exponential with the same value.
    pub fn common_mu(&self) -> Option<f64> {
        let mut mus = self.slots.iter().map(|s| match s.family {
            CdfFamily::Exponential { mu } => Some(mu),
            _ => None,
        });
        let first = mus.next()??;
        mus.all(|m| m == Some(first)).then_some(first)
    }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// A validated demand-response scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    baseline: Vec<f64>,
    flat_rate: f64,
    costs: CostCurves,
    discomfort: DiscomfortModel,
    base_fractions: SquareMatrix,
}

impl Scenario {
    /// Validates the parts; `base_fractions = None` uses the distance-decaying default.
    pub fn new(
        baseline: Vec<f64>,
        flat_rate: f64,
        costs: CostCurves,
        discomfort: DiscomfortModel,
        base_fractions: Option<SquareMatrix>,
    ) -> Result<Self> {
        let n = baseline.len();
        if n < 2 {
            return Err(Error::TooFewSlots(n));
        }
        for (index, &value) in baseline.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::NegativeBaseline { index, value });
            }
        }
        if !(flat_rate.is_finite() && flat_rate > 0.0) {
            return Err(Error::FlatRate(flat_rate));
        }
        costs.check_len(n)?;
        if discomfort.n_slots() != n {
            return Err(Error::DiscomfortCount {
                expected: n,
                got: discomfort.n_slots(),
            });
        }
        let base_fractions = match base_fractions {
            Some(q) => {
                check_base_fractions(&q, n)?;
                q
            }
            None => default_base_fractions(n),
        };
        Ok(Self {
            baseline,
            flat_rate,
            costs,
            discomfort,
            base_fractions,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.baseline.len()
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn flat_rate(&self) -> f64 {
        self.flat_rate
    }

    pub fn costs(&self) -> &CostCurves {
        &self.costs
    }

    pub fn discomfort(&self) -> &DiscomfortModel {
        &self.discomfort
    }

    pub fn base_fractions(&self) -> &SquareMatrix {
        &self.base_fractions
    }

    pub fn total_demand(&self) -> f64 {
        self.baseline.iter().sum()
    }

    /// Production cost of the baseline allocation.
    pub fn baseline_cost(&self) -> f64 {
        self.baseline
            .iter()
            .enumerate()
            .map(|(i, &e)| self.costs.for_slot(i).eval(e))
            .sum()
    }

    /// Copy with the exponential flexibility parameter replaced.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Ok(Self {
            discomfort: self.discomfort.with_mu(mu)?,
            ..self.clone()
        })
    }
}

fn check_base_fractions(q: &SquareMatrix, n: usize) -> Result<()> {
    if q.n() != n {
        return Err(Error::BaseFractions {
            row: 0,
            reason: format!("expected a {n}x{n} matrix, got {0}x{0}", q.n()),
        });
    }
    for row in 0..n {
        let r = q.row(row);
        if let Some(v) = r.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::BaseFractions {
                row,
                reason: format!("entry {v} is negative or not finite"),
            });
        }
        let sum: f64 = r.iter().sum();
        if sum > 1.0 + FRACTION_SUM_SLACK {
            return Err(Error::BaseFractions {
                row,
                reason: format!("entries sum to {sum}, more than 1"),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Raw (file) representation
// ---------------------------------------------------------------------------

/// Either a single value applied to every slot or one value per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCost {
    #[serde(default)]
    pub breakpoints_mwh: Vec<f64>,
    pub marginal_rates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Uniform,
    Exponential,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiscomfort {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Dollar scale; defaults to the flat rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Shift-distance exponent; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 2]>>,
}

/// Scenario as written in a scenario file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub n_slots: usize,
    pub baseline_mwh: Vec<f64>,
    pub flat_rate: f64,
    pub cost: OneOrMany<RawCost>,
    pub discomfort: OneOrMany<RawDiscomfort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_fractions: Option<Vec<Vec<f64>>>,
}

/// Checks every invariant of `raw` and builds the [`Scenario`].
pub fn validate_scenario(raw: &RawScenario) -> Result<Scenario> {
    let n = raw.n_slots;
    if n < 2 {
        return Err(Error::TooFewSlots(n));
    }
    if raw.baseline_mwh.len() != n {
        return Err(Error::BaselineLength {
            expected: n,
            got: raw.baseline_mwh.len(),
        });
    }
    if !(raw.flat_rate.is_finite() && raw.flat_rate > 0.0) {
        return Err(Error::FlatRate(raw.flat_rate));
    }
    let curves = raw
        .cost
        .clone()
        .into_vec()
        .into_iter()
        .map(|c| PiecewiseLinearCost::new(c.breakpoints_mwh, c.marginal_rates))
        .collect::<Result<Vec<_>>>()?;
    let mut slots = raw
        .discomfort
        .clone()
        .into_vec()
        .into_iter()
        .map(|d| raw_slot_discomfort(d, raw.flat_rate))
        .collect::<Result<Vec<_>>>()?;
    if slots.len() == 1 {
        slots = vec![slots[0].clone(); n];
    }
    let base_fractions = match &raw.base_fractions {
        Some(rows) => Some(SquareMatrix::from_rows(rows).ok_or_else(|| Error::BaseFractions {
            row: 0,
            reason: "must be a square matrix".into(),
        })?),
        None => None,
    };
    Scenario::new(
        raw.baseline_mwh.clone(),
        raw.flat_rate,
        CostCurves::per_slot(curves),
        DiscomfortModel::per_slot(slots),
        base_fractions,
    )
}

fn raw_slot_discomfort(d: RawDiscomfort, flat_rate: f64) -> Result<SlotDiscomfort> {
    let family = match d.family {
        FamilyName::Uniform => CdfFamily::Uniform,
        FamilyName::Exponential => CdfFamily::Exponential {
            mu: d.mu.ok_or(Error::MissingMu)?,
        },
        FamilyName::Tabulated => CdfFamily::Tabulated {
            knots: d
                .knots
                .ok_or_else(|| Error::Knots("tabulated family needs knots".into()))?
                .into_iter()
                .map(|[x, f]| (x, f))
                .collect(),
        },
    };
    SlotDiscomfort::new(family, d.exponent.unwrap_or(1.0), d.scale.unwrap_or(flat_rate))
}

// ---------------------------------------------------------------------------
// Plans and results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Base,
    Optimized,
    Robust,
    Broadcast,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Base,
        Mechanism::Optimized,
        Mechanism::Robust,
        Mechanism::Broadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Base => "base",
            Mechanism::Optimized => "optimized",
            Mechanism::Robust => "robust",
            Mechanism::Broadcast => "broadcast",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mechanism `{s}`"))
    }
}

/// Decision variables of one mechanism. All discounts in $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum OfferPlan {
    /// One discount per destination slot, fixed fractions from the scenario.
    Base { discounts: Vec<f64> },
    /// Per-pair discounts `R_{z→i}` and fractions `q_{z→i}`; diagonals are unused.
    Optimized {
        discounts: SquareMatrix,
        fractions: SquareMatrix,
    },
    /// Group `i` (fraction `q_i`) is paid `R_i` on all its consumption in slot `i`.
    Robust { discounts: Vec<f64>, fractions: Vec<f64> },
    /// One public discount vector.
    Broadcast { discounts: Vec<f64> },
}

impl OfferPlan {
    /// The no-discount plan of a mechanism.
    pub fn zero(mechanism: Mechanism, n: usize) -> Self {
        match mechanism {
            Mechanism::Base => OfferPlan::Base {
                discounts: vec![0.0; n],
            },
            Mechanism::Optimized => OfferPlan::Optimized {
                discounts: SquareMatrix::zeros(n),
                fractions: SquareMatrix::zeros(n),
            },
            Mechanism::Robust => OfferPlan::Robust {
                discounts: vec![0.0; n],
                fractions: vec![0.0; n],
            },
            Mechanism::Broadcast => OfferPlan::Broadcast {
                discounts: vec![0.0; n],
            },
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            OfferPlan::Base { .. } => Mechanism::Base,
            OfferPlan::Optimized { .. } => Mechanism::Optimized,
            OfferPlan::Robust { .. } => Mechanism::Robust,
            OfferPlan::Broadcast { .. } => Mechanism::Broadcast,
        }
    }

    pub fn n_slots(&self) -> usize {
        match self {
            OfferPlan::Base { discounts }
            | OfferPlan::Robust { discounts, .. }
            | OfferPlan::Broadcast { discounts } => discounts.len(),
            OfferPlan::Optimized { discounts, .. } => discounts.n(),
        }
    }

    /// Checks the plan against the box and capped-simplex constraints.
    pub fn check_feasible(&self, n: usize, flat_rate: f64) -> Result<()> {
        let shape = |got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(Error::PlanShape { expected: n, got })
            }
        };
        let discount = |name: String, value: f64| {
            if (0.0..=flat_rate).contains(&value) {
                Ok(())
            } else {
                Err(Error::DiscountOutOfRange { name, value, flat_rate })
            }
        };
        let fraction = |name: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::FractionOutOfRange { name, value })
            }
        };
        match self {
            OfferPlan::Base { discounts } | OfferPlan::Broadcast { discounts } => {
                shape(discounts.len())?;
                for (i, &r) in discounts.iter().enumerate() {
                    discount(format!("R[{i}]"), r)?;
                }
            }
            OfferPlan::Robust { discounts, fractions } => {
                shape(discounts.len())?;
                shape(fractions.len())?;
                for (i, (&r, &q)) in discounts.iter().zip(fractions).enumerate() {
                    discount(format!("R[{i}]"), r)?;
                    fraction(format!("q[{i}]"), q)?;
                }
                let sum: f64 = fractions.iter().sum();
                if sum > 1.0 + FRACTION_SUM_SLACK {
                    return Err(Error::FractionRowSum { row: 0, sum });
                }
            }
            OfferPlan::Optimized { discounts, fractions } => {
                shape(discounts.n())?;
                shape(fractions.n())?;
                for z in 0..n {
                    for i in 0..n {
                        discount(format!("R[{z}->{i}]"), discounts[(z, i)])?;
                        fraction(format!("q[{z}->{i}]"), fractions[(z, i)])?;
                    }
                    let sum: f64 = fractions.row(z).iter().sum();
                    if sum > 1.0 + FRACTION_SUM_SLACK {
                        return Err(Error::FractionRowSum { row: z, sum });
                    }
                }
            }
        }
        Ok(())
    }

    /// The same plan with every discount multiplied by `factor` and capped at `flat_rate`.
    pub fn scale_discounts(&self, factor: f64, flat_rate: f64) -> OfferPlan {
        let scale = |r: &f64| (r * factor).clamp(0.0, flat_rate);
        match self {
            OfferPlan::Base { discounts } => OfferPlan::Base {
                discounts: discounts.iter().map(scale).collect(),
            },
            OfferPlan::Broadcast { discounts } => OfferPlan::Broadcast {
                discounts: discounts.iter().map(scale).collect(),
            },
            OfferPlan::Robust { discounts, fractions } => OfferPlan::Robust {
                discounts: discounts.iter().map(scale).collect(),
                fractions: fractions.clone(),
            },
            OfferPlan::Optimized { discounts, fractions } => OfferPlan::Optimized {
                discounts: SquareMatrix::from_fn(discounts.n(), |z, i| scale(&discounts[(z, i)])),
                fractions: fractions.clone(),
            },
        }
    }

    /// Rewrites this plan as a start for `target`, when the target mechanism
    /// can reproduce it: base and robust plans embed into optimized ones.
    pub fn embed_into(&self, target: Mechanism, scenario: &Scenario) -> Result<OfferPlan> {
        let n = scenario.n_slots();
        let off_diagonal =
            |f: &dyn Fn(usize, usize) -> f64| SquareMatrix::from_fn(n, |z, i| if z == i { 0.0 } else { f(z, i) });
        match (self, target) {
            (plan, t) if plan.mechanism() == t => Ok(plan.clone()),
            (OfferPlan::Base { discounts }, Mechanism::Optimized) => Ok(OfferPlan::Optimized {
                discounts: off_diagonal(&|_, i| discounts[i]),
                fractions: off_diagonal(&|z, i| scenario.base_fractions()[(z, i)]),
            }),
            (OfferPlan::Robust { discounts, fractions }, Mechanism::Optimized) => Ok(OfferPlan::Optimized {
                discounts: off_diagonal(&|_, i| discounts[i]),
                fractions: off_diagonal(&|_, i| fractions[i]),
            }),
            (plan, t) => Err(Error::NotEmbeddable {
                from: plan.mechanism().to_string(),
                to: t.to_string(),
            }),
        }
    }
}

/// Demand moved between slots: entry `(j, i)` is `E_{j→i}`, the diagonal is retained demand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftMatrix {
    flows: SquareMatrix,
}

impl ShiftMatrix {
    pub fn new(flows: SquareMatrix) -> Self {
        Self { flows }
    }

    /// All demand stays where it is.
    pub fn identity(baseline: &[f64]) -> Self {
        let n = baseline.len();
        Self {
            flows: SquareMatrix::from_fn(n, |j, i| if i == j { baseline[j] } else { 0.0 }),
        }
    }

    pub fn flows(&self) -> &SquareMatrix {
        &self.flows
    }

    pub fn n(&self) -> usize {
        self.flows.n()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.flows[(from, to)]
    }

    /// `E¹_i`, the column sums.
    pub fn final_consumption(&self) -> Vec<f64> {
        self.flows.column_sums()
    }

    /// Row sums, which equal the baseline.
    pub fn origin_totals(&self) -> Vec<f64> {
        self.flows.row_sums()
    }
}

/// Cost components of a plan, in $.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub production: f64,
    pub discounts_paid: f64,
    /// Discounts paid on demand that was already in the slot and stayed there.
    pub wasted_discounts: f64,
    pub total: f64,
    /// Production cost of the untouched baseline.
    pub baseline_total: f64,
    pub savings: f64,
    pub savings_fraction: f64,
}

impl CostBreakdown {
    pub fn new(production: f64, discounts_paid: f64, wasted_discounts: f64, baseline_total: f64) -> Self {
        let total = production + discounts_paid;
        let savings = baseline_total - total;
        let savings_fraction = if baseline_total > 0.0 {
            savings / baseline_total
        } else {
            0.0
        };
        Self {
            production,
            discounts_paid,
            wasted_discounts,
            total,
            baseline_total,
            savings,
            savings_fraction,
        }
    }

    /// Reduction in production cost relative to the baseline.
    pub fn production_savings(&self) -> f64 {
        self.baseline_total - self.production
    }
}

/// Outcome of one start of a multi-start run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartRecord {
    pub index: usize,
    /// Converged total cost in $, or `None` if the start was aborted.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    pub mechanism: Mechanism,
    pub best_plan: OfferPlan,
    pub best_breakdown: CostBreakdown,
    pub starts: usize,
    pub per_start: Vec<StartRecord>,
    pub seed: u64,
    pub wall_time: f64,
}

impl OptimizationResult {
    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.mechanism == other.mechanism
            && self.best_plan == other.best_plan
            && self.best_breakdown == other.best_breakdown
            && self.starts == other.starts
            && self.per_start == other.per_start
            && self.seed == other.seed
    }
}
