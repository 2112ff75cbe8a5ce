use thiserror::Error;

/// Errors raised while validating scenarios and plans, evaluating mechanisms,
/// optimizing offers or simulating users.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("n_slots must be at least 2 (got {0})")]
    TooFewSlots(usize),

    #[error("baseline_mwh must have {expected} entries, one per slot (got {got})")]
    BaselineLength { expected: usize, got: usize },

    #[error("baseline must be nonnegative (baseline_mwh[{index}] = {value})")]
    NegativeBaseline { index: usize, value: f64 },

    #[error("flat_rate must be positive and finite (got {0})")]
    FlatRate(f64),

    #[error("marginal rates must be strictly increasing (marginal_rates[{index}] = {value} does not exceed the previous rate)")]
    RatesNotIncreasing { index: usize, value: f64 },

    #[error("marginal_rates must be positive and finite (marginal_rates[0] = {0})")]
    NonPositiveRate(f64),

    #[error("breakpoints_mwh must be positive and strictly ascending (breakpoints_mwh[{index}] = {value})")]
    BreakpointsNotAscending { index: usize, value: f64 },

    #[error("marginal_rates must have exactly one more entry than breakpoints_mwh ({breakpoints} breakpoints, {rates} rates)")]
    RateCount { breakpoints: usize, rates: usize },

    #[error("cost must be one shared curve or one curve per slot ({expected}), got {got}")]
    CostCurveCount { expected: usize, got: usize },

    #[error("discomfort must be one shared model or one model per slot ({expected}), got {got}")]
    DiscomfortCount { expected: usize, got: usize },

    #[error("discomfort mu must be positive and finite (got {0})")]
    Mu(f64),

    #[error("discomfort mu is required for the exponential family")]
    MissingMu,

    #[error("discomfort scale must be positive and finite (got {0})")]
    Scale(f64),

    #[error("discomfort exponent must be nonnegative and finite (got {0})")]
    Exponent(f64),

    #[error("discomfort knots: {0}")]
    Knots(String),

    #[error("base_fractions row {row}: {reason}")]
    BaseFractions { row: usize, reason: String },

    #[error("CDF argument must be nonnegative (got {0})")]
    NegativeArgument(f64),

    #[error("slot {slot} out of range for a {n_slots}-slot horizon")]
    SlotOutOfRange { slot: usize, n_slots: usize },

    #[error("staying in slot {0} is not an offer and has no acceptance probability")]
    SelfOffer(usize),

    #[error("plan has {got} slots, scenario has {expected}")]
    PlanShape { expected: usize, got: usize },

    #[error("discount {name} = {value} outside [0, {flat_rate}]")]
    DiscountOutOfRange { name: String, value: f64, flat_rate: f64 },

    #[error("fraction {name} = {value} outside [0, 1]")]
    FractionOutOfRange { name: String, value: f64 },

    #[error("fractions in row {row} sum to {sum}, more than 1")]
    FractionRowSum { row: usize, sum: f64 },

    #[error("consumption must be nonnegative (slot {index} = {value})")]
    NegativeConsumption { index: usize, value: f64 },

    #[error("objective returned a non-finite value ({0})")]
    NonFiniteObjective(f64),

    #[error("all {} starts aborted: {}", .0.len(), .0.join("; "))]
    AllStartsFailed(Vec<String>),

    #[error("cannot use a {from} plan as a {to} start")]
    NotEmbeddable { from: String, to: String },

    #[error("mu sweep requires the exponential discomfort family")]
    NotExponential,

    #[error("population must have at least one user")]
    EmptyPopulation,

    #[error("population has {got} slots, scenario has {expected}")]
    PopulationShape { expected: usize, got: usize },

    #[error("broadcast plans need a correlated population (got independent discomforts)")]
    IncompatibleCorrelation,

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;
