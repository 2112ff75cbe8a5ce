//! Demand-response tariff design from a per-user choice model.
//!
//! Users shift consumption between timeslots when a discount beats their
//! private discomfort. Four mechanisms decide who is offered what:
//!
//! * **base**: fixed population fractions, one discount per destination slot,
//!   paid only on shifted demand;
//! * **optimized**: per-pair discounts and fractions are both decision variables;
//! * **robust**: one offer group per slot, paid on all of its consumption there;
//! * **broadcast**: one public discount vector for everyone.
//!
//! [`mechanisms`] turns a plan into a shift matrix and cost breakdown,
//! [`optimizer`] searches for the cheapest plan with multi-start projected
//! descent, and [`microsim`] checks the aggregate model against sampled users.

pub mod error;
pub mod mechanisms;
pub mod microsim;
pub mod model;
pub mod optimizer;
pub mod probability;

pub use error::{Error, Result};
pub use mechanisms::{
    default_base_fractions, dictatorial_bound, evaluate_base, evaluate_broadcast, evaluate_optimized, evaluate_plan,
    evaluate_robust, production_cost, DictatorialSolution,
};
pub use microsim::{binomial_z_scores, sample_population, simulate_plan, Correlation, Population, Simulation};
pub use model::{
    validate_scenario, CdfFamily, CostBreakdown, CostCurves, DiscomfortModel, Mechanism, OfferPlan, OptimizationResult,
    PiecewiseLinearCost, RawScenario, Scenario, ShiftMatrix, SlotDiscomfort, SquareMatrix,
};
pub use optimizer::{
    multi_start_minimize, multi_start_minimize_with, optimize_mechanisms, sweep_flexibility, sweep_flexibility_with,
    GradientMode, OptimizerOptions, SmoothingSchedule, SweepPoint,
};
pub use probability::{broadcast_shift_distribution, cdf_eval, single_offer_accept_prob, ShiftDistribution, TieRule};
