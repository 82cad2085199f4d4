//! Reference mechanisms: contracts that ignore joining time, and a flat unit price.

use serde::Serialize;

use crate::economics;
use crate::error::Result;
use crate::market::{InfoCase, MarketConfig};
use crate::solver::{self, Solution, SolveRequest};
use crate::TOL;

/// Same solvers with every bonus factor frozen at 1.
pub fn solve_ctwt(cfg: &MarketConfig, info_case: InfoCase) -> Result<Solution> {
    solver::solve(cfg, info_case, &SolveRequest::initial(cfg).time_blind())
}

/// Best response to a flat price `C` per unit of effort with quadratic cost:
/// `(effort, payment, client utility) = (C/δ, C²/δ, C²/(2δ))`.
pub fn linear_response(unit_price: f64, delta: f64) -> (f64, f64, f64) {
    let effort = unit_price / delta;
    let payment = unit_price * effort;
    let utility = payment - 0.5 * delta * effort * effort;
    (effort, payment, utility)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearOutcome {
    pub type_index: usize,
    pub effort: f64,
    pub payment: f64,
    pub client_utility: f64,
    pub cloud_utility: f64,
}

/// Per-type outcome of linear pricing at round `round` (λ follows the round's regime).
/// Every type responds identically; capability plays no role.
pub fn linear_pricing_at(cfg: &MarketConfig, round: u32) -> Result<Vec<LinearOutcome>> {
    let lambda = cfg.lambda(cfg.timeframe().regime(round)?);
    let (effort, payment, client_utility) = linear_response(cfg.unit_price(), cfg.delta());
    let cloud_utility = lambda * economics::gain(effort) - payment;
    Ok((1..=cfg.k())
        .map(|type_index| LinearOutcome {
            type_index,
            effort,
            payment,
            client_utility,
            cloud_utility,
        })
        .collect())
}

pub fn linear_pricing(cfg: &MarketConfig) -> Result<Vec<LinearOutcome>> {
    linear_pricing_at(cfg, 1)
}

/// Which cohort members get paid under linear pricing. Uncapped unless the config
/// sets `linear_budget_cap`; then the lowest types are dropped until the round's
/// payments fit the budget.
pub fn linear_participation(cfg: &MarketConfig, cohort_types: &[usize]) -> Vec<bool> {
    if !cfg.params().linear_budget_cap {
        return vec![true; cohort_types.len()];
    }
    let (_, payment, _) = linear_response(cfg.unit_price(), cfg.delta());
    let mut order: Vec<usize> = (0..cohort_types.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(cohort_types[i]), i));
    let mut keep = vec![false; cohort_types.len()];
    let mut spent = 0.0;
    for i in order {
        if spent + payment > cfg.budget() + TOL {
            break;
        }
        spent += payment;
        keep[i] = true;
    }
    keep
}
