//! Audits a contract menu against participation (IR), self-selection (IC), budget
//! (BF) and the ordering conditions a truthful menu must satisfy.
//!
//! The auditor never trusts how a menu was produced; it recomputes every
//! utility from the menu's own fields and the market config.

use std::fmt;

use serde::Serialize;

use crate::economics::{self, Regime};
use crate::market::{ContractMenu, InfoCase, MarketConfig};
use crate::TOL;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrViolation {
    pub k: usize,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcViolation {
    /// The client's true type.
    pub k: usize,
    /// The item it would rather sign.
    pub k_prime: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonotonicityFailure {
    pub field: &'static str,
    /// Higher type of the adjacent pair `(k-1, k)` that breaks the ordering.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub info_case: InfoCase,
    pub ir_violations: Vec<IrViolation>,
    pub ic_violations: Vec<IcViolation>,
    /// `Σ m_k R_k − P`; positive means over budget.
    pub bf_excess: f64,
    pub monotonicity_failures: Vec<MonotonicityFailure>,
    /// Items whose reward or bonus does not decompose as stored.
    pub item_errors: Vec<String>,
    pub pass: bool,
}

/// Types whose truthful item leaves them with negative surplus.
pub fn check_ir(menu: &ContractMenu, cfg: &MarketConfig) -> Vec<IrViolation> {
    menu.items
        .iter()
        .filter_map(|item| {
            let u = economics::client_utility(
                cfg.thetas().theta(item.type_index),
                item.bonus_factor,
                item.salary,
                cfg.delta(),
                cfg.beta(),
            );
            (u < -TOL).then_some(IrViolation {
                k: item.type_index,
                deficit: -u,
            })
        })
        .collect()
}

/// Every ordered pair `(k, k')` where type `k` strictly prefers item `k'`.
pub fn check_ic(menu: &ContractMenu, cfg: &MarketConfig) -> Vec<IcViolation> {
    let matrix = utility_matrix(menu, cfg);
    let mut out = Vec::new();
    for (k, row) in matrix.iter().enumerate() {
        for (j, u) in row.iter().enumerate() {
            if j != k && *u > row[k] + TOL {
                out.push(IcViolation {
                    k: k + 1,
                    k_prime: j + 1,
                    gap: u - row[k],
                });
            }
        }
    }
    out
}

/// `U[k][j]`: surplus of a type-`k+1` client that signs item `j+1` and then
/// exerts its own optimal effort.
pub fn utility_matrix(menu: &ContractMenu, cfg: &MarketConfig) -> Vec<Vec<f64>> {
    menu.items
        .iter()
        .map(|own| {
            let theta = cfg.thetas().theta(own.type_index);
            menu.items
                .iter()
                .map(|item| {
                    economics::client_utility(
                        theta,
                        item.bonus_factor,
                        item.salary,
                        cfg.delta(),
                        cfg.beta(),
                    )
                })
                .collect()
        })
        .collect()
}

pub fn check_bf(menu: &ContractMenu, cfg: &MarketConfig) -> f64 {
    budget_excess(menu, cfg.budget())
}

pub fn budget_excess(menu: &ContractMenu, budget: f64) -> f64 {
    menu.total_spend() - budget
}

/// Regime a menu was designed in: non-critical iff every item has factor 1.
pub fn menu_regime(menu: &ContractMenu) -> Regime {
    if menu.items.iter().all(|i| i.bonus_factor == 1.0) {
        Regime::NonClp
    } else {
        Regime::Clp
    }
}

/// Adjacent-type ordering chain. Critical menus need `R, B, e` strictly increasing,
/// `r` non-decreasing and joining rounds non-increasing; non-critical menus need
/// `R, e` strictly increasing and equal salaries.
pub fn check_monotonicity(menu: &ContractMenu, regime: Regime) -> Vec<MonotonicityFailure> {
    let mut out = Vec::new();
    for (i, w) in menu.items.windows(2).enumerate() {
        let (lo, hi) = (&w[0], &w[1]);
        let k = i + 2;
        let mut fail = |field| out.push(MonotonicityFailure { field, k });
        if hi.reward <= lo.reward {
            fail("R");
        }
        match regime {
            Regime::Clp => {
                if hi.salary < lo.salary - TOL {
                    fail("r");
                }
                if hi.bonus <= lo.bonus {
                    fail("B");
                }
            }
            Regime::NonClp => {
                if (hi.salary - lo.salary).abs() > TOL {
                    fail("r");
                }
            }
        }
        if hi.effort <= lo.effort {
            fail("e");
        }
        if regime == Regime::Clp && hi.join_round > lo.join_round {
            fail("t");
        }
    }
    out
}

/// Full audit. Complete-information menus are personalized, so only IR and BF
/// apply to them; incomplete-information menus must also pass IC and ordering.
pub fn audit(menu: &ContractMenu, cfg: &MarketConfig) -> FeasibilityReport {
    let item_errors: Vec<String> = menu
        .items
        .iter()
        .filter_map(|i| i.decomposition_error(cfg.thetas().theta(i.type_index)))
        .collect();
    let ir_violations = check_ir(menu, cfg);
    let bf_excess = check_bf(menu, cfg);
    let (ic_violations, monotonicity_failures) = match menu.info_case {
        InfoCase::Cic => (Vec::new(), Vec::new()),
        InfoCase::Iic => (
            check_ic(menu, cfg),
            check_monotonicity(menu, menu_regime(menu)),
        ),
    };
    let pass = item_errors.is_empty()
        && ir_violations.is_empty()
        && ic_violations.is_empty()
        && monotonicity_failures.is_empty()
        && bf_excess <= TOL;
    FeasibilityReport {
        info_case: menu.info_case,
        ir_violations,
        ic_violations,
        bf_excess,
        monotonicity_failures,
        item_errors,
        pass,
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "audit ({}): {}",
            self.info_case.label(),
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        for e in &self.item_errors {
            writeln!(f, "  item: {e}")?;
        }
        for v in &self.ir_violations {
            writeln!(f, "  IR: type {} short by {:.9}", v.k, v.deficit)?;
        }
        for v in &self.ic_violations {
            writeln!(
                f,
                "  IC: type {} gains {:.9} by signing item {}",
                v.k, v.gap, v.k_prime
            )?;
        }
        for m in &self.monotonicity_failures {
            writeln!(
                f,
                "  order: {} between types {} and {}",
                m.field,
                m.k - 1,
                m.k
            )?;
        }
        write!(f, "  BF: spend - budget = {:.9}", self.bf_excess)
    }
}
