//! Optimal menu design under complete (CIC) and incomplete (IIC) information.
//!
//! Both solvers pick one alphabet entry per type. The search is exact: a
//! depth-first walk over assignments in alphabet order with budget and
//! value-bound pruning. A candidate replaces the incumbent only when it is better
//! by more than [`TOL`](crate::TOL), so among near-equal optima the one found first
//! wins: larger bonus factors (earlier critical joining rounds) for lower types first.

mod alphabet;
mod cic;
mod iic;

pub use alphabet::{AlphabetEntry, TimeAlphabet};
pub use cic::{cic_salary, solve_cic, solve_cic_with};
pub use iic::{check_constraint_reduction, iic_salaries, solve_iic, solve_iic_with};

use crate::economics::{self, Regime};
use crate::error::Result;
use crate::market::{ContractMenu, InfoCase, MarketConfig, Mechanism};

/// Which round a menu is designed for, and for how many signers per type.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRequest {
    pub round: u32,
    pub multiplicity: Vec<u32>,
    /// When false the bonus factor is frozen at 1 and the joining round is ignored.
    pub time_aware: bool,
    /// Regime that selects λ. `None` uses the configured window's regime of `round`.
    pub regime: Option<Regime>,
}

impl SolveRequest {
    /// The single-round design problem at round 1 with the configured multiplicity.
    pub fn initial(cfg: &MarketConfig) -> Self {
        Self {
            round: 1,
            multiplicity: cfg.multiplicity().to_vec(),
            time_aware: true,
            regime: None,
        }
    }

    pub fn time_blind(mut self) -> Self {
        self.time_aware = false;
        self
    }

    pub fn alphabet(&self, cfg: &MarketConfig) -> Result<TimeAlphabet> {
        if self.time_aware {
            TimeAlphabet::from_round(cfg, self.round)
        } else {
            cfg.timeframe().check_round(self.round)?;
            Ok(TimeAlphabet::time_blind(self.round))
        }
    }

    pub fn lambda(&self, cfg: &MarketConfig) -> Result<f64> {
        let configured = cfg.timeframe().regime(self.round)?;
        Ok(cfg.lambda(self.regime.unwrap_or(configured)))
    }

    fn mechanism(&self) -> Mechanism {
        if self.time_aware {
            Mechanism::R3t
        } else {
            Mechanism::Ctwt
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub menu: ContractMenu,
    /// Alphabet index chosen for each type.
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub spend: f64,
}

/// Solves `info_case` for `req`.
pub fn solve(cfg: &MarketConfig, info_case: InfoCase, req: &SolveRequest) -> Result<Solution> {
    match info_case {
        InfoCase::Cic => solve_cic_with(cfg, req),
        InfoCase::Iic => solve_iic_with(cfg, req),
    }
}

/// Cloud utility `Σ m_k [λ g(θ_k h_k²/δ) − R_k]` of a menu, with λ taken from the
/// regime of the menu's design round.
pub fn menu_cloud_utility(cfg: &MarketConfig, menu: &ContractMenu) -> Result<f64> {
    let lambda = cfg.lambda(cfg.timeframe().regime(menu.round)?);
    Ok(menu
        .items
        .iter()
        .zip(&menu.multiplicity)
        .map(|(item, m)| {
            let theta = cfg.thetas().theta(item.type_index);
            f64::from(*m)
                * economics::cloud_item_utility(
                    theta,
                    item.bonus_factor,
                    item.salary,
                    cfg.delta(),
                    lambda,
                )
        })
        .sum())
}

pub(crate) fn build_menu(
    cfg: &MarketConfig,
    info_case: InfoCase,
    req: &SolveRequest,
    alphabet: &TimeAlphabet,
    assignment: &[usize],
    salaries: &[f64],
) -> ContractMenu {
    let items = assignment
        .iter()
        .zip(salaries)
        .enumerate()
        .map(|(i, (&a, &salary))| {
            let entry = alphabet.entries()[a];
            crate::market::ContractItem::at_optimum(
                i + 1,
                cfg.thetas().theta(i + 1),
                entry.join_round,
                entry.h,
                salary,
                cfg.delta(),
            )
        })
        .collect();
    ContractMenu {
        info_case,
        mechanism: req.mechanism(),
        round: req.round,
        multiplicity: req.multiplicity.clone(),
        items,
    }
}
