use serde::Serialize;

use super::{build_menu, Solution, SolveRequest};
use crate::economics;
use crate::error::{Error, Result};
use crate::feasibility;
use crate::market::{ContractMenu, InfoCase, MarketConfig, TypeVector};
use crate::TOL;

/// Salaries pinned by a binding type-1 participation constraint and binding local
/// downward incentive constraints:
/// `r_k = Σ_{i≤k} θ_i² (h_i² − h_{i−1}²) / (2δ(β−1))` with `h_0 = 0`.
pub fn iic_salaries(thetas: &TypeVector, hs: &[f64], delta: f64, beta: f64) -> Result<Vec<f64>> {
    if let Some(at) = hs.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Monotonicity { at: at + 1 });
    }
    let scale = 2.0 * delta * (beta - 1.0);
    let mut prev_h2 = 0.0;
    let mut r = 0.0;
    Ok(hs
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let theta = thetas.theta(i + 1);
            let h2 = h * h;
            r += theta * theta * (h2 - prev_h2) / scale;
            prev_h2 = h2;
            r
        })
        .collect())
}

pub fn solve_iic(cfg: &MarketConfig) -> Result<Solution> {
    solve_iic_with(cfg, &SolveRequest::initial(cfg))
}

/// Maximizes cloud utility over monotone assignments (higher types never get a
/// smaller bonus factor), with salaries from [`iic_salaries`], subject to the
/// budget. Each complete candidate must also pass the full ordering check before
/// it can become the incumbent.
pub fn solve_iic_with(cfg: &MarketConfig, req: &SolveRequest) -> Result<Solution> {
    let alphabet = req.alphabet(cfg)?;
    let lambda = req.lambda(cfg)?;
    let k = cfg.k();
    let delta = cfg.delta();
    let scale = 2.0 * delta * (cfg.beta() - 1.0);
    let thetas = cfg.thetas().as_slice();
    let mult: Vec<f64> = req.multiplicity.iter().map(|m| f64::from(*m)).collect();
    let last = alphabet.len() - 1;

    // Everyone on the smallest factor spends least among monotone assignments.
    let h_min = alphabet.h(last);
    let r_floor = thetas[0] * thetas[0] * h_min * h_min / scale;
    let min_spend: f64 = (0..k)
        .map(|j| mult[j] * (r_floor + thetas[j] * thetas[j] * h_min * h_min / delta))
        .sum();
    if min_spend > cfg.budget() + TOL {
        return Err(Error::Infeasible {
            min_spend,
            budget: cfg.budget(),
        });
    }

    let hs: Vec<f64> = alphabet.entries().iter().map(|e| e.h).collect();
    let rounds: Vec<u32> = alphabet.entries().iter().map(|e| e.join_round).collect();
    let mut search = MonotoneSearch {
        thetas,
        mult: &mult,
        hs: &hs,
        rounds: &rounds,
        delta,
        scale,
        lambda,
        budget: cfg.budget(),
        path: Vec::with_capacity(k),
        best: None,
    };
    search.descend(0, last, 0.0, 0.0, 0.0, 0.0);
    let (assignment, objective, spend) = search.best.ok_or(Error::MonotonicityPostcheck)?;

    let chosen: Vec<f64> = assignment.iter().map(|&a| alphabet.h(a)).collect();
    let salaries = iic_salaries(cfg.thetas(), &chosen, delta, cfg.beta())?;
    let menu = build_menu(cfg, InfoCase::Iic, req, &alphabet, &assignment, &salaries);
    if !feasibility::check_monotonicity(&menu, feasibility::menu_regime(&menu)).is_empty() {
        return Err(Error::MonotonicityPostcheck);
    }
    Ok(Solution {
        menu,
        assignment,
        objective,
        spend,
    })
}

struct MonotoneSearch<'a> {
    thetas: &'a [f64],
    mult: &'a [f64],
    hs: &'a [f64],
    rounds: &'a [u32],
    delta: f64,
    scale: f64,
    lambda: f64,
    budget: f64,
    path: Vec<usize>,
    best: Option<(Vec<usize>, f64, f64)>,
}

impl MonotoneSearch<'_> {
    /// Type `j` picks an index in `0..=max_index` (alphabet is sorted by factor
    /// descending, so the index may only shrink as types rise).
    fn descend(
        &mut self,
        j: usize,
        max_index: usize,
        prev_h2: f64,
        prev_salary: f64,
        acc_value: f64,
        acc_weight: f64,
    ) {
        let k = self.thetas.len();
        if j == k {
            if self
                .best
                .as_ref()
                .is_none_or(|(_, v, _)| acc_value > v + TOL)
                && self.join_rounds_ordered()
            {
                self.best = Some((self.path.clone(), acc_value, acc_weight));
            }
            return;
        }
        let theta2 = self.thetas[j] * self.thetas[j];
        for a in 0..=max_index {
            let h2 = self.hs[a] * self.hs[a];
            let salary = prev_salary + theta2 * (h2 - prev_h2) / self.scale;
            let bonus = theta2 * h2 / self.delta;
            let m = self.mult[j];
            let w = acc_weight + m * (salary + bonus);
            let v = acc_value
                + m * (self.lambda * economics::gain(self.thetas[j] * h2 / self.delta)
                    - salary
                    - bonus);

            // Remaining types pay at least this salary and at least this factor.
            let mut rest_weight = 0.0;
            let mut rest_value = 0.0;
            let h2_top = self.hs[0] * self.hs[0];
            for i in j + 1..k {
                let t2 = self.thetas[i] * self.thetas[i];
                rest_weight += self.mult[i] * (salary + t2 * h2 / self.delta);
                let per_h2 = (self.lambda * self.thetas[i] - t2) / self.delta;
                rest_value += self.mult[i] * ((per_h2 * h2_top).max(per_h2 * h2) - salary);
            }
            if w + rest_weight > self.budget + TOL {
                continue;
            }
            if let Some((_, best, _)) = &self.best {
                if v + rest_value <= *best {
                    continue;
                }
            }
            self.path.push(a);
            self.descend(j + 1, a, h2, salary, v, w);
            self.path.pop();
        }
    }

    fn join_rounds_ordered(&self) -> bool {
        self.path
            .windows(2)
            .all(|w| self.rounds[w[1]] <= self.rounds[w[0]])
    }
}

/// Largest pairwise incentive gap `U_k(item k') − U_k(item k)` over all ordered
/// pairs, with the pair that attains it. Zero for single-type menus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub max_violation: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub adjacent_equalities_hold: bool,
}

/// Confirms that binding adjacent downward constraints imply every pairwise
/// incentive constraint on `menu`.
pub fn check_constraint_reduction(cfg: &MarketConfig, menu: &ContractMenu) -> ReductionReport {
    let (delta, beta) = (cfg.delta(), cfg.beta());
    let u = |k: usize, j: usize| {
        let item = menu.item(j);
        economics::client_utility(
            cfg.thetas().theta(k),
            item.bonus_factor,
            item.salary,
            delta,
            beta,
        )
    };
    let kk = menu.items.len();
    let adjacent_equalities_hold = (2..=kk).all(|k| (u(k, k) - u(k, k - 1)).abs() <= TOL);
    let mut max_violation = 0.0;
    let mut worst_pair = None;
    for k in 1..=kk {
        for j in 1..=kk {
            if j == k {
                continue;
            }
            let gap = u(k, j) - u(k, k);
            if gap > max_violation {
                max_violation = gap;
                worst_pair = Some((k, j));
            }
        }
    }
    ReductionReport {
        max_violation,
        worst_pair,
        adjacent_equalities_hold,
    }
}
