//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls the solvers or the auditor. Payoffs are re-derived from the
//! closed forms, and the optimum is found by enumerating every joining round for
//! every type.

#![allow(dead_code)]

use r3t_core::{validate_config, MarketConfig, MarketParams};
use rand::Rng;

pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Cic,
    Iic,
}

/// One item of an oracle menu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleItem {
    pub join_round: u32,
    pub h: f64,
    pub salary: f64,
    pub bonus: f64,
    pub effort: f64,
}

impl OracleItem {
    pub fn reward(&self) -> f64 {
        self.salary + self.bonus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub items: Vec<OracleItem>,
    pub objective: f64,
    pub spend: f64,
}

impl OracleOptimum {
    pub fn hs(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.h).collect()
    }
}

fn h_of(cfg: &MarketConfig, t: u32) -> f64 {
    match cfg.params().clp_window.as_slice() {
        [s, e] if *s <= t && t <= *e => 1.0 + cfg.vartheta() / (2.0 * f64::from(t)).ln(),
        _ => 1.0,
    }
}

fn lambda_at(cfg: &MarketConfig, round: u32) -> f64 {
    match cfg.params().clp_window.as_slice() {
        [s, e] if *s <= round && round <= *e => cfg.params().lambda_clp,
        _ => cfg.params().lambda_nonclp,
    }
}

/// Utility of a type-`theta` client that signs an item with factor `h` and salary `r`.
pub fn utility(cfg: &MarketConfig, theta: f64, h: f64, r: f64) -> f64 {
    let e = theta * h / cfg.delta();
    theta * h * e - 0.5 * cfg.delta() * e * e - cfg.beta() * r + r
}

fn items_for(cfg: &MarketConfig, rounds: &[u32], case: Case) -> Vec<OracleItem> {
    let (delta, beta) = (cfg.delta(), cfg.beta());
    let thetas = cfg.thetas().as_slice();
    let mut prev_h = 0.0;
    let mut salary = 0.0;
    rounds
        .iter()
        .zip(thetas)
        .map(|(&t, &theta)| {
            let h = h_of(cfg, t);
            salary = match case {
                // Zero surplus for a known type.
                Case::Cic => theta * theta * h * h / (2.0 * delta * (beta - 1.0)),
                // Binding IR for type 1, binding adjacent downward IC above it.
                Case::Iic => {
                    salary
                        + theta * theta * (h * h - prev_h * prev_h) / (2.0 * delta * (beta - 1.0))
                }
            };
            prev_h = h;
            let effort = theta * h / delta;
            OracleItem {
                join_round: t,
                h,
                salary,
                bonus: theta * h * effort,
                effort,
            }
        })
        .collect()
}

/// Explicit IR, IC, ordering checks on a candidate incomplete-information menu.
fn iic_admissible(cfg: &MarketConfig, items: &[OracleItem]) -> bool {
    let thetas = cfg.thetas().as_slice();
    for (k, own) in items.iter().enumerate() {
        let u_own = utility(cfg, thetas[k], own.h, own.salary);
        if u_own < -TOL {
            return false;
        }
        for other in items {
            if utility(cfg, thetas[k], other.h, other.salary) > u_own + TOL {
                return false;
            }
        }
    }
    let all_flat = items.iter().all(|i| i.h == 1.0);
    items.windows(2).all(|w| {
        let (lo, hi) = (&w[0], &w[1]);
        let common = hi.reward() > lo.reward() && hi.effort > lo.effort;
        if all_flat {
            common && (hi.salary - lo.salary).abs() <= TOL
        } else {
            common
                && hi.salary >= lo.salary - TOL
                && hi.bonus > lo.bonus
                && hi.join_round <= lo.join_round
        }
    })
}

/// Exhaustive optimum over every assignment of joining rounds `round..=T` to
/// types, with salaries fixed by the information case. Among assignments within
/// `TOL` of the best value, the one whose factors are lexicographically largest
/// (type 1 first) wins, i.e. earliest critical joining for lower types first.
pub fn brute_force(
    cfg: &MarketConfig,
    case: Case,
    round: u32,
    multiplicity: &[u32],
) -> Option<OracleOptimum> {
    let k = cfg.k();
    let rounds: Vec<u32> = (round..=cfg.rounds()).collect();
    let lambda = lambda_at(cfg, round);
    let thetas = cfg.thetas().as_slice();
    let mut best: Option<OracleOptimum> = None;
    let mut idx = vec![0usize; k];
    loop {
        let chosen: Vec<u32> = idx.iter().map(|&i| rounds[i]).collect();
        let items = items_for(cfg, &chosen, case);
        let mut value = 0.0;
        let mut spend = 0.0;
        for ((item, &theta), &m) in items.iter().zip(thetas).zip(multiplicity) {
            let m = f64::from(m);
            value += m * (lambda * theta * item.h * item.h / cfg.delta() - item.reward());
            spend += m * item.reward();
        }
        let admissible =
            spend <= cfg.budget() + TOL && (case == Case::Cic || iic_admissible(cfg, &items));
        if admissible {
            let better = match &best {
                None => true,
                Some(b) if value > b.objective + TOL => true,
                Some(b) if value >= b.objective - TOL => prefers(&items, &b.items),
                Some(_) => false,
            };
            if better {
                best = Some(OracleOptimum {
                    items,
                    objective: value,
                    spend,
                });
            }
        }
        // Odometer over the grid.
        let mut pos = k;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < rounds.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn prefers(a: &[OracleItem], b: &[OracleItem]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x.h != y.h {
            return x.h > y.h;
        }
    }
    false
}

/// Reported joining round of the `h = 1` choice: the first non-critical round
/// after the window, else the first non-critical round from `round` on.
pub fn sentinel_round(cfg: &MarketConfig, round: u32) -> Option<u32> {
    let t = cfg.rounds();
    let non_clp = |r: &u32| h_of(cfg, *r) == 1.0;
    let after = match cfg.params().clp_window.as_slice() {
        [_, e] => (e + 1).max(round),
        _ => round,
    };
    (after..=t)
        .find(non_clp)
        .or_else(|| (round..=t).find(non_clp))
}

/// A random small market: `K ≤ max_k`, at most `max_window` critical rounds, a
/// budget drawn between the cheapest and the most expensive menus, and a design
/// round in the horizon.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cfg: MarketConfig,
    pub round: u32,
    pub multiplicity: Vec<u32>,
}

pub fn random_instance(rng: &mut impl Rng, max_k: usize, max_window: u32) -> Instance {
    let k = rng.gen_range(1..=max_k);
    let t = rng.gen_range(2..=6u32);
    let clp_window = if rng.gen_bool(0.15) {
        vec![]
    } else {
        let s = rng.gen_range(1..=t);
        let e = rng.gen_range(s..=t.min(s + max_window - 1));
        vec![s, e]
    };
    let mut thetas: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..4.0)).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let k = thetas.len();
    let multiplicity: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=2)).collect();
    let mut params = MarketParams {
        k,
        n: k * 2,
        t,
        delta: rng.gen_range(0.3..2.0),
        beta: rng.gen_range(1.2..4.0),
        vartheta: rng.gen_range(0.2..2.0),
        lambda_clp: rng.gen_range(1.0..30.0),
        lambda_nonclp: rng.gen_range(1.0..30.0),
        clp_window,
        thetas: Some(thetas.clone()),
        multiplicity: Some(multiplicity.clone()),
        initial_cohort: 1,
        budget: 1.0,
        ..Default::default()
    };
    // Spend bounds for budget placement: everything at h = 1 versus h(1)-scaled.
    let h_max = 1.0 + params.vartheta / 2f64.ln();
    let unit: f64 = thetas
        .iter()
        .zip(&multiplicity)
        .map(|(th, m)| {
            f64::from(*m)
                * th
                * th
                * (1.0 / (2.0 * params.delta * (params.beta - 1.0)) + 1.0 / params.delta)
        })
        .sum();
    // Log-uniform, so binding budgets are common; some instances are infeasible on purpose.
    params.budget = unit * rng.gen_range(0.9f64.ln()..(h_max * h_max * 1.3).ln()).exp();
    let cfg = validate_config(params).expect("generated params are valid");
    let round = rng.gen_range(1..=t);
    Instance {
        cfg,
        round,
        multiplicity,
    }
}

/// Random valid config of reference-like size for the zero-surplus and
/// binding-IR sweeps: `K ≤ 10`, horizon 25, window of at most `max_window` rounds.
pub fn random_config(rng: &mut impl Rng, max_window: u32) -> MarketConfig {
    let k = rng.gen_range(1..=10);
    let s = rng.gen_range(1..=8u32);
    let e = s + rng.gen_range(0..max_window);
    let params = MarketParams {
        k,
        n: k + rng.gen_range(0..6),
        t: 25,
        delta: rng.gen_range(0.2..2.0),
        beta: rng.gen_range(1.1..5.0),
        vartheta: rng.gen_range(0.1..3.0),
        lambda_clp: rng.gen_range(10.0..30.0),
        lambda_nonclp: rng.gen_range(10.0..30.0),
        budget: rng.gen_range(20.0..200.0),
        clp_window: if rng.gen_bool(0.1) {
            vec![]
        } else {
            vec![s, e]
        },
        rng_seed: rng.gen(),
        initial_cohort: 1,
        ..Default::default()
    };
    validate_config(params).expect("generated params are valid")
}
