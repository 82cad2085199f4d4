//! Solvers against exhaustive enumeration on small markets.

mod common;

use common::{brute_force, random_instance, sentinel_round, Case, Instance};
use proptest::prelude::*;
use r3t_core::solver::{solve_cic_with, solve_iic_with, Solution, SolveRequest};
use r3t_core::{MarketConfig, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn request(inst: &Instance) -> SolveRequest {
    SolveRequest {
        round: inst.round,
        multiplicity: inst.multiplicity.clone(),
        time_aware: true,
        regime: None,
    }
}

/// Returns a description of the first disagreement, if any.
fn compare(inst: &Instance, case: Case, got: Result<Solution>) -> Option<String> {
    let cfg: &MarketConfig = &inst.cfg;
    let want = brute_force(cfg, case, inst.round, &inst.multiplicity);
    match (want, got) {
        (None, Err(_)) => None,
        (None, Ok(sol)) => Some(format!(
            "oracle infeasible, solver returned {:?}",
            sol.assignment
        )),
        (Some(w), Err(e)) => Some(format!(
            "oracle found {:.6}, solver failed: {e}",
            w.objective
        )),
        (Some(w), Ok(sol)) => {
            let scale = 1.0 + w.objective.abs();
            if (w.objective - sol.objective).abs() > 1e-9 * scale {
                return Some(format!(
                    "objective {} vs oracle {}",
                    sol.objective, w.objective
                ));
            }
            for (k, (item, o)) in sol.menu.items.iter().zip(&w.items).enumerate() {
                if (item.bonus_factor - o.h).abs() > 1e-12 {
                    return Some(format!(
                        "type {k}: factor {} vs oracle {}",
                        item.bonus_factor, o.h
                    ));
                }
                let want_round = if o.h == 1.0 {
                    sentinel_round(cfg, inst.round).unwrap()
                } else {
                    o.join_round
                };
                if item.join_round != want_round {
                    return Some(format!(
                        "type {k}: round {} vs {want_round}",
                        item.join_round
                    ));
                }
                if (item.salary - o.salary).abs() > 1e-9 * (1.0 + o.salary) {
                    return Some(format!(
                        "type {k}: salary {} vs oracle {}",
                        item.salary, o.salary
                    ));
                }
                if (item.bonus - o.bonus).abs() > 1e-9 * (1.0 + o.bonus) {
                    return Some(format!(
                        "type {k}: bonus {} vs oracle {}",
                        item.bonus, o.bonus
                    ));
                }
            }
            if (sol.spend - w.spend).abs() > 1e-9 * (1.0 + w.spend) {
                return Some(format!("spend {} vs oracle {}", sol.spend, w.spend));
            }
            None
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cic_matches_enumeration(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4);
        let got = solve_cic_with(&inst.cfg, &request(&inst));
        prop_assert_eq!(compare(&inst, Case::Cic, got), None, "{:?}", inst);
    }

    #[test]
    fn iic_matches_enumeration(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4);
        let got = solve_iic_with(&inst.cfg, &request(&inst));
        prop_assert_eq!(compare(&inst, Case::Iic, got), None, "{:?}", inst);
    }
}

/// With an unbounded budget every type is priced alone: the critical round
/// maximizing its own margin, or the plain round when the margin is negative.
#[test]
fn unbounded_budget_is_per_type_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 6, 5);
        let cfg = inst.cfg.derive(|p| p.budget = 1e12).unwrap();
        let sol = solve_cic_with(&cfg, &request(&inst)).unwrap();
        let (delta, beta) = (cfg.delta(), cfg.beta());
        let w = &cfg.params().clp_window;
        let in_window = |t: u32| w.len() == 2 && w[0] <= t && t <= w[1];
        let lambda = if in_window(inst.round) {
            cfg.params().lambda_clp
        } else {
            cfg.params().lambda_nonclp
        };
        for (item, &theta) in sol.menu.items.iter().zip(cfg.thetas().as_slice()) {
            // Margin per unit h²; linear in h², so the extreme factor wins.
            let slope = lambda * theta / delta
                - theta * theta / (2.0 * delta * (beta - 1.0))
                - theta * theta / delta;
            let candidates: Vec<f64> = (inst.round..=cfg.rounds())
                .map(|t| {
                    if in_window(t) {
                        1.0 + cfg.vartheta() / (2.0 * f64::from(t)).ln()
                    } else {
                        1.0
                    }
                })
                .collect();
            let best = if slope > 0.0 {
                candidates.iter().copied().fold(f64::MIN, f64::max)
            } else {
                candidates.iter().copied().fold(f64::MAX, f64::min)
            };
            assert_eq!(item.bonus_factor, best, "{inst:?}");
        }
    }
}

/// Guards the generator: the comparisons above are only meaningful if it yields
/// infeasible markets, flat menus and mixed menus alike. Mixed screening menus
/// need a binding budget and a plain round after the window, so they are rarer.
#[test]
fn generator_covers_the_interesting_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [[0u32; 4]; 2];
    for _ in 0..500 {
        let inst = random_instance(&mut rng, 4, 4);
        for (row, case) in counts.iter_mut().zip([Case::Cic, Case::Iic]) {
            let slot = match brute_force(&inst.cfg, case, inst.round, &inst.multiplicity) {
                None => 0,
                Some(o) => match o.hs().iter().filter(|h| **h > 1.0).count() {
                    0 => 1,
                    c if c == o.items.len() => 3,
                    _ => 2,
                },
            };
            row[slot] += 1;
        }
    }
    let [cic, iic] = counts;
    assert!(cic.iter().all(|&c| c >= 10), "cic {cic:?}");
    assert!(
        iic[0] >= 10 && iic[1] >= 10 && iic[2] >= 5 && iic[3] >= 10,
        "iic {iic:?}"
    );
}
