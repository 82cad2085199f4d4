//! Invariants over randomly drawn markets.

mod common;

use common::{random_config, utility, TOL};
use proptest::prelude::*;
use r3t_core::ledger::{expected_balances, parse_log, replay_balances, verify_chain, verify_log};
use r3t_core::sim::{run_simulation, SimSpec};
use r3t_core::solver::{solve_cic, solve_iic};
use r3t_core::{
    feasibility, validate_config, ContractMenu, InfoCase, MarketConfig, MarketParams, Mechanism,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg_from(seed: u64, max_window: u32) -> MarketConfig {
    random_config(&mut ChaCha8Rng::seed_from_u64(seed), max_window)
}

fn recomputed_spend(menu: &ContractMenu) -> f64 {
    menu.items
        .iter()
        .zip(&menu.multiplicity)
        .map(|(i, m)| f64::from(*m) * (i.salary + i.bonus))
        .sum()
}

/// Every ordered pair: type k weakly prefers its own item.
fn max_ic_gap(menu: &ContractMenu, cfg: &MarketConfig) -> f64 {
    let thetas = cfg.thetas().as_slice();
    let mut gap = f64::NEG_INFINITY;
    for (k, own) in menu.items.iter().enumerate() {
        let u_own = utility(cfg, thetas[k], own.bonus_factor, own.salary);
        for other in &menu.items {
            gap = gap.max(utility(cfg, thetas[k], other.bonus_factor, other.salary) - u_own);
        }
    }
    gap
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cic_leaves_no_surplus(seed in any::<u64>()) {
        let cfg = cfg_from(seed, 6);
        if let Ok(sol) = solve_cic(&cfg) {
            for (item, &theta) in sol.menu.items.iter().zip(cfg.thetas().as_slice()) {
                let u = utility(&cfg, theta, item.bonus_factor, item.salary);
                prop_assert!(u.abs() <= 1e-9 * (1.0 + item.reward), "type {} keeps {u}", item.type_index);
            }
            prop_assert!(recomputed_spend(&sol.menu) <= cfg.budget() + TOL);
            prop_assert!(feasibility::audit(&sol.menu, &cfg).pass);
        }
    }

    #[test]
    fn iic_binds_lowest_type_only_at_ir(seed in any::<u64>()) {
        let cfg = cfg_from(seed, 6);
        if let Ok(sol) = solve_iic(&cfg) {
            let thetas = cfg.thetas().as_slice();
            for (k, item) in sol.menu.items.iter().enumerate() {
                let u = utility(&cfg, thetas[k], item.bonus_factor, item.salary);
                if k == 0 {
                    prop_assert!(u.abs() <= 1e-9 * (1.0 + item.reward), "type 1 keeps {u}");
                } else {
                    prop_assert!(u >= -TOL, "type {} below reservation: {u}", k + 1);
                }
            }
            prop_assert!(max_ic_gap(&sol.menu, &cfg) <= TOL);
            prop_assert!(recomputed_spend(&sol.menu) <= cfg.budget() + TOL);
        }
    }

    #[test]
    fn iic_menus_are_ordered(seed in any::<u64>()) {
        let cfg = cfg_from(seed, 6);
        if let Ok(sol) = solve_iic(&cfg) {
            let flat = sol.menu.items.iter().all(|i| i.bonus_factor == 1.0);
            for w in sol.menu.items.windows(2) {
                let (lo, hi) = (&w[0], &w[1]);
                prop_assert!(hi.reward > lo.reward && hi.effort > lo.effort);
                if flat {
                    prop_assert!((hi.salary - lo.salary).abs() <= TOL);
                } else {
                    prop_assert!(hi.salary >= lo.salary - TOL && hi.bonus > lo.bonus);
                    prop_assert!(hi.join_round <= lo.join_round);
                    prop_assert!(hi.bonus_factor >= lo.bonus_factor);
                }
            }
        }
    }

    /// Without a critical window every factor is 1 and the screening menu pays
    /// one common salary.
    #[test]
    fn no_window_means_flat_salaries(
        mut thetas in prop::collection::vec(0.3f64..4.0, 1..=8),
        delta in 0.2f64..2.0,
        beta in 1.1f64..5.0,
    ) {
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        let params = MarketParams {
            k: thetas.len(),
            n: thetas.len(),
            thetas: Some(thetas.clone()),
            delta,
            beta,
            budget: 1e9,
            clp_window: vec![],
            initial_cohort: 1,
            ..Default::default()
        };
        let cfg = validate_config(params).unwrap();
        let menu = solve_iic(&cfg).unwrap().menu;
        let r1 = thetas[0] * thetas[0] / (2.0 * delta * (beta - 1.0));
        for (item, theta) in menu.items.iter().zip(&thetas) {
            prop_assert_eq!(item.bonus_factor, 1.0);
            prop_assert!((item.salary - r1).abs() <= 1e-12 * (1.0 + r1));
            prop_assert!((item.effort - theta / delta).abs() <= 1e-12 * (1.0 + item.effort));
        }
    }

    #[test]
    fn ledger_detects_any_single_bit_flip(seed in any::<u64>(), pick in any::<prop::sample::Index>(), bit in 0u8..8) {
        let cfg = cfg_from(seed, 4)
            .derive(|p| {
                p.t = 6;
                p.clp_window = vec![1, 3];
            })
            .unwrap();
        let spec = SimSpec { mechanism: Mechanism::R3t, info_case: InfoCase::Iic, rounds: 6 };
        let bytes = run_simulation(&cfg, spec).unwrap().ledger.to_jsonl().into_bytes();
        prop_assert!(verify_log(&bytes));
        let mut tampered = bytes.clone();
        let i = pick.index(tampered.len());
        tampered[i] ^= 1 << bit;
        prop_assert!(!verify_log(&tampered), "flip at byte {i} bit {bit} went unnoticed");
    }

    #[test]
    fn simulation_is_reproducible_and_reconciles(
        seed in any::<u64>(),
        mechanism in prop::sample::select(vec![Mechanism::R3t, Mechanism::Ctwt, Mechanism::Linear]),
        info_case in prop::sample::select(vec![InfoCase::Cic, InfoCase::Iic]),
        rounds in 0u32..=25,
    ) {
        let cfg = cfg_from(seed, 8);
        let spec = SimSpec { mechanism, info_case, rounds };
        let a = run_simulation(&cfg, spec).unwrap();
        let b = run_simulation(&cfg, spec).unwrap();
        let dump = |run: &r3t_core::sim::SimRun| {
            let mut buf = Vec::new();
            run.trace.write_jsonl(&mut buf).unwrap();
            (buf, run.ledger.to_jsonl())
        };
        prop_assert_eq!(dump(&a), dump(&b));

        let events = parse_log(a.ledger.to_jsonl().as_bytes()).unwrap();
        prop_assert!(verify_chain(&events));
        let paid: u64 = a.trace.rounds.iter().flat_map(|r| &r.participations).map(|p| p.payment_micro).sum();
        let replayed = replay_balances(&events);
        prop_assert_eq!(replayed.values().sum::<u64>(), paid);
        prop_assert_eq!(a.ledger.total_paid_micro(), paid);
        prop_assert_eq!(expected_balances(&events).unwrap(), replayed);
        prop_assert_eq!(a.trace.totals.spend_micro, paid);
    }
}
