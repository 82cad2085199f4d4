//! Multi-round market simulation.
//!
//! Every round the cloud classifies the round, publishes a menu sized for the
//! round's cohort, each cohort member signs the item of its own type and submits
//! a contribution, and a synthetic performance proxy advances. The cohort doubles
//! during critical rounds and halves (down to half the population) afterwards.
//! All activity is recorded on a [`Ledger`].
//!
//! The performance proxy is synthetic: `p ← 1 − (1 − p)·exp(−κ Σ h·e)`, with loss
//! `1 − p`. Nothing downstream depends on its constants.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::benchmarks;
use crate::economics::{self, Regime};
use crate::error::{Error, Result};
use crate::ledger::{to_micro, Ledger, PublishedItem};
use crate::market::{
    ClientProfile, ClpMode, ContractMenu, InfoCase, MarketConfig, Mechanism, SettlementMode,
};
use crate::solver::{self, SolveRequest};

/// Next round's cohort size. Critical rounds double it (capped at `n`); other
/// rounds halve it, never below `⌈n/2⌉`.
pub fn update_cohort_size(size: usize, regime: Regime, n: usize) -> usize {
    match regime {
        Regime::Clp => (2 * size).min(n),
        Regime::NonClp => size.div_ceil(2).max(n.div_ceil(2)),
    }
}

/// Whether training is still in its critical phase: the relative drop of the last
/// two losses exceeds `threshold`. Fewer than two losses count as critical.
pub fn detect_clp(losses: &[f64], threshold: f64) -> bool {
    match losses {
        [.., prev, last] => (prev - last) / prev > threshold,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerformanceModel {
    pub p: f64,
    pub kappa: f64,
}

impl PerformanceModel {
    pub fn new(kappa: f64) -> Self {
        Self { p: 0.0, kappa }
    }

    pub fn loss(&self) -> f64 {
        1.0 - self.p
    }
}

/// Applies one round of `(effort, h)` contributions.
pub fn advance_performance(
    model: PerformanceModel,
    contributions: &[(f64, f64)],
) -> PerformanceModel {
    let work: f64 = contributions.iter().map(|(e, h)| h * e).sum();
    PerformanceModel {
        p: 1.0 - (1.0 - model.p) * (-model.kappa * work).exp(),
        ..model
    }
}

/// Aggregation weights of the round's updates: each client's share of total effort.
pub fn aggregation_weights(efforts: &[f64]) -> Vec<f64> {
    let total: f64 = efforts.iter().sum();
    if total > 0.0 {
        efforts.iter().map(|e| e / total).collect()
    } else {
        vec![0.0; efforts.len()]
    }
}

/// What to run: a contract mechanism with its information case, or linear
/// pricing (whose information case is recorded but unused).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimSpec {
    pub mechanism: Mechanism,
    pub info_case: InfoCase,
    pub rounds: u32,
}

/// One client's participation in one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Participation {
    pub client_id: String,
    pub type_index: usize,
    /// Signed menu item; `None` under linear pricing.
    pub item: Option<usize>,
    pub effort: f64,
    pub bonus_factor: f64,
    pub payment: f64,
    pub payment_micro: u64,
    pub client_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundState {
    pub round: u32,
    pub regime: Regime,
    pub cohort: Vec<ClientProfile>,
    pub menu: Option<ContractMenu>,
    pub participations: Vec<Participation>,
    pub spend: f64,
    pub spend_micro: u64,
    pub cloud_utility: f64,
    pub client_utility: f64,
    /// Performance proxy after this round.
    pub performance: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub cloud_utility: f64,
    pub spend: f64,
    pub spend_micro: u64,
    pub client_utility: f64,
    pub client_utility_by_type: Vec<f64>,
    pub final_performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halt {
    pub round: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub spec: SimSpec,
    pub rounds: Vec<RoundState>,
    pub totals: Totals,
    /// Set when a round could not be designed; `rounds` then stops before it.
    pub halt: Option<Halt>,
}

#[derive(Serialize)]
struct Footer<'a> {
    spec: &'a SimSpec,
    complete: bool,
    halt: &'a Option<Halt>,
    totals: &'a Totals,
}

impl SimTrace {
    pub fn is_complete(&self) -> bool {
        self.halt.is_none()
    }

    pub fn cohort_sizes(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.cohort.len()).collect()
    }

    /// One JSON object per round followed by a totals footer.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.rounds {
            writeln!(
                out,
                "{}",
                serde_json::to_string(r).expect("round serializes")
            )?;
        }
        let footer = Footer {
            spec: &self.spec,
            complete: self.is_complete(),
            halt: &self.halt,
            totals: &self.totals,
        };
        writeln!(
            out,
            "{}",
            serde_json::to_string(&footer).expect("footer serializes")
        )?;
        Ok(())
    }
}

/// A finished (or halted) run and the ledger it produced.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub trace: SimTrace,
    pub ledger: Ledger,
}

/// Cohort of `size` clients for round `t`, drawn without replacement from a
/// stream that depends only on the seed and the round, so every mechanism sees
/// the same cohorts.
fn draw_cohort(clients: &[ClientProfile], seed: u64, t: u32, size: usize) -> Vec<ClientProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(t));
    let mut picked = rand::seq::index::sample(&mut rng, clients.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| clients[i].clone()).collect()
}

/// Runs `spec.rounds` rounds. Only a round count beyond the horizon is an error;
/// a round that cannot be designed halts the run and is reported in the trace.
pub fn run_simulation(cfg: &MarketConfig, spec: SimSpec) -> Result<SimRun> {
    let total = cfg.rounds();
    if spec.rounds > total {
        return Err(Error::RoundOutOfRange {
            round: spec.rounds,
            total,
        });
    }
    let params = cfg.params();
    let clients = cfg.clients();
    let mut ledger = Ledger::new();
    for c in &clients {
        ledger.register(c)?;
    }

    let mut model = PerformanceModel::new(params.performance_kappa);
    let mut losses = vec![model.loss()];
    let mut critical = true;
    let mut size = params.initial_cohort;
    let mut rounds = Vec::with_capacity(spec.rounds as usize);
    let mut halt = None;

    for t in 1..=spec.rounds {
        let regime = match params.clp_mode {
            ClpMode::Fixed => cfg.timeframe().regime(t)?,
            ClpMode::Detector => {
                // Once the critical phase ends it does not return.
                critical = critical && detect_clp(&losses, params.clp_threshold);
                if critical {
                    Regime::Clp
                } else {
                    Regime::NonClp
                }
            }
        };
        let cohort = draw_cohort(&clients, cfg.rng_seed(), t, size);
        let played = match spec.mechanism {
            Mechanism::Linear => Ok(play_linear(cfg, &mut ledger, t, &cohort)),
            _ => play_contract(cfg, &mut ledger, spec, t, regime, &cohort),
        };
        let (menu, participations) = match played {
            Ok(x) => x,
            Err(e) => {
                halt = Some(Halt {
                    round: t,
                    reason: e.to_string(),
                });
                break;
            }
        };

        let lambda = cfg.lambda(regime);
        let mut state = RoundState {
            round: t,
            regime,
            cohort,
            menu,
            participations: Vec::new(),
            spend: 0.0,
            spend_micro: 0,
            cloud_utility: 0.0,
            client_utility: 0.0,
            performance: 0.0,
            loss: 0.0,
        };
        for p in &participations {
            state.spend += p.payment;
            state.spend_micro += p.payment_micro;
            state.client_utility += p.client_utility;
            state.cloud_utility += lambda * economics::gain(p.bonus_factor * p.effort) - p.payment;
        }
        let work: Vec<(f64, f64)> = participations
            .iter()
            .map(|p| (p.effort, p.bonus_factor))
            .collect();
        model = advance_performance(model, &work);
        losses.push(model.loss());
        state.performance = model.p;
        state.loss = model.loss();
        state.participations = participations;

        if params.settlement == SettlementMode::PerRound && !state.participations.is_empty() {
            ledger.settle()?;
        }
        rounds.push(state);
        size = update_cohort_size(size, regime, cfg.n());
    }

    if params.settlement == SettlementMode::End
        && rounds.iter().any(|r| !r.participations.is_empty())
    {
        ledger.settle()?;
    }

    let totals = totals(cfg.k(), &rounds, model.p);
    Ok(SimRun {
        trace: SimTrace {
            spec,
            rounds,
            totals,
            halt,
        },
        ledger,
    })
}

fn play_contract(
    cfg: &MarketConfig,
    ledger: &mut Ledger,
    spec: SimSpec,
    t: u32,
    regime: Regime,
    cohort: &[ClientProfile],
) -> Result<(Option<ContractMenu>, Vec<Participation>)> {
    let mut multiplicity = vec![0u32; cfg.k()];
    for c in cohort {
        multiplicity[c.type_index - 1] += 1;
    }
    let req = SolveRequest {
        round: t,
        multiplicity,
        time_aware: spec.mechanism == Mechanism::R3t,
        regime: Some(regime),
    };
    let menu = solver::solve(cfg, spec.info_case, &req)?.menu;
    ledger.publish_menu(&menu);
    let published = PublishedItem::from_menu(&menu);

    let mut out = Vec::with_capacity(cohort.len());
    for c in cohort {
        let item = menu.item(c.type_index);
        let blob = format!(
            "{}/{}/round-{t}/{}/effort={:?}",
            spec.mechanism.label(),
            spec.info_case.label(),
            c.client_id,
            item.effort
        );
        let hash = ledger.store_blob(t, blob.as_bytes());
        ledger.submit_contribution(&c.client_id, c.type_index, hash)?;
        out.push(Participation {
            client_id: c.client_id.clone(),
            type_index: c.type_index,
            item: Some(c.type_index),
            effort: item.effort,
            bonus_factor: item.bonus_factor,
            payment: item.reward,
            payment_micro: published[c.type_index - 1].reward_micro,
            client_utility: economics::client_utility(
                cfg.thetas().theta(c.type_index),
                item.bonus_factor,
                item.salary,
                cfg.delta(),
                cfg.beta(),
            ),
        });
    }
    Ok((Some(menu), out))
}

fn play_linear(
    cfg: &MarketConfig,
    ledger: &mut Ledger,
    t: u32,
    cohort: &[ClientProfile],
) -> (Option<ContractMenu>, Vec<Participation>) {
    let types: Vec<usize> = cohort.iter().map(|c| c.type_index).collect();
    let keep = benchmarks::linear_participation(cfg, &types);
    let (effort, payment, client_utility) =
        benchmarks::linear_response(cfg.unit_price(), cfg.delta());
    let payment_micro = to_micro(payment);
    let mut out = Vec::new();
    for (c, _) in cohort.iter().zip(&keep).filter(|(_, k)| **k) {
        let blob = format!("LINEAR/round-{t}/{}/effort={effort:?}", c.client_id);
        let hash = ledger.store_blob(t, blob.as_bytes());
        ledger
            .submit_priced(t, &c.client_id, payment_micro, hash)
            .expect("cohort members are registered");
        out.push(Participation {
            client_id: c.client_id.clone(),
            type_index: c.type_index,
            item: None,
            effort,
            bonus_factor: 1.0,
            payment,
            payment_micro,
            client_utility,
        });
    }
    (None, out)
}

fn totals(k: usize, rounds: &[RoundState], final_performance: f64) -> Totals {
    let mut t = Totals {
        cloud_utility: 0.0,
        spend: 0.0,
        spend_micro: 0,
        client_utility: 0.0,
        client_utility_by_type: vec![0.0; k],
        final_performance,
    };
    for r in rounds {
        t.cloud_utility += r.cloud_utility;
        t.spend += r.spend;
        t.spend_micro += r.spend_micro;
        t.client_utility += r.client_utility;
        for p in &r.participations {
            t.client_utility_by_type[p.type_index - 1] += p.client_utility;
        }
    }
    t
}
