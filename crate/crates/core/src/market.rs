//! Validated domain types for the contract market.
//!
//! Raw parameters arrive as [`MarketParams`] (the on-disk TOML shape) and become a
//! [`MarketConfig`] only through [`validate_config`], which reports every failed
//! invariant at once. Everything downstream takes a `&MarketConfig`.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::economics::{self, Regime};
use crate::error::{Error, Result, Violation};
use crate::TOL;

const MAX_SAMPLING_ATTEMPTS: usize = 1000;

/// Capabilities of the `K` client types, strictly increasing and positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TypeVector(Vec<f64>);

impl TypeVector {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        match type_vector_violation(&thetas) {
            Some(reason) => Err(Error::Config(vec![Violation::new("thetas", reason)])),
            None => Ok(Self(thetas)),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Capability of type `k` (1-based).
    pub fn theta(&self, k: usize) -> f64 {
        self.0[k - 1]
    }
}

fn type_vector_violation(thetas: &[f64]) -> Option<&'static str> {
    if thetas.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Some("all capabilities must be finite and positive");
    }
    if thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Some("not strictly increasing");
    }
    None
}

/// Draws `k` capabilities uniformly from the open interval `(low, high)` and sorts them.
///
/// Pure in `(seed, k, low, high)`. Duplicates are re-drawn.
pub fn sample_type_vector(seed: u64, k: usize, low: f64, high: f64) -> Result<TypeVector> {
    if !(low > 0.0 && high > low && high.is_finite()) {
        return Err(Error::Config(vec![Violation::new(
            "thetas",
            format!("sampling range ({low}, {high}) requires 0 < low < high"),
        )]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(low, high);
    let draw = |rng: &mut ChaCha8Rng| loop {
        let x = dist.sample(rng);
        if x > low {
            return x;
        }
    };
    let mut values: Vec<f64> = (0..k).map(|_| draw(&mut rng)).collect();
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        values.sort_by(f64::total_cmp);
        let dup = values.windows(2).position(|w| w[1] <= w[0]);
        match dup {
            None => return Ok(TypeVector(values)),
            Some(i) => values[i + 1] = draw(&mut rng),
        }
    }
    Err(Error::TypeSampling {
        k,
        attempts: MAX_SAMPLING_ATTEMPTS,
    })
}

/// `T` training rounds and an optional contiguous window of critical rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeFrame {
    total_rounds: u32,
    clp_window: Option<(u32, u32)>,
}

impl TimeFrame {
    pub fn new(total_rounds: u32, clp_window: Option<(u32, u32)>) -> Result<Self> {
        if total_rounds == 0 {
            return Err(Error::Config(vec![Violation::new("T", "must be positive")]));
        }
        if let Some((start, end)) = clp_window {
            if !(1 <= start && start <= end && end <= total_rounds) {
                return Err(Error::Config(vec![Violation::new(
                    "clp_window",
                    format!("[{start}, {end}] must satisfy 1 <= start <= end <= {total_rounds}"),
                )]));
            }
        }
        Ok(Self {
            total_rounds,
            clp_window,
        })
    }

    pub fn total_rounds(&self) -> u32 {
        self.total_rounds
    }

    pub fn clp_window(&self) -> Option<(u32, u32)> {
        self.clp_window
    }

    pub fn clp_len(&self) -> u32 {
        self.clp_window.map_or(0, |(s, e)| e - s + 1)
    }

    pub fn contains(&self, t: u32) -> bool {
        (1..=self.total_rounds).contains(&t)
    }

    pub fn is_clp(&self, t: u32) -> bool {
        matches!(self.clp_window, Some((s, e)) if s <= t && t <= e)
    }

    pub fn regime(&self, t: u32) -> Result<Regime> {
        self.check_round(t)?;
        Ok(if self.is_clp(t) {
            Regime::Clp
        } else {
            Regime::NonClp
        })
    }

    pub(crate) fn check_round(&self, t: u32) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::RoundOutOfRange {
                round: t,
                total: self.total_rounds,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum InfoCase {
    #[serde(rename = "CIC")]
    Cic,
    #[serde(rename = "IIC")]
    Iic,
}

impl InfoCase {
    pub fn label(self) -> &'static str {
        match self {
            InfoCase::Cic => "CIC",
            InfoCase::Iic => "IIC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mechanism {
    #[serde(rename = "R3T")]
    R3t,
    #[serde(rename = "CTWT")]
    Ctwt,
    #[serde(rename = "LINEAR")]
    Linear,
}

impl Mechanism {
    pub fn label(self) -> &'static str {
        match self {
            Mechanism::R3t => "R3T",
            Mechanism::Ctwt => "CTWT",
            Mechanism::Linear => "LINEAR",
        }
    }
}

/// One (effort, joining round, salary, bonus) bundle designed for one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractItem {
    pub type_index: usize,
    pub effort: f64,
    pub join_round: u32,
    /// Bonus factor the item was priced at. Equals `h(join_round)` for time-aware
    /// menus and 1 for menus that ignore time.
    pub bonus_factor: f64,
    pub salary: f64,
    pub bonus: f64,
    pub reward: f64,
}

impl ContractItem {
    /// Builds the item a type-`k` client signs at its optimal effort.
    pub fn at_optimum(
        type_index: usize,
        theta: f64,
        join_round: u32,
        bonus_factor: f64,
        salary: f64,
        delta: f64,
    ) -> Self {
        let effort = economics::optimal_effort(theta, bonus_factor, delta);
        let bonus = theta * bonus_factor * effort;
        Self {
            type_index,
            effort,
            join_round,
            bonus_factor,
            salary,
            bonus,
            reward: salary + bonus,
        }
    }

    /// Checks `reward = salary + bonus` and `bonus = θ·h·e`; returns the reason on failure.
    pub fn decomposition_error(&self, theta: f64) -> Option<String> {
        if (self.reward - (self.salary + self.bonus)).abs() > TOL {
            return Some(format!(
                "item {}: reward {} != salary {} + bonus {}",
                self.type_index, self.reward, self.salary, self.bonus
            ));
        }
        let expected = theta * self.bonus_factor * self.effort;
        if (self.bonus - expected).abs() > TOL {
            return Some(format!(
                "item {}: bonus {} != theta*h*effort {}",
                self.type_index, self.bonus, expected
            ));
        }
        if self.salary < 0.0 || self.effort < 0.0 || self.bonus < 0.0 {
            return Some(format!("item {}: negative field", self.type_index));
        }
        None
    }
}

/// The cloud's published offer: one item per type, ordered by type index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractMenu {
    pub info_case: InfoCase,
    pub mechanism: Mechanism,
    /// Round the menu was designed for.
    pub round: u32,
    /// Number of signing clients per type the menu was budgeted for.
    pub multiplicity: Vec<u32>,
    pub items: Vec<ContractItem>,
}

impl ContractMenu {
    pub fn item(&self, k: usize) -> &ContractItem {
        &self.items[k - 1]
    }

    pub fn total_spend(&self) -> f64 {
        self.items
            .iter()
            .zip(&self.multiplicity)
            .map(|(item, m)| f64::from(*m) * item.reward)
            .sum()
    }

    pub fn join_rounds(&self) -> Vec<u32> {
        self.items.iter().map(|i| i.join_round).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("menu serializes")
    }

    /// Parses a menu document and checks it has one item per type of `cfg`.
    pub fn from_json(text: &str, cfg: &MarketConfig) -> Result<Self> {
        let menu: ContractMenu =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        menu.check_structure(cfg)?;
        Ok(menu)
    }

    pub fn check_structure(&self, cfg: &MarketConfig) -> Result<()> {
        let k = cfg.k();
        if self.items.len() != k || self.multiplicity.len() != k {
            return Err(Error::Parse(format!(
                "menu has {} items and {} multiplicities, expected {k}",
                self.items.len(),
                self.multiplicity.len()
            )));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.type_index != i + 1 {
                return Err(Error::Parse(format!(
                    "item at position {} has type_index {}",
                    i + 1,
                    item.type_index
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub client_id: String,
    pub type_index: usize,
    pub wallet: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClpMode {
    #[default]
    Fixed,
    Detector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SettlementMode {
    #[default]
    End,
    PerRound,
}

/// Raw market parameters as written in a config file.
///
/// Key names are the config file keys. Omitted keys take the reference value
/// ([`MarketParams::default`]). `thetas` may be omitted, in which case `K`
/// capabilities are drawn from `U(theta_low, theta_high)` with `rng_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: u32,
    pub delta: f64,
    pub beta: f64,
    pub vartheta: f64,
    pub lambda_clp: f64,
    pub lambda_nonclp: f64,
    pub budget: f64,
    pub unit_price: f64,
    /// `[start, end]` inclusive, or `[]` for no critical window.
    pub clp_window: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    pub theta_low: f64,
    pub theta_high: f64,
    pub rng_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<Vec<u32>>,
    pub linear_budget_cap: bool,
    pub initial_cohort: usize,
    pub clp_mode: ClpMode,
    pub clp_threshold: f64,
    pub performance_kappa: f64,
    pub settlement: SettlementMode,
}

impl Default for MarketParams {
    /// The reference experiment: 10 types, 15 clients, 25 rounds, critical rounds 1–10.
    fn default() -> Self {
        Self {
            k: 10,
            n: 15,
            t: 25,
            delta: 1.0,
            beta: 3.0,
            vartheta: 1.0,
            lambda_clp: 21.0,
            lambda_nonclp: 20.0,
            budget: 60.0,
            unit_price: 2.4,
            clp_window: vec![1, 10],
            thetas: None,
            theta_low: 1.0,
            theta_high: 2.0,
            rng_seed: 42,
            multiplicity: None,
            linear_budget_cap: false,
            initial_cohort: 5,
            clp_mode: ClpMode::Fixed,
            clp_threshold: 0.05,
            performance_kappa: 0.01,
            settlement: SettlementMode::End,
        }
    }
}

impl MarketParams {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }
}

/// A market whose every invariant has been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    params: MarketParams,
    thetas: TypeVector,
    timeframe: TimeFrame,
    multiplicity: Vec<u32>,
}

/// Checks every invariant of `params`, collecting all violations.
pub fn validate_config(params: MarketParams) -> Result<MarketConfig> {
    let mut v = Vec::new();
    let p = &params;

    let positive = |v: &mut Vec<Violation>, name: &str, x: f64| {
        if !(x.is_finite() && x > 0.0) {
            v.push(Violation::new(name, "must be positive"));
        }
    };
    if !(p.beta.is_finite() && p.beta > 1.0) {
        v.push(Violation::new("beta", "must exceed 1"));
    }
    positive(&mut v, "delta", p.delta);
    positive(&mut v, "vartheta", p.vartheta);
    positive(&mut v, "budget", p.budget);
    positive(&mut v, "lambda_clp", p.lambda_clp);
    positive(&mut v, "lambda_nonclp", p.lambda_nonclp);
    positive(&mut v, "unit_price", p.unit_price);
    positive(&mut v, "clp_threshold", p.clp_threshold);
    positive(&mut v, "performance_kappa", p.performance_kappa);
    if p.k == 0 {
        v.push(Violation::new("K", "must be positive"));
    }
    if p.n < p.k {
        v.push(Violation::new("N", "must be at least K"));
    }
    if p.initial_cohort == 0 || p.initial_cohort > p.n {
        v.push(Violation::new("initial_cohort", "must lie in [1, N]"));
    }

    let window = match p.clp_window.as_slice() {
        [] => Ok(None),
        [s, e] => Ok(Some((*s, *e))),
        _ => Err(Violation::new("clp_window", "must be [] or [start, end]")),
    };
    let timeframe = match window {
        Ok(w) => match TimeFrame::new(p.t, w) {
            Ok(tf) => Some(tf),
            Err(Error::Config(mut errs)) => {
                v.append(&mut errs);
                None
            }
            Err(e) => unreachable!("{e}"),
        },
        Err(e) => {
            v.push(e);
            None
        }
    };

    let thetas = match &p.thetas {
        Some(list) => {
            if list.len() != p.k {
                v.push(Violation::new(
                    "thetas",
                    format!("has {} entries, expected K = {}", list.len(), p.k),
                ));
                None
            } else if let Some(reason) = type_vector_violation(list) {
                v.push(Violation::new("thetas", reason));
                None
            } else {
                Some(TypeVector(list.clone()))
            }
        }
        None => match sample_type_vector(p.rng_seed, p.k, p.theta_low, p.theta_high) {
            Ok(tv) => Some(tv),
            Err(e) => {
                v.push(Violation::new("thetas", e.to_string()));
                None
            }
        },
    };

    let multiplicity = match &p.multiplicity {
        Some(m) if m.len() != p.k => {
            v.push(Violation::new("multiplicity", "must have K entries"));
            None
        }
        Some(m) => Some(m.clone()),
        None => Some(vec![1; p.k]),
    };

    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let thetas = thetas.expect("checked");
    let mut params = params;
    params.thetas = Some(thetas.as_slice().to_vec());
    Ok(MarketConfig {
        params,
        thetas,
        timeframe: timeframe.expect("checked"),
        multiplicity: multiplicity.expect("checked"),
    })
}

impl MarketConfig {
    /// Parameters with the capability vector resolved, so re-validating them
    /// reproduces this config exactly.
    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.params.k
    }
    pub fn n(&self) -> usize {
        self.params.n
    }
    pub fn rounds(&self) -> u32 {
        self.params.t
    }
    pub fn delta(&self) -> f64 {
        self.params.delta
    }
    pub fn beta(&self) -> f64 {
        self.params.beta
    }
    pub fn vartheta(&self) -> f64 {
        self.params.vartheta
    }
    pub fn budget(&self) -> f64 {
        self.params.budget
    }
    pub fn unit_price(&self) -> f64 {
        self.params.unit_price
    }
    pub fn rng_seed(&self) -> u64 {
        self.params.rng_seed
    }
    pub fn thetas(&self) -> &TypeVector {
        &self.thetas
    }
    pub fn timeframe(&self) -> &TimeFrame {
        &self.timeframe
    }
    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    pub fn lambda(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Clp => self.params.lambda_clp,
            Regime::NonClp => self.params.lambda_nonclp,
        }
    }

    /// Returns a re-validated copy after `edit` has modified the parameters.
    pub fn derive(&self, edit: impl FnOnce(&mut MarketParams)) -> Result<Self> {
        let mut p = self.params.clone();
        edit(&mut p);
        validate_config(p)
    }

    /// Keeps only the `k` lowest types.
    pub fn truncate_types(&self, k: usize) -> Result<Self> {
        self.derive(|p| {
            p.k = k;
            p.thetas = p
                .thetas
                .as_ref()
                .map(|t| t.iter().copied().take(k).collect());
            p.multiplicity = p
                .multiplicity
                .as_ref()
                .map(|m| m.iter().copied().take(k).collect());
        })
    }

    /// Clients `1..=N`, assigned to types round-robin in capability order.
    pub fn clients(&self) -> Vec<ClientProfile> {
        (0..self.n())
            .map(|i| ClientProfile {
                client_id: format!("client-{:03}", i + 1),
                type_index: i % self.k() + 1,
                wallet: format!("wallet-{:03}", i + 1),
            })
            .collect()
    }

    /// SHA-256 over the canonical JSON of the resolved parameters.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.params).expect("params serialize");
        hex::encode(Sha256::digest(json))
    }
}
