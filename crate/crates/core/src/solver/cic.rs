use super::{build_menu, Solution, SolveRequest};
use crate::economics;
use crate::error::{Error, Result};
use crate::market::{InfoCase, MarketConfig};
use crate::TOL;

/// Salary that leaves a fully known type with exactly zero surplus.
pub fn cic_salary(theta: f64, h: f64, delta: f64, beta: f64) -> f64 {
    theta * theta * h * h / (2.0 * delta * (beta - 1.0))
}

pub fn solve_cic(cfg: &MarketConfig) -> Result<Solution> {
    solve_cic_with(cfg, &SolveRequest::initial(cfg))
}

/// Maximizes cloud utility with every item priced at its binding salary, subject
/// to the per-round budget. A multiple-choice knapsack over the alphabet.
pub fn solve_cic_with(cfg: &MarketConfig, req: &SolveRequest) -> Result<Solution> {
    let alphabet = req.alphabet(cfg)?;
    let lambda = req.lambda(cfg)?;
    let k = cfg.k();
    let (delta, beta) = (cfg.delta(), cfg.beta());

    // value[j][a], weight[j][a] for type j+1 on entry a.
    let mut value = vec![vec![0.0; alphabet.len()]; k];
    let mut weight = vec![vec![0.0; alphabet.len()]; k];
    for j in 0..k {
        let theta = cfg.thetas().theta(j + 1);
        let m = f64::from(req.multiplicity[j]);
        for (a, entry) in alphabet.entries().iter().enumerate() {
            let salary = cic_salary(theta, entry.h, delta, beta);
            let (_, total) = economics::reward(salary, theta, entry.h, delta);
            value[j][a] = m * economics::cloud_item_utility(theta, entry.h, salary, delta, lambda);
            weight[j][a] = m * total;
        }
    }

    let min_spend: f64 = weight
        .iter()
        .map(|w| w.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    if min_spend > cfg.budget() + TOL {
        return Err(Error::Infeasible {
            min_spend,
            budget: cfg.budget(),
        });
    }
    let min_index: Vec<usize> = weight.iter().map(|w| lightest(w)).collect();
    let rest = RestBounds::new(&value, &weight, &min_index);

    let mut search = Search {
        value: &value,
        weight: &weight,
        rest: &rest,
        budget: cfg.budget(),
        path: Vec::with_capacity(k),
        best: None,
    };
    search.descend(0, 0.0, 0.0);
    let (assignment, objective, spend) = search.best.expect("minimal-spend assignment is feasible");

    let salaries: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(j, &a)| cic_salary(cfg.thetas().theta(j + 1), alphabet.h(a), delta, beta))
        .collect();
    let menu = build_menu(cfg, InfoCase::Cic, req, &alphabet, &assignment, &salaries);
    Ok(Solution {
        menu,
        assignment,
        objective,
        spend,
    })
}

/// Index of the lightest entry, preferring the more valuable one on equal weight.
fn lightest(w: &[f64]) -> usize {
    (0..w.len())
        .min_by(|&a, &b| w[a].total_cmp(&w[b]))
        .expect("alphabet is non-empty")
}

/// Linear-relaxation bounds for the types after each depth.
///
/// Each type starts on its lightest entry; the upper convex hull of its
/// (weight, value) points gives upgrade segments, and the relaxation fills the
/// remaining budget with segments in decreasing value-per-weight order.
struct RestBounds {
    /// `base_weight[j]`, `base_value[j]`: all types `j..` on their lightest entry.
    base_weight: Vec<f64>,
    base_value: Vec<f64>,
    /// `segments[j]`: `(slope, width)` for types `j..`, steepest first.
    segments: Vec<Vec<(f64, f64)>>,
}

impl RestBounds {
    fn new(value: &[Vec<f64>], weight: &[Vec<f64>], min_index: &[usize]) -> Self {
        let k = value.len();
        let hulls: Vec<Vec<(f64, f64)>> = (0..k)
            .map(|j| upgrade_segments(&value[j], &weight[j], min_index[j]))
            .collect();
        let mut base_weight = vec![0.0; k + 1];
        let mut base_value = vec![0.0; k + 1];
        let mut segments = vec![Vec::new(); k + 1];
        for j in (0..k).rev() {
            base_weight[j] = base_weight[j + 1] + weight[j][min_index[j]];
            base_value[j] = base_value[j + 1] + value[j][min_index[j]];
            let mut segs = segments[j + 1].clone();
            segs.extend_from_slice(&hulls[j]);
            segs.sort_by(|a: &(f64, f64), b| b.0.total_cmp(&a.0));
            segments[j] = segs;
        }
        Self {
            base_weight,
            base_value,
            segments,
        }
    }

    /// Upper bound on the value types `j..` can add within `capacity`.
    fn value_bound(&self, j: usize, capacity: f64) -> f64 {
        let mut left = capacity - self.base_weight[j];
        let mut bound = self.base_value[j];
        for &(slope, width) in &self.segments[j] {
            if left <= 0.0 {
                break;
            }
            let take = width.min(left);
            bound += slope * take;
            left -= take;
        }
        bound
    }
}

/// Positive-slope segments of the upper hull starting at the lightest entry.
fn upgrade_segments(value: &[f64], weight: &[f64], start: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut w0, mut v0) = (weight[start], value[start]);
    for (a, (&w, &v)) in weight.iter().zip(value).enumerate() {
        if a != start && w == w0 && v > v0 {
            v0 = v;
        }
    }
    loop {
        let next = weight
            .iter()
            .zip(value)
            .filter(|(&w, &v)| w > w0 && v > v0)
            .map(|(&w, &v)| ((v - v0) / (w - w0), w, v))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        match next {
            Some((slope, w, v)) => {
                out.push((slope, w - w0));
                w0 = w;
                v0 = v;
            }
            None => return out,
        }
    }
}

struct Search<'a> {
    value: &'a [Vec<f64>],
    weight: &'a [Vec<f64>],
    rest: &'a RestBounds,
    budget: f64,
    path: Vec<usize>,
    best: Option<(Vec<usize>, f64, f64)>,
}

impl Search<'_> {
    fn descend(&mut self, j: usize, acc_value: f64, acc_weight: f64) {
        if j == self.value.len() {
            if self
                .best
                .as_ref()
                .is_none_or(|(_, v, _)| acc_value > v + TOL)
            {
                self.best = Some((self.path.clone(), acc_value, acc_weight));
            }
            return;
        }
        for a in 0..self.value[j].len() {
            let w = acc_weight + self.weight[j][a];
            let capacity = self.budget + TOL - w;
            if capacity < self.rest.base_weight[j + 1] {
                continue;
            }
            let v = acc_value + self.value[j][a];
            if let Some((_, best, _)) = &self.best {
                // Nothing below can beat the incumbent by more than TOL.
                if v + self.rest.value_bound(j + 1, capacity) <= *best {
                    continue;
                }
            }
            self.path.push(a);
            self.descend(j + 1, v, w);
            self.path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::client_utility;
    use crate::market::{validate_config, MarketParams};

    fn small(budget: f64) -> MarketConfig {
        validate_config(MarketParams {
            k: 2,
            n: 2,
            t: 3,
            clp_window: vec![1, 1],
            thetas: Some(vec![1.0, 2.0]),
            delta: 1.0,
            beta: 3.0,
            lambda_clp: 21.0,
            vartheta: 1.0,
            budget,
            initial_cohort: 1,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn salary_values() {
        assert_eq!(cic_salary(1.0, 1.0, 1.0, 3.0), 0.25);
        assert_eq!(cic_salary(1.0, 0.0, 1.0, 3.0), 0.0);
        let r = cic_salary(1.4, 2.1, 0.6, 2.5);
        assert!(client_utility(1.4, 2.1, r, 0.6, 2.5).abs() < 1e-12);
    }

    #[test]
    fn ample_budget_takes_earliest_round() {
        let sol = solve_cic(&small(1e6)).unwrap();
        assert_eq!(sol.menu.join_rounds(), [1, 1]);
    }

    #[test]
    fn one_upgrade_affordable() {
        // weights: 1.25 θ² h²; h(1)^2 = 5.9668
        let h2 = (1.0 + 1.0 / 2f64.ln()).powi(2);
        // enough for type 1 upgraded + type 2 at h=1, not both upgraded
        let budget = 1.25 * (h2 + 4.0) + 0.1;
        let sol = solve_cic(&small(budget)).unwrap();
        assert!(sol.spend <= budget + TOL);
        // type 2 upgrade costs 5 (h2-1) > type 1's; compare values directly
        let v = |theta: f64, hh: f64| 21.0 * theta * hh - 1.25 * theta * theta * hh;
        let up1 = v(1.0, h2) + v(2.0, 1.0);
        let up2_cost = 1.25 * (1.0 + 4.0 * h2);
        assert!(up2_cost > budget);
        assert!((sol.objective - up1).abs() < 1e-9);
        assert_eq!(sol.menu.join_rounds(), [1, 2]);
    }

    #[test]
    fn budget_floor_is_infeasible() {
        let floor = 1.25 * (1.0 + 4.0);
        assert!(matches!(
            solve_cic(&small(floor - 1e-3)),
            Err(Error::Infeasible { .. })
        ));
        assert!(solve_cic(&small(floor)).is_ok());
    }
}
