//! Closed-form payoff kernel shared by the solvers, the auditor and the simulator.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::TimeFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "CLP")]
    Clp,
    #[serde(rename = "NON_CLP")]
    NonClp,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Clp => "CLP",
            Regime::NonClp => "NON_CLP",
        }
    }
}

/// Time-aware bonus unit `h(t)`: `1 + ϑ / ln(2t)` inside the critical window, 1 outside.
pub fn bonus_factor(t: u32, tf: &TimeFrame, vartheta: f64) -> Result<f64> {
    tf.check_round(t)?;
    Ok(if tf.is_clp(t) {
        1.0 + vartheta / (2.0 * f64::from(t)).ln()
    } else {
        1.0
    })
}

/// Effort maximizing `θ h e − δe²/2`.
pub fn optimal_effort(theta: f64, h: f64, delta: f64) -> f64 {
    theta * h / delta
}

/// `(bonus, total)` at optimal effort: the bonus is `θ²h²/δ`.
pub fn reward(salary: f64, theta: f64, h: f64, delta: f64) -> (f64, f64) {
    let bonus = theta * theta * h * h / delta;
    (bonus, salary + bonus)
}

/// Client surplus at optimal effort: `θ²h²/(2δ) − (β−1)r`.
pub fn client_utility(theta: f64, h: f64, salary: f64, delta: f64, beta: f64) -> f64 {
    theta * theta * h * h / (2.0 * delta) - (beta - 1.0) * salary
}

/// Model-performance gain of a contribution. Identity; any concave map fits here.
pub fn gain(x: f64) -> f64 {
    x
}

/// Cloud surplus from one signed item: `λ·g(θh²/δ) − r − θ²h²/δ`.
pub fn cloud_item_utility(theta: f64, h: f64, salary: f64, delta: f64, lambda: f64) -> f64 {
    let (_, total) = reward(salary, theta, h, delta);
    lambda * gain(theta * h * h / delta) - total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf() -> TimeFrame {
        TimeFrame::new(25, Some((1, 10))).unwrap()
    }

    #[test]
    fn bonus_factor_values() {
        assert_eq!(bonus_factor(12, &tf(), 1.0).unwrap(), 1.0);
        assert_eq!(bonus_factor(12, &tf(), 7.5).unwrap(), 1.0);
        // 1 + 1/ln 2
        assert!((bonus_factor(1, &tf(), 1.0).unwrap() - 2.442_695_040_888_963).abs() < 1e-12);
        assert!(bonus_factor(5, &tf(), 1.0).unwrap() > bonus_factor(6, &tf(), 1.0).unwrap());
        assert!(bonus_factor(0, &tf(), 1.0).is_err());
        assert!(bonus_factor(26, &tf(), 1.0).is_err());
    }

    #[test]
    fn bonus_factor_decreasing_inside_window() {
        let tf = tf();
        let hs: Vec<f64> = (1..=10)
            .map(|t| bonus_factor(t, &tf, 0.3).unwrap())
            .collect();
        assert!(hs.windows(2).all(|w| w[0] > w[1]));
        assert!(hs.iter().all(|h| *h > 1.0));
    }

    #[test]
    fn effort_scale_series() {
        let th = 1.92;
        for (delta, e) in [(0.2, 9.60), (0.6, 3.20), (1.0, 1.92)] {
            assert!((optimal_effort(th, 1.0, delta) - e).abs() < 1e-12);
        }
        assert_eq!(optimal_effort(1.0, 1.0, 1.0), 1.0);
        assert!((optimal_effort(1.5, 2.442695, 1.0) - 3.6640425).abs() < 1e-9);
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward(0.0, 1.0, 1.0, 1.0), (1.0, 1.0));
        assert_eq!(reward(0.25, 1.0, 1.0, 1.0), (1.0, 1.25));
        let (b1, _) = reward(0.3, 1.4, 1.0, 0.7);
        let (b2, _) = reward(0.3, 1.4, 2.0, 0.7);
        assert!((b2 - 4.0 * b1).abs() < 1e-12);
    }

    #[test]
    fn client_utility_values() {
        assert_eq!(client_utility(1.0, 1.0, 0.0, 1.0, 3.0), 0.5);
        assert_eq!(client_utility(1.0, 1.0, 1.0, 1.0, 3.0), -1.5);
        let binding = 1.7f64.powi(2) * 1.3f64.powi(2) / (2.0 * 0.8 * 2.0);
        assert!(client_utility(1.7, 1.3, binding, 0.8, 3.0).abs() < 1e-12);
    }

    #[test]
    fn cloud_item_utility_values() {
        assert_eq!(cloud_item_utility(1.0, 1.0, 0.0, 1.0, 20.0), 19.0);
        assert_eq!(cloud_item_utility(1.0, 1.0, 0.0, 1.0, 0.0), -1.0);
        let a = cloud_item_utility(1.3, 1.8, 0.4, 0.9, 5.0);
        let b = cloud_item_utility(1.3, 1.8, 0.4, 0.9, 10.0);
        assert!((b - a - 5.0 * gain(1.3 * 1.8 * 1.8 / 0.9)).abs() < 1e-12);
    }

    #[test]
    fn gain_is_identity() {
        assert_eq!(gain(0.0), 0.0);
        assert_eq!(gain(1.92), 1.92);
        assert_eq!(gain(7.5), 7.5);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn utility_slope_in_salary_matches_finite_difference(
                theta in 0.5f64..3.0, h in 1.0f64..3.0, r in 0.0f64..10.0,
                delta in 0.1f64..2.0, beta in 1.01f64..5.0,
            ) {
                let step = 1e-3;
                let fd = (client_utility(theta, h, r + step, delta, beta)
                    - client_utility(theta, h, r, delta, beta)) / step;
                prop_assert!((fd + (beta - 1.0)).abs() < 1e-9);
            }

            #[test]
            fn utility_increasing_in_bonus_factor(
                theta in 0.5f64..3.0, h in 1.0f64..3.0, dh in 1e-3f64..1.0,
                r in 0.0f64..10.0, delta in 0.1f64..2.0, beta in 1.01f64..5.0,
            ) {
                prop_assert!(client_utility(theta, h + dh, r, delta, beta)
                    > client_utility(theta, h, r, delta, beta));
            }

            #[test]
            fn effort_times_delta_invariant(theta in 0.5f64..3.0, h in 1.0f64..3.0, delta in 0.05f64..5.0) {
                prop_assert!((optimal_effort(theta, h, delta) * delta - theta * h).abs() < 1e-12);
            }

            #[test]
            fn non_clp_rounds_have_unit_factor(t in 11u32..=25, vartheta in 0.01f64..50.0) {
                let tf = TimeFrame::new(25, Some((1, 10))).unwrap();
                prop_assert_eq!(bonus_factor(t, &tf, vartheta).unwrap(), 1.0);
            }
        }
    }
}
