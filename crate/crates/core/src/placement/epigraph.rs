//! Epigraph subproblem: per-target bounds `ϖ_u` and their maximum `℧`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpigraphRule {
    /// Joint minimizer over `(℧, ϖ)`: `℧` solves `Σ_u (t_u − ℧)₊ = 1/ρ₃`
    /// and `ϖ_u = min(℧, t_u)`.
    #[default]
    Exact,
    /// Clamp against the previous `℧`, then take the maximum.
    Clamp,
}

/// `t_u = obj_u − γ_u/ρ₃`, the unconstrained minimizer for each target.
fn shifted(objective: &[f64], gamma: &[f64], rho3: f64) -> Vec<f64> {
    objective.iter().zip(gamma).map(|(o, g)| o - g / rho3).collect()
}

/// Returns the new `ϖ` and `℧`.
pub fn update_epigraph_values(
    objective: &[f64],
    gamma: &[f64],
    rho3: f64,
    mho_prev: f64,
    rule: EpigraphRule,
) -> (Vec<f64>, f64) {
    let t = shifted(objective, gamma, rho3);
    let mho = match rule {
        EpigraphRule::Clamp => mho_prev,
        EpigraphRule::Exact => water_level(&t, 1.0 / rho3),
    };
    let varpi: Vec<f64> = t.iter().map(|&tu| tu.min(mho)).collect();
    let mho = varpi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (varpi, mho)
}

/// Level `m` with `Σ (t_u − m)₊ = mass`.
fn water_level(t: &[f64], mass: f64) -> f64 {
    let mut sorted = t.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for (k, &tk) in sorted.iter().enumerate() {
        acc += tk;
        let level = (acc - mass) / (k + 1) as f64;
        let next = sorted.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if level >= next {
            return level;
        }
    }
    unreachable!("the last candidate level always exceeds -inf")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_single_target_follows_candidate() {
        let (v, m) = update_epigraph_values(&[2.0], &[0.0], 1.0, 5.0, EpigraphRule::Clamp);
        assert_eq!(v, vec![2.0]);
        assert_eq!(m, 2.0);
    }

    #[test]
    fn clamp_all_above_keeps_mho() {
        let (v, m) = update_epigraph_values(&[7.0, 9.0], &[0.0, 0.0], 1.0, 5.0, EpigraphRule::Clamp);
        assert_eq!(v, vec![5.0, 5.0]);
        assert_eq!(m, 5.0);
    }

    #[test]
    fn clamp_mixed_case_by_hand() {
        // t = obj − γ/ρ = [3 − 1, 6 − 0.5, 4 + 1] = [2, 5.5, 5]; ℧ = 4.5
        let (v, m) = update_epigraph_values(&[3.0, 6.0, 4.0], &[2.0, 1.0, -2.0], 2.0, 4.5, EpigraphRule::Clamp);
        assert_eq!(v, vec![2.0, 4.5, 4.5]);
        assert_eq!(m, 4.5);
    }

    #[test]
    fn exact_level_balances_excess() {
        let t = [1.0, 4.0, 3.0];
        let (v, m) = update_epigraph_values(&t, &[0.0; 3], 2.0, 0.0, EpigraphRule::Exact);
        let excess: f64 = t.iter().map(|x| (x - m).max(0.0)).sum();
        assert!((excess - 0.5).abs() < 1e-14);
        assert!((m - 3.5).abs() < 1e-14);
        assert_eq!(v, vec![1.0, 3.5, 3.0]);
    }

    #[test]
    fn exact_level_can_drop_below_all() {
        let (v, m) = update_epigraph_values(&[1.0, 1.0], &[0.0; 2], 1.0, 0.0, EpigraphRule::Exact);
        assert!((m - 0.5).abs() < 1e-14);
        assert_eq!(v, vec![0.5, 0.5]);
    }
}
