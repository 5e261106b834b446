//! Cross-AP data association by exhaustive permutation search.
//!
//! AP 0's component order is the reference. For every other AP a
//! permutation maps reference targets to its components; the tuple of
//! permutations minimizing the summed multilateration residual wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::multilaterate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub max_targets: usize,
    /// Largest number of permutation tuples `(U!)^(L−1)` to enumerate.
    pub max_tuples: u64,
    pub multilateration_iters: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            max_targets: 5,
            max_tuples: 20_000_000,
            multilateration_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationOutcome {
    /// `permutations[l][u]` is the component of AP `l` assigned to
    /// reference target `u`; AP 0 is the identity.
    pub permutations: Vec<Vec<usize>>,
    /// `ranges_m[l][u]`, reordered to reference target order.
    pub ranges_m: Vec<Vec<f64>>,
    /// Sum over targets of squared range residuals, m².
    pub association_cost: f64,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Associates per-AP component ranges (`ranges[l][k]`, component order as
/// returned by each AP's decomposition) across APs.
pub fn associate(ranges: &[Vec<f64>], aps: &[[f64; 2]], config: &AssociationConfig) -> Result<AssociationOutcome> {
    let l = ranges.len();
    if l < 2 || aps.len() != l {
        return Err(Error::Precondition(format!(
            "association needs ranges from at least 2 APs matching the AP list ({} ranges, {} APs)",
            l,
            aps.len()
        )));
    }
    let u = ranges[0].len();
    if u == 0 || ranges.iter().any(|r| r.len() != u) {
        return Err(Error::Precondition("every AP must report the same nonzero number of components".into()));
    }
    if u > config.max_targets {
        return Err(Error::AssociationBudget(format!(
            "{u} targets exceed the limit of {}; lower U or use reference ranging",
            config.max_targets
        )));
    }
    let fact: u64 = (1..=u as u64).product();
    let tuples = (0..l - 1).try_fold(1u64, |acc, _| acc.checked_mul(fact));
    if tuples.is_none_or(|t| t > config.max_tuples) {
        return Err(Error::AssociationBudget(format!(
            "{u} targets over {l} APs need ({u}!)^{} permutation tuples, above the budget of {}; lower U or use reference ranging",
            l - 1,
            config.max_tuples
        )));
    }
    // cost[u0][code] with code enumerating the component choice at APs 1..L−1.
    let combos = u.pow((l - 1) as u32);
    let mut table = vec![0.0; u * combos];
    let mut rs = vec![0.0; l];
    for ref_u in 0..u {
        for code in 0..combos {
            rs[0] = ranges[0][ref_u];
            let mut c = code;
            for (ap, r) in rs.iter_mut().enumerate().skip(1) {
                *r = ranges[ap][c % u];
                c /= u;
            }
            let fix = multilaterate(aps, &rs, None, config.multilateration_iters)?;
            table[ref_u * combos + code] = fix.ssr;
        }
    }
    let perms = permutations(u);
    let mut choice = vec![0usize; l - 1];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut cost = 0.0;
        for ref_u in 0..u {
            let mut code = 0;
            for ap in (0..l - 1).rev() {
                code = code * u + perms[choice[ap]][ref_u];
            }
            cost += table[ref_u * combos + code];
        }
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, choice.clone()));
        }
        // odometer over permutation indices
        let mut k = 0;
        while k < l - 1 {
            choice[k] += 1;
            if choice[k] < perms.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == l - 1 {
            break;
        }
    }
    let (cost, choice) = best.expect("at least one tuple");
    let mut permutations_out = vec![(0..u).collect::<Vec<_>>()];
    permutations_out.extend(choice.iter().map(|&c| perms[c].clone()));
    let ranges_m = permutations_out
        .iter()
        .zip(ranges)
        .map(|(p, r)| p.iter().map(|&k| r[k]).collect())
        .collect();
    Ok(AssociationOutcome {
        permutations: permutations_out,
        ranges_m,
        association_cost: cost,
    })
}
