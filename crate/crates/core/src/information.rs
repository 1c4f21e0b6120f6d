//! Entropy, divergence, total correlation and dual total correlation, in nats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{fuzzy_split, DiscreteMeasure, FuzzyPartition, Hookup, Symbol, Word};

/// `−Σ p log p` with `0 log 0 = 0`.
pub fn entropy_of(masses: impl IntoIterator<Item = f64>) -> f64 {
    masses.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

pub fn shannon_entropy(mu: &DiscreteMeasure) -> f64 {
    entropy_of(mu.iter().map(|(_, m)| m))
}

/// `D(ν‖μ)`; `+∞` when `ν` charges a word outside the support of `μ`.
pub fn kl_divergence(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    if nu.space() != mu.space() {
        return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", nu.space(), mu.space())));
    }
    let mut d = 0.0;
    for (w, p) in nu.iter() {
        let q = mu.mass(w);
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += p * (p / q).ln();
    }
    Ok(d.max(0.0))
}

/// Entropy of the projection onto `coords` without materializing the marginal.
pub fn marginal_entropy(mu: &DiscreteMeasure, coords: &[usize]) -> f64 {
    let mut groups: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
    for (w, m) in mu.iter() {
        *groups.entry(coords.iter().map(|&c| w[c]).collect()).or_insert(0.0) += m;
    }
    entropy_of(groups.into_values())
}

pub fn coordinate_entropies(mu: &DiscreteMeasure) -> Vec<f64> {
    (0..mu.dimension()).map(|i| marginal_entropy(mu, &[i])).collect()
}

/// `H(ξ_i | ξ_{coords∖i})` for each `i` in `coords`, grouping atoms by the
/// remaining coordinates. Only realized conditioning strings contribute.
pub fn conditional_entropies_within(mu: &DiscreteMeasure, coords: &[usize]) -> Vec<f64> {
    coords
        .iter()
        .map(|&i| {
            let rest: Vec<usize> = coords.iter().copied().filter(|&c| c != i).collect();
            let mut groups: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>> = BTreeMap::new();
            for (w, m) in mu.iter() {
                let key = rest.iter().map(|&c| w[c]).collect();
                *groups.entry(key).or_default().entry(w[i]).or_insert(0.0) += m;
            }
            groups
                .into_values()
                .map(|g| {
                    let total: f64 = g.values().sum();
                    g.into_values()
                        .filter(|&m| m > 0.0)
                        .map(|m| -m * (m / total).ln())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect()
}

pub fn conditional_entropies(mu: &DiscreteMeasure) -> Vec<f64> {
    let all: Vec<usize> = (0..mu.dimension()).collect();
    conditional_entropies_within(mu, &all)
}

/// `Σ H(μ_{i}) − H(μ)`.
pub fn total_correlation(mu: &DiscreteMeasure) -> f64 {
    coordinate_entropies(mu).iter().sum::<f64>() - shannon_entropy(mu)
}

/// `D(μ ‖ μ_{1} × ⋯ × μ_{n})`, summed over the support of `μ` only.
pub fn total_correlation_kl(mu: &DiscreteMeasure) -> f64 {
    let marginals: Vec<BTreeMap<Symbol, f64>> = (0..mu.dimension())
        .map(|i| {
            let mut m = BTreeMap::new();
            for (w, p) in mu.iter() {
                *m.entry(w[i]).or_insert(0.0) += p;
            }
            m
        })
        .collect();
    mu.iter()
        .map(|(w, p)| {
            let log_prod: f64 = w.iter().zip(&marginals).map(|(s, m)| m[s].ln()).sum();
            p * (p.ln() - log_prod)
        })
        .sum()
}

/// `H(μ) − Σ_i H(ξ_i | ξ_{[n]∖i})`.
pub fn dual_total_correlation(mu: &DiscreteMeasure) -> f64 {
    shannon_entropy(mu) - conditional_entropies(mu).iter().sum::<f64>()
}

/// DTC of the projection onto `coords`.
pub fn dual_total_correlation_within(mu: &DiscreteMeasure, coords: &[usize]) -> f64 {
    marginal_entropy(mu, coords) - conditional_entropies_within(mu, coords).iter().sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub entropy: f64,
    pub per_coordinate_entropies: Vec<f64>,
    pub tc: f64,
    pub dtc: f64,
}

pub fn info_report(mu: &DiscreteMeasure) -> InfoReport {
    let entropy = shannon_entropy(mu);
    let per_coordinate_entropies = coordinate_entropies(mu);
    let tc = per_coordinate_entropies.iter().sum::<f64>() - entropy;
    let dtc = entropy - conditional_entropies(mu).iter().sum::<f64>();
    InfoReport {
        entropy,
        per_coordinate_entropies,
        tc,
        dtc,
    }
}

/// `I(ξ; ζ) = D(λ ‖ p × μ)` for the joint law of a hookup.
pub fn hookup_mutual_information(h: &Hookup) -> f64 {
    let p = h.index_marginal();
    let mu = h.space_marginal();
    h.joint
        .iter()
        .map(|((j, w), &m)| m * (m / (p[*j] * mu.mass(w))).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `I_μ(ρ_1, …, ρ_k) = Σ p_j D(μ|ρ_j ‖ μ)`.
pub fn fuzzy_mutual_information(mu: &DiscreteMeasure, fp: &FuzzyPartition) -> Result<f64> {
    if fp.space != mu.space() {
        return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", fp.space, mu.space())));
    }
    let masses = mu.masses();
    let mut total = 0.0;
    for rho in &fp.densities {
        if rho.len() != masses.len() {
            return Err(Error::LengthMismatch(rho.len(), masses.len()));
        }
        let p: f64 = masses.iter().zip(rho).map(|(m, r)| m * r.max(0.0)).sum();
        if p <= 0.0 {
            continue;
        }
        // p · D(μ|ρ ‖ μ) = Σ μ ρ log(ρ / p)
        total += masses
            .iter()
            .zip(rho)
            .filter(|(_, r)| **r > 0.0)
            .map(|(m, r)| m * r * (r / p).ln())
            .sum::<f64>();
    }
    Ok(total.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decrement {
    /// `DTC(μ) − Σ p_j DTC(μ|ρ_j)`.
    pub lhs: f64,
    /// `I(ξ;ζ) − Σ_i I(ξ_i; ζ | ξ_{[n]∖i})` from the hookup.
    pub rhs: f64,
}

/// The DTC decrement of a binary fuzzy partition, computed two independent ways.
pub fn dtc_decrement(mu: &DiscreteMeasure, fp: &FuzzyPartition) -> Result<Decrement> {
    if fp.len() != 2 {
        return Err(Error::InvalidPartition(format!(
            "expected 2 densities, got {}",
            fp.len()
        )));
    }
    let w = fp.weights(mu);
    if w.iter().any(|&p| p <= 0.0) {
        return Err(Error::DegenerateWeight(format!("cell weights {w:?}")));
    }
    let rep = fuzzy_split(mu, fp)?;
    let lhs = dual_total_correlation(mu)
        - rep
            .weights
            .iter()
            .zip(&rep.components)
            .map(|(p, c)| p * dual_total_correlation(c))
            .sum::<f64>();

    // joint law of (ζ, ξ) over the support
    let n = mu.dimension();
    let joint: Vec<(usize, &Word, f64)> = fp
        .densities
        .iter()
        .enumerate()
        .flat_map(|(j, rho)| {
            mu.iter()
                .zip(rho)
                .filter(|(_, r)| **r > 0.0)
                .map(move |((x, m), r)| (j, x, m * r))
        })
        .collect();
    let h_of = |with_index: bool, drop: Option<usize>| -> f64 {
        let mut groups: BTreeMap<(usize, Vec<Symbol>), f64> = BTreeMap::new();
        for &(j, x, m) in &joint {
            let key: Vec<Symbol> = (0..n).filter(|&c| Some(c) != drop).map(|c| x[c]).collect();
            *groups.entry((if with_index { j } else { 0 }, key)).or_insert(0.0) += m;
        }
        entropy_of(groups.into_values())
    };
    let h_xi = h_of(false, None);
    let h_joint = h_of(true, None);
    let h_zeta = entropy_of(w.iter().copied());
    let mut rhs = h_zeta + h_xi - h_joint;
    for i in 0..n {
        rhs -= h_of(true, Some(i)) + h_xi - h_of(false, Some(i)) - h_joint;
    }
    Ok(Decrement { lhs, rhs })
}

/// Greedy coordinate removal: with `α = TC(μ)/(rn)`, repeatedly drop the
/// retained coordinate whose excess `H(ξ_i) − H(ξ_i | ξ_{R∖i})` is largest,
/// while it exceeds `α`. Ties go to the lowest index. Returns the kept set, sorted.
pub fn trim_coordinates(mu: &DiscreteMeasure, r: f64) -> Result<Vec<usize>> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("trim needs r in (0,1), got {r}")));
    }
    let n = mu.dimension();
    let alpha = total_correlation(mu).max(0.0) / (r * n as f64);
    let singles = coordinate_entropies(mu);
    let mut kept: Vec<usize> = (0..n).collect();
    while kept.len() > 1 {
        let cond = conditional_entropies_within(mu, &kept);
        let mut best: Option<(usize, f64)> = None;
        for (pos, &i) in kept.iter().enumerate() {
            let excess = singles[i] - cond[pos];
            if excess > alpha + 1e-12 && best.is_none_or(|(_, e)| excess > e) {
                best = Some((pos, excess));
            }
        }
        match best {
            Some((pos, _)) => {
                kept.remove(pos);
            }
            None => break,
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{hookup, ProductSpace};

    fn sum_zero(q: usize, n: usize) -> DiscreteMeasure {
        let space = ProductSpace::new(q, n).unwrap();
        let words = space
            .words(1 << 20)
            .unwrap()
            .into_iter()
            .filter(|w| w.iter().map(|&s| s as usize).sum::<usize>() % q == 0);
        DiscreteMeasure::uniform(space, words).unwrap()
    }

    #[test]
    fn entropy_of_quarter() {
        let mu = DiscreteMeasure::new(ProductSpace::new(2, 1).unwrap(), [(vec![0], 0.25), (vec![1], 0.75)]).unwrap();
        let oracle = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((shannon_entropy(&mu) - oracle).abs() < 1e-15);
        assert!((shannon_entropy(&mu) - 0.5623).abs() < 5e-5);
    }

    #[test]
    fn kl_of_conditioning_is_log_inverse_mass() {
        let mu = DiscreteMeasure::iid(&[0.2, 0.8], 2).unwrap();
        let nu = crate::measures::condition(&mu, |w| w[0] == 1).unwrap();
        assert!((kl_divergence(&nu, &mu).unwrap() - (1.0f64 / 0.8).ln()).abs() < 1e-14);
        assert_eq!(kl_divergence(&mu, &nu).unwrap(), f64::INFINITY);
        assert_eq!(kl_divergence(&mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn subgroup_values() {
        for q in [2usize, 3] {
            let mu = sum_zero(q, 3);
            let lq = (q as f64).ln();
            assert!((total_correlation(&mu) - lq).abs() < 1e-12);
            assert!((dual_total_correlation(&mu) - 2.0 * lq).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_values() {
        let mu = DiscreteMeasure::uniform(ProductSpace::new(2, 2).unwrap(), [vec![0, 0], vec![1, 1]]).unwrap();
        let l2 = 2f64.ln();
        assert!((total_correlation(&mu) - l2).abs() < 1e-15);
        assert!((dual_total_correlation(&mu) - l2).abs() < 1e-15);
    }

    #[test]
    fn trim_sum_zero_drops_one_coordinate() {
        let mu = sum_zero(2, 4);
        let s = trim_coordinates(&mu, 0.5).unwrap();
        assert_eq!(s, vec![1, 2, 3]);
        assert!(dual_total_correlation_within(&mu, &s).abs() < 1e-12);
        let prod = DiscreteMeasure::iid(&[0.3, 0.7], 4).unwrap();
        assert_eq!(trim_coordinates(&prod, 0.5).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn indicator_mutual_information_is_binary_entropy() {
        let mu = DiscreteMeasure::iid(&[0.3, 0.7], 2).unwrap();
        let labels: Vec<usize> = mu.support().iter().map(|w| w[0] as usize).collect();
        let fp = FuzzyPartition::from_labels(&mu, &labels, 2).unwrap();
        let i = fuzzy_mutual_information(&mu, &fp).unwrap();
        // oracle: ζ is a function of ξ, so I = H(ζ)
        let oracle = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        assert!((i - oracle).abs() < 1e-14);
        let rep = fuzzy_split(&mu, &fp).unwrap();
        let h = hookup(&rep.weights, &rep.components).unwrap();
        assert!((hookup_mutual_information(&h) - oracle).abs() < 1e-12);
    }

    #[test]
    fn singleton_partition_recovers_entropy() {
        let mu = DiscreteMeasure::iid(&[0.3, 0.7], 2).unwrap();
        let labels: Vec<usize> = (0..mu.len()).collect();
        let fp = FuzzyPartition::from_labels(&mu, &labels, mu.len()).unwrap();
        assert!((fuzzy_mutual_information(&mu, &fp).unwrap() - shannon_entropy(&mu)).abs() < 1e-14);
        assert_eq!(
            fuzzy_mutual_information(&mu, &FuzzyPartition::trivial(&mu)).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_split_has_zero_decrement() {
        let mu = sum_zero(2, 3);
        let fp = FuzzyPartition::new(&mu, vec![vec![0.3; 4], vec![0.7; 4]]).unwrap();
        let d = dtc_decrement(&mu, &fp).unwrap();
        assert!(d.lhs.abs() < 1e-12 && d.rhs.abs() < 1e-12);
        let degenerate = FuzzyPartition::new(&mu, vec![vec![0.0; 4], vec![1.0; 4]]).unwrap();
        assert!(matches!(
            dtc_decrement(&mu, &degenerate),
            Err(Error::DegenerateWeight(_))
        ));
    }
}
