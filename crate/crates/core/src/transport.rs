//! Normalized Hamming metric and the transportation distance `d̄` on `A^n`.
//!
//! The exact backend is successive shortest paths on the bipartite support
//! graph. Costs are mismatch counts (integers), so potentials and path lengths
//! are exact; only the flow amounts are floating point.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{marginal, DiscreteMeasure, Symbol, Word};

/// Default cap on `|supp μ| + |supp ν|` for the exact solver.
pub const DEFAULT_EXACT_SUPPORT_CAP: usize = 1 << 16;

/// Exact-solver cap, overridable through `HC_MAX_SUPPORT`.
pub fn exact_support_cap() -> usize {
    std::env::var("HC_MAX_SUPPORT")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_EXACT_SUPPORT_CAP)
}

pub fn mismatches(x: &[Symbol], y: &[Symbol]) -> usize {
    x.iter().zip(y).filter(|(a, b)| a != b).count()
}

/// `d_n(x, y) = |{i : x_i ≠ y_i}| / n`.
pub fn hamming(x: &[Symbol], y: &[Symbol]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(mismatches(x, y) as f64 / x.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub from: Word,
    pub to: Word,
    pub mass: f64,
}

/// A coupling of `source` and `target`, stored as sorted `(from, to, mass)` triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub plan: Vec<PlanEntry>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn as_map(&self) -> BTreeMap<(Word, Word), f64> {
        self.plan
            .iter()
            .map(|e| ((e.from.clone(), e.to.clone()), e.mass))
            .collect()
    }

    /// Largest row/column sum violation.
    pub fn marginal_error(&self) -> f64 {
        let mut rows: BTreeMap<&Word, f64> = BTreeMap::new();
        let mut cols: BTreeMap<&Word, f64> = BTreeMap::new();
        for e in &self.plan {
            *rows.entry(&e.from).or_insert(0.0) += e.mass;
            *cols.entry(&e.to).or_insert(0.0) += e.mass;
        }
        let r = self
            .source
            .iter()
            .map(|(w, m)| (rows.get(w).copied().unwrap_or(0.0) - m).abs())
            .fold(0.0, f64::max);
        let c = self
            .target
            .iter()
            .map(|(w, m)| (cols.get(w).copied().unwrap_or(0.0) - m).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.space() != nu.space() {
        return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", mu.space(), nu.space())));
    }
    let size = mu.len() + nu.len();
    let cap = exact_support_cap();
    if size > cap {
        return Err(Error::CapExceeded {
            what: "combined support for exact transport".into(),
            size,
            cap,
            hint: "use transport::sinkhorn_distance (approximate) or raise HC_MAX_SUPPORT".into(),
        });
    }
    Ok(())
}

/// Optimal coupling of `mu` (source) and `nu` (target) under `d_n`.
pub fn transport_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    check_pair(mu, nu)?;
    let xs = mu.support();
    let ys = nu.support();
    let a = mu.masses();
    let b = nu.masses();
    let cost: Vec<Vec<i64>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| mismatches(x, y) as i64).collect())
        .collect();
    let flow = min_cost_flow(&a, &b, &cost);
    let n = mu.dimension() as f64;
    let mut plan = Vec::new();
    let mut total = 0.0;
    for (i, row) in flow.iter().enumerate() {
        for (&j, &f) in row {
            if f > 0.0 {
                total += f * cost[i][j] as f64;
                plan.push(PlanEntry {
                    from: xs[i].clone(),
                    to: ys[j].clone(),
                    mass: f,
                });
            }
        }
    }
    Ok(TransportPlan {
        source: mu.clone(),
        target: nu.clone(),
        plan,
        cost: total / n,
    })
}

/// `d̄(μ, ν)`.
pub fn dbar(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(transport_distance(mu, nu)?.cost)
}

// Node layout: 0 = super source, 1..=m sources, m+1..=m+k targets, m+k+1 = super sink.
fn min_cost_flow(a: &[f64], b: &[f64], cost: &[Vec<i64>]) -> Vec<BTreeMap<usize, f64>> {
    let (m, k) = (a.len(), b.len());
    let nodes = m + k + 2;
    let sink = nodes - 1;
    let mut flow: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m];
    // incoming flow per target, to enumerate backward edges T_j → S_i
    let mut inflow: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    let mut sent = vec![0.0; m];
    let mut recv = vec![0.0; k];

    // Zero-cost diagonal matches first; optimal for a metric cost.
    for i in 0..m {
        for j in 0..k {
            if cost[i][j] == 0 {
                let f = (a[i] - sent[i]).min(b[j] - recv[j]);
                if f > 0.0 {
                    flow[i].insert(j, f);
                    inflow[j].insert(i);
                    sent[i] += f;
                    recv[j] += f;
                }
            }
        }
    }

    let mut pot = vec![0i64; nodes];
    const INF: i64 = i64::MAX / 4;
    loop {
        let mut dist = vec![INF; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[0] = 0;
        loop {
            let mut u = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v] < INF && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let du = dist[u];
            let relax = |v: usize, c: i64, dist: &mut Vec<i64>, prev: &mut Vec<usize>| {
                let nd = du + c + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == 0 {
                for i in 0..m {
                    if sent[i] < a[i] {
                        relax(1 + i, 0, &mut dist, &mut prev);
                    }
                }
            } else if u <= m {
                let i = u - 1;
                for j in 0..k {
                    relax(1 + m + j, cost[i][j], &mut dist, &mut prev);
                }
            } else if u < sink {
                let j = u - 1 - m;
                for &i in &inflow[j] {
                    relax(1 + i, -cost[i][j], &mut dist, &mut prev);
                }
                if recv[j] < b[j] {
                    relax(sink, 0, &mut dist, &mut prev);
                }
            }
        }
        if dist[sink] >= INF {
            break;
        }
        for v in 0..nodes {
            pot[v] += dist[v].min(dist[sink]);
        }

        // Bottleneck along the path; remember which edge attains it.
        let mut path = vec![sink];
        while *path.last().unwrap() != 0 {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        let mut bottleneck = f64::INFINITY;
        let mut arg = 0;
        for (e, w) in path.windows(2).enumerate() {
            let (u, v) = (w[0], w[1]);
            let cap = if u == 0 {
                a[v - 1] - sent[v - 1]
            } else if v == sink {
                b[u - 1 - m] - recv[u - 1 - m]
            } else if u <= m {
                f64::INFINITY
            } else {
                flow[v - 1][&(u - 1 - m)]
            };
            if cap < bottleneck {
                bottleneck = cap;
                arg = e;
            }
        }
        if !(bottleneck > 0.0) {
            break;
        }
        for (e, w) in path.windows(2).enumerate() {
            let (u, v) = (w[0], w[1]);
            let exact = e == arg;
            if u == 0 {
                let i = v - 1;
                sent[i] = if exact { a[i] } else { sent[i] + bottleneck };
            } else if v == sink {
                let j = u - 1 - m;
                recv[j] = if exact { b[j] } else { recv[j] + bottleneck };
            } else if u <= m {
                let (i, j) = (u - 1, v - 1 - m);
                *flow[i].entry(j).or_insert(0.0) += bottleneck;
                inflow[j].insert(i);
            } else {
                let (i, j) = (v - 1, u - 1 - m);
                let f = flow[i].get_mut(&j).unwrap();
                *f = if exact { 0.0 } else { (*f - bottleneck).max(0.0) };
                if *f == 0.0 {
                    flow[i].remove(&j);
                    inflow[j].remove(&i);
                }
            }
        }
    }
    flow
}

/// A 1-Lipschitz potential on the union support, tabulated as `(word, value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub potential: Vec<(Word, f64)>,
}

impl DualCertificate {
    pub fn value(&self, word: &[Symbol]) -> Option<f64> {
        self.potential
            .binary_search_by(|(w, _)| w.as_slice().cmp(word))
            .ok()
            .map(|i| self.potential[i].1)
    }

    /// Largest violation of `|f(x) − f(y)| ≤ d_n(x, y)` over all pairs.
    pub fn lipschitz_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (x, fx)) in self.potential.iter().enumerate() {
            for (y, fy) in &self.potential[i + 1..] {
                let d = mismatches(x, y) as f64 / x.len() as f64;
                worst = worst.max((fx - fy).abs() - d);
            }
        }
        worst
    }
}

/// Extracts MKR potentials from a plan and returns them with the duality gap
/// `cost − (∫g dν − ∫g dμ)`. A negative residual cycle means the plan is not
/// optimal, which is reported as a solver error.
pub fn dual_gap(plan: &TransportPlan) -> Result<(DualCertificate, f64)> {
    let xs = plan.source.support();
    let ys = plan.target.support();
    let (m, k) = (xs.len(), ys.len());
    let n = plan.source.dimension() as i64;
    let xi: BTreeMap<&Word, usize> = xs.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let yi: BTreeMap<&Word, usize> = ys.iter().enumerate().map(|(j, w)| (w, j)).collect();
    let cost: Vec<Vec<i64>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| mismatches(x, y) as i64).collect())
        .collect();
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); k];
    for e in &plan.plan {
        if e.mass > 0.0 {
            let (i, j) = match (xi.get(&e.from), yi.get(&e.to)) {
                (Some(&i), Some(&j)) => (i, j),
                _ => return Err(Error::InternalSolver("plan entry outside the marginal supports".into())),
            };
            back[j].push(i);
        }
    }

    // SPFA from a virtual root joined to every node at cost 0.
    let nodes = m + k;
    let mut phi = vec![0i64; nodes];
    let mut in_queue = vec![true; nodes];
    let mut count = vec![0usize; nodes];
    let mut queue: VecDeque<usize> = (0..nodes).collect();
    while let Some(u) = queue.pop_front() {
        in_queue[u] = false;
        let mut push = |v: usize, nd: i64, phi: &mut Vec<i64>, queue: &mut VecDeque<usize>| -> Result<()> {
            if nd < phi[v] {
                phi[v] = nd;
                count[v] += 1;
                if count[v] > nodes + 1 {
                    return Err(Error::InternalSolver(
                        "negative residual cycle: plan is not optimal".into(),
                    ));
                }
                if !in_queue[v] {
                    in_queue[v] = true;
                    queue.push_back(v);
                }
            }
            Ok(())
        };
        if u < m {
            for j in 0..k {
                push(m + j, phi[u] + cost[u][j], &mut phi, &mut queue)?;
            }
        } else {
            let j = u - m;
            for &i in &back[j] {
                push(i, phi[u] - cost[i][j], &mut phi, &mut queue)?;
            }
        }
    }
    let u = &phi[..m];
    let union: BTreeSet<&Word> = xs.iter().chain(ys.iter()).collect();
    let potential: Vec<(Word, f64)> = union
        .into_iter()
        .map(|z| {
            let g = (0..m).map(|i| u[i] + mismatches(&xs[i], z) as i64).min().unwrap_or(0);
            (z.clone(), g as f64 / n as f64)
        })
        .collect();
    let cert = DualCertificate { potential };
    let lookup = |w: &Word| cert.value(w).unwrap_or(0.0);
    let dual = plan.target.iter().map(|(w, p)| p * lookup(w)).sum::<f64>()
        - plan.source.iter().map(|(w, p)| p * lookup(w)).sum::<f64>();
    Ok((cert, plan.cost - dual))
}

/// Upper bound for `d̄(λ, μ × ν)` via the coupling that transports the first
/// `split` coordinates optimally and then each conditional of the rest.
/// The block weight is `α = split / n`.
pub fn product_coupling_bound(
    lambda: &DiscreteMeasure,
    split: usize,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    let n = lambda.dimension();
    if split == 0 || split >= n || mu.dimension() != split || nu.dimension() != n - split {
        return Err(Error::InvalidParameter(format!(
            "split {split} incompatible with dimensions {n}, {}, {}",
            mu.dimension(),
            nu.dimension()
        )));
    }
    let alpha = split as f64 / n as f64;
    let k_coords: Vec<usize> = (0..split).collect();
    let lambda_k = marginal(lambda, &k_coords)?;
    let mut conditionals: BTreeMap<Word, BTreeMap<Word, f64>> = BTreeMap::new();
    for (w, m) in lambda.iter() {
        *conditionals
            .entry(w[..split].to_vec())
            .or_default()
            .entry(w[split..].to_vec())
            .or_insert(0.0) += m;
    }
    let mut second = 0.0;
    for (x, cond) in conditionals {
        let px = lambda_k.mass(&x);
        let l = DiscreteMeasure::from_weights(nu.space(), cond)?;
        second += px * dbar(&l, nu)?;
    }
    Ok(alpha * dbar(&lambda_k, mu)? + (1.0 - alpha) * second)
}

/// Diameter of a word set under `d_n`: exact up to 10^4 pairs, otherwise the
/// fraction of coordinates on which the set is not constant.
pub fn diameter(words: &[Word]) -> f64 {
    if words.len() < 2 {
        return 0.0;
    }
    let n = words[0].len() as f64;
    let pairs = words.len() * (words.len() - 1) / 2;
    if pairs <= 10_000 {
        let mut best = 0;
        for (i, x) in words.iter().enumerate() {
            for y in &words[i + 1..] {
                best = best.max(mismatches(x, y));
            }
        }
        best as f64 / n
    } else {
        let varying = (0..words[0].len())
            .filter(|&c| words.iter().any(|w| w[c] != words[0][c]))
            .count();
        varying as f64 / n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximateTransport {
    /// Transport cost of the regularized plan; an upper bound on `d̄`.
    pub cost: f64,
    /// `cost − d̄ ≤ bias_bound = reg · ln(|supp μ|·|supp ν|)`.
    pub bias_bound: f64,
    pub regularization: f64,
    pub iterations: usize,
    pub marginal_error: f64,
    pub approximate: bool,
}

/// Entropically regularized transport (log-domain Sinkhorn), for supports
/// above the exact cap. Always labeled approximate.
pub fn sinkhorn_distance(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    reg: f64,
    max_iter: usize,
) -> Result<ApproximateTransport> {
    if mu.space() != nu.space() {
        return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", mu.space(), nu.space())));
    }
    if !(reg > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be positive, got {reg}"
        )));
    }
    let xs = mu.support();
    let ys = nu.support();
    let la: Vec<f64> = mu.masses().iter().map(|p| p.ln()).collect();
    let lb: Vec<f64> = nu.masses().iter().map(|p| p.ln()).collect();
    let n = mu.dimension() as f64;
    let c = |i: usize, j: usize| mismatches(&xs[i], &ys[j]) as f64 / n;
    let (m, k) = (xs.len(), ys.len());
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; k];
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
    };
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..m {
            f[i] = -reg * lse(&mut (0..k).map(|j| (g[j] - c(i, j)) / reg + lb[j]));
        }
        for j in 0..k {
            g[j] = -reg * lse(&mut (0..m).map(|i| (f[i] - c(i, j)) / reg + la[i]));
        }
        err = (0..m)
            .map(|i| {
                let row: f64 = (0..k)
                    .map(|j| ((f[i] + g[j] - c(i, j)) / reg + la[i] + lb[j]).exp())
                    .sum();
                (row - la[i].exp()).abs()
            })
            .sum();
        if err < 1e-10 {
            break;
        }
    }
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..k {
            cost += ((f[i] + g[j] - c(i, j)) / reg + la[i] + lb[j]).exp() * c(i, j);
        }
    }
    Ok(ApproximateTransport {
        cost,
        bias_bound: reg * ((m * k) as f64).ln(),
        regularization: reg,
        iterations,
        marginal_error: err,
        approximate: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ProductSpace;

    fn bits(n: usize) -> ProductSpace {
        ProductSpace::new(2, n).unwrap()
    }

    #[test]
    fn hamming_counts() {
        assert_eq!(hamming(&[0, 1, 1], &[0, 0, 1]).unwrap(), 1.0 / 3.0);
        assert_eq!(hamming(&[0, 1], &[1, 0]).unwrap(), 1.0);
        assert!(hamming(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn dirac_to_split_pair_is_half() {
        let mu = DiscreteMeasure::dirac(bits(2), vec![0, 0]).unwrap();
        let nu = DiscreteMeasure::uniform(bits(2), [vec![0, 1], vec![1, 0]]).unwrap();
        let plan = transport_distance(&mu, &nu).unwrap();
        assert_eq!(plan.cost, 0.5);
        let (cert, gap) = dual_gap(&plan).unwrap();
        assert!(gap.abs() < 1e-12);
        assert!(cert.lipschitz_violation() <= 1e-12);
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let mu = DiscreteMeasure::iid(&[0.2, 0.8], 3).unwrap();
        let plan = transport_distance(&mu, &mu).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert!(plan.marginal_error() < 1e-15);
        let (_, gap) = dual_gap(&plan).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn product_bound_at_product_is_zero() {
        let mu = DiscreteMeasure::iid(&[0.3, 0.7], 2).unwrap();
        let nu = DiscreteMeasure::iid(&[0.6, 0.4], 2).unwrap();
        let lambda = mu.product_with(&nu).unwrap();
        assert!(product_coupling_bound(&lambda, 2, &mu, &nu).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sinkhorn_upper_bounds_exact() {
        let mu = DiscreteMeasure::iid(&[0.3, 0.7], 3).unwrap();
        let nu = DiscreteMeasure::iid(&[0.6, 0.4], 3).unwrap();
        let exact = dbar(&mu, &nu).unwrap();
        let approx = sinkhorn_distance(&mu, &nu, 0.01, 5000).unwrap();
        assert!(approx.cost >= exact - 1e-9);
        assert!(approx.cost <= exact + approx.bias_bound + 1e-6);
    }

    #[test]
    fn diameter_exact_and_bounded() {
        assert_eq!(diameter(&[vec![0, 0, 0], vec![1, 1, 0]]), 2.0 / 3.0);
        assert_eq!(diameter(&[vec![0, 0]]), 0.0);
    }
}
