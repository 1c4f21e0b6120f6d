//! T- and L-inequalities: Gibbs tilts, refutation search, stability
//! transforms and extremality gaps.
//!
//! A measure `μ` on `A^n` satisfies `T(κ, r)` when `d̄(ν, μ) ≤ D(ν‖μ)/κ + r`
//! for every `ν`. Exact certification is out of reach in general, so this
//! module searches for refutations and re-verifies every witness it reports
//! with exact transport and divergence computations. A "not refuted" result
//! is relative to the search budget.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::kl_divergence;
use crate::measures::{condition, mix, DiscreteMeasure, MixtureRepresentation, Word};
use crate::transport::{dbar, dual_gap, mismatches, transport_distance, TransportPlan};

/// Scalars the stability arithmetic is generic over.
pub trait ParamScalar:
    Clone + Debug + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_i64(v: i64) -> Self;
}

impl ParamScalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TParams<T = f64> {
    pub kappa: T,
    pub r: T,
}

impl<T: ParamScalar> TParams<T> {
    pub fn new(kappa: T, r: T) -> Result<Self> {
        let zero = T::from_i64(0);
        if !(kappa > zero.clone() && r > zero) {
            return Err(Error::InvalidParameter(format!(
                "T-parameters need κ > 0 and r > 0, got {kappa:?}, {r:?}"
            )));
        }
        Ok(Self { kappa, r })
    }

    /// `T(self)` implies `T(other)`: larger κ and smaller r are stronger.
    pub fn at_least_as_strong_as(&self, other: &Self) -> bool {
        self.kappa >= other.kappa && self.r <= other.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LParams {
    pub kappa0: f64,
    pub kappa: f64,
    pub alpha: f64,
}

impl LParams {
    pub fn new(kappa0: f64, kappa: f64, alpha: f64) -> Result<Self> {
        if !(kappa0 >= 0.0 && kappa0 <= kappa && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "L-parameters need 0 ≤ κ0 ≤ κ and α > 0, got {kappa0}, {kappa}, {alpha}"
            )));
        }
        Ok(Self { kappa0, kappa, alpha })
    }
}

/// Transformations of a measure that preserve a T-inequality with changed parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StabilityTransform<T = f64> {
    /// `dν/dμ ≤ M`, given as `log M ≥ 0`.
    DensityBound { log_m: T },
    /// A coupling supported on `{d ≤ δ}`.
    SupCoupling { delta: T },
    /// Lifting from `A^S` with `a = 1 − |S|/n`.
    Lift { a: T },
}

impl StabilityTransform<f64> {
    pub fn density_bound(m: f64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::InvalidParameter(format!("density bound needs M ≥ 1, got {m}")));
        }
        Ok(Self::DensityBound { log_m: m.ln() })
    }
}

pub fn propagate_t_params<T: ParamScalar>(
    params: &TParams<T>,
    transform: &StabilityTransform<T>,
) -> Result<TParams<T>> {
    let zero = T::from_i64(0);
    let one = T::from_i64(1);
    let two = T::from_i64(2);
    let TParams { kappa, r } = params.clone();
    match transform.clone() {
        StabilityTransform::DensityBound { log_m } => {
            if !(log_m >= zero) {
                return Err(Error::InvalidParameter("density bound needs M ≥ 1".into()));
            }
            Ok(TParams {
                r: two.clone() * log_m / kappa.clone() + two * r,
                kappa,
            })
        }
        StabilityTransform::SupCoupling { delta } => {
            if !(delta >= zero) {
                return Err(Error::InvalidParameter("coupling radius needs δ ≥ 0".into()));
            }
            Ok(TParams {
                kappa,
                r: r + two * delta,
            })
        }
        StabilityTransform::Lift { a } => {
            if !(a >= zero && a < one) {
                return Err(Error::InvalidParameter("lift needs a ∈ [0, 1)".into()));
            }
            Ok(TParams {
                kappa: kappa / (one.clone() - a.clone()),
                r: (one - a.clone()) * r + a,
            })
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// `C_μ(f) = log ∫ e^f dμ`.
pub fn cumulant(mu: &DiscreteMeasure, f: &[f64]) -> f64 {
    log_sum_exp(mu.iter().zip(f).map(|((_, m), v)| m.ln() + v))
}

/// Tilt weights of `μ|e^{tf}` aligned with the support, without pruning.
fn tilt_weights(masses: &[f64], f: &[f64], t: f64) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = masses.iter().zip(f).map(|(m, v)| m.ln() + t * v).collect();
    let z = log_sum_exp(logs.iter().copied());
    (logs.iter().map(|l| (l - z).exp()).collect(), z)
}

/// The Gibbs measure `μ|e^{tf}`.
pub fn gibbs_tilt(mu: &DiscreteMeasure, f: &[f64], t: f64) -> Result<DiscreteMeasure> {
    if f.len() != mu.len() {
        return Err(Error::LengthMismatch(f.len(), mu.len()));
    }
    if f.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(Error::InvalidParameter("tilt function must be finite".into()));
    }
    let (w, _) = tilt_weights(&mu.masses(), f, t);
    DiscreteMeasure::from_weights(mu.space(), mu.support().into_iter().zip(w))
}

/// Pairwise normalized Hamming distances on a support, tabulated when small.
pub struct SupportMetric {
    words: Vec<Word>,
    n: f64,
    table: Option<Vec<f64>>,
}

impl SupportMetric {
    const TABLE_LIMIT: usize = 2048;

    pub fn new(words: Vec<Word>) -> Self {
        let n = words.first().map_or(1, Vec::len) as f64;
        let s = words.len();
        let table = (s <= Self::TABLE_LIMIT).then(|| {
            let mut t = vec![0.0; s * s];
            for i in 0..s {
                for j in i + 1..s {
                    let d = mismatches(&words[i], &words[j]) as f64 / n;
                    t[i * s + j] = d;
                    t[j * s + i] = d;
                }
            }
            t
        });
        Self { words, n, table }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[i * self.words.len() + j],
            None => mismatches(&self.words[i], &self.words[j]) as f64 / self.n,
        }
    }

    /// Largest violation of the 1-Lipschitz condition.
    pub fn lipschitz_violation(&self, f: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                worst = worst.max((f[i] - f[j]).abs() - self.d(i, j));
            }
        }
        worst
    }

    /// McShane averaging `(U + L)/2` with `U = inf_y f(y) + d(·,y)` and
    /// `L = sup_y f(y) − d(·,y)`, iterated to a fixed point.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let s = f.len();
        let mut cur = f.to_vec();
        for _ in 0..50 {
            let next: Vec<f64> = (0..s)
                .map(|i| {
                    let mut up = f64::INFINITY;
                    let mut lo = f64::NEG_INFINITY;
                    for j in 0..s {
                        let d = self.d(i, j);
                        up = up.min(cur[j] + d);
                        lo = lo.max(cur[j] - d);
                    }
                    0.5 * (up + lo)
                })
                .collect();
            let change = next.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            cur = next;
            if change <= 1e-10 {
                break;
            }
        }
        cur
    }
}

struct AscentOutcome {
    f: Vec<f64>,
    value: f64,
    steps: usize,
}

/// Projected gradient ascent with normalized steps and step halving.
fn ascend(
    metric: &SupportMetric,
    f0: Vec<f64>,
    max_steps: usize,
    stop_above: Option<f64>,
    objective: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> AscentOutcome {
    let mut f = metric.project(&f0);
    let (mut value, mut grad) = objective(&f);
    let mut eta = 0.25;
    let mut steps = 0;
    while steps < max_steps && eta > 1e-5 {
        if stop_above.is_some_and(|t| value > t) {
            break;
        }
        steps += 1;
        let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if norm < 1e-15 {
            break;
        }
        let trial: Vec<f64> = f.iter().zip(&grad).map(|(x, g)| x + eta * g / norm).collect();
        let trial = metric.project(&trial);
        let (v, g) = objective(&trial);
        if v > value + 1e-15 {
            f = trial;
            value = v;
            grad = g;
            eta = (eta * 1.5).min(1.0);
        } else {
            eta *= 0.5;
        }
    }
    AscentOutcome { f, value, steps }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutationBudget {
    pub restarts: usize,
    pub steps: usize,
    pub subsets: usize,
    pub seed: u64,
}

impl Default for RefutationBudget {
    fn default() -> Self {
        Self {
            restarts: 32,
            steps: 200,
            subsets: 4096,
            seed: 0,
        }
    }
}

/// A 1-Lipschitz function on the support of `μ` (support order) with its tilt parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzWitness {
    pub f: Vec<f64>,
    pub t: f64,
    pub violation_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "channel", rename_all = "snake_case")]
pub enum Witness {
    /// `ν = μ|e^{κf}` violates the inequality.
    Dual(LipschitzWitness),
    /// `ν = μ|U` violates the inequality.
    Primal {
        set: Vec<Word>,
        dbar: f64,
        kl: f64,
        margin: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefutationStatus {
    Refuted,
    NotRefutedWithinBudget,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetUsed {
    pub restarts: usize,
    pub gradient_steps: usize,
    pub subsets: usize,
    pub exhaustive_primal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutationResult {
    pub params: TParams,
    pub status: RefutationStatus,
    pub witness: Option<Witness>,
    pub budget_used: BudgetUsed,
}

impl RefutationResult {
    pub fn refuted(&self) -> bool {
        self.status == RefutationStatus::Refuted
    }
}

fn restart_start(
    mu: &DiscreteMeasure,
    support: &[Word],
    masses: &[f64],
    metric: &SupportMetric,
    index: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let anchor = WeightedIndex::new(masses).map(|w| w.sample(&mut rng)).unwrap_or(0);
    let dist: Vec<f64> = (0..support.len()).map(|j| metric.d(anchor, j)).collect();
    match index % 4 {
        0 => dist,
        1 => dist.into_iter().map(|d| -d).collect(),
        2 => {
            // negated transport potential from a conditioned ball towards μ
            let radius = rng.gen_range(0.0..0.5);
            let ball = condition(mu, |w| {
                mismatches(w, &support[anchor]) as f64 / w.len() as f64 <= radius
            });
            let potential = ball
                .ok()
                .and_then(|b| transport_distance(&b, mu).ok())
                .and_then(|p| dual_gap(&p).ok());
            match potential {
                Some((cert, _)) => support.iter().map(|w| -cert.value(w).unwrap_or(0.0)).collect(),
                None => dist.into_iter().map(|d| -d).collect(),
            }
        }
        _ => (0..support.len()).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

/// Exact margin `d̄(ν, μ) − D(ν‖μ)/κ − r`.
fn exact_margin(nu: &DiscreteMeasure, mu: &DiscreteMeasure, params: &TParams) -> Result<(f64, f64, f64)> {
    let d = dbar(nu, mu)?;
    let kl = kl_divergence(nu, mu)?;
    Ok((d, kl, d - kl / params.kappa - params.r))
}

fn combinations_within(s: usize, budget: usize) -> (Vec<Vec<usize>>, bool) {
    let exhaustive = s < 63 && (1u128 << s) - 2 <= budget as u128;
    let mut out = Vec::new();
    'sizes: for size in 1..s {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if out.len() >= budget {
                break 'sizes;
            }
            out.push(idx.clone());
            let mut i = size;
            loop {
                if i == 0 {
                    continue 'sizes;
                }
                i -= 1;
                if idx[i] < s - size + i {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    (out, exhaustive)
}

/// Searches for a violation of `T(κ, r)` through the dual (Lipschitz tilt)
/// channel and then the primal (conditioning set) channel.
pub fn refute_t(mu: &DiscreteMeasure, params: &TParams, budget: &RefutationBudget) -> Result<RefutationResult> {
    TParams::new(params.kappa, params.r)?;
    let mut used = BudgetUsed::default();
    let support = mu.support();
    let masses = mu.masses();
    let s = support.len();
    let not_refuted = |used| RefutationResult {
        params: *params,
        status: RefutationStatus::NotRefutedWithinBudget,
        witness: None,
        budget_used: used,
    };
    // diameter ≤ 1 gives T(κ, 1); a point mass has nothing to refute
    if s <= 1 || params.r >= 1.0 {
        return Ok(not_refuted(used));
    }
    let metric = SupportMetric::new(support.clone());
    let kappa = params.kappa;

    if budget.restarts > 0 {
        let objective = |f: &[f64]| {
            let (nu, z) = tilt_weights(&masses, f, kappa);
            let mean: f64 = masses.iter().zip(f).map(|(m, v)| m * v).sum();
            let grad = nu.iter().zip(&masses).map(|(a, b)| kappa * (a - b)).collect();
            (z - kappa * mean - kappa * params.r, grad)
        };
        let outcomes: Vec<AscentOutcome> = (0..budget.restarts)
            .into_par_iter()
            .map(|k| {
                let f0 = restart_start(mu, &support, &masses, &metric, k, budget.seed);
                ascend(&metric, f0, budget.steps, Some(1e-9), objective)
            })
            .collect();
        used.restarts = outcomes.len();
        used.gradient_steps = outcomes.iter().map(|o| o.steps).sum();
        let best = outcomes
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, o)| match acc {
                Some((_, v)) if v >= o.value => acc,
                _ => Some((i, o.value)),
            });
        if let Some((i, g)) = best {
            if g > 1e-12 {
                let f = &outcomes[i].f;
                let nu = gibbs_tilt(mu, f, kappa)?;
                let (_, _, margin) = exact_margin(&nu, mu, params)?;
                if margin > 1e-12 && metric.lipschitz_violation(f) <= 1e-10 {
                    return Ok(RefutationResult {
                        params: *params,
                        status: RefutationStatus::Refuted,
                        witness: Some(Witness::Dual(LipschitzWitness {
                            f: f.clone(),
                            t: kappa,
                            violation_margin: margin,
                        })),
                        budget_used: used,
                    });
                }
            }
        }
    }

    let (subsets, exhaustive) = combinations_within(s, budget.subsets);
    used.exhaustive_primal = exhaustive;
    let mean_distance: Vec<f64> = (0..s)
        .map(|i| masses.iter().enumerate().map(|(j, m)| m * metric.d(i, j)).sum())
        .collect();
    for idx in &subsets {
        used.subsets += 1;
        let mass: f64 = idx.iter().map(|&i| masses[i]).sum();
        let kl = -mass.ln();
        let threshold = kl / kappa + params.r;
        let d = if idx.len() == 1 {
            mean_distance[idx[0]]
        } else {
            // the independent coupling bounds d̄ from above
            let upper: f64 = idx.iter().map(|&i| masses[i] / mass * mean_distance[i]).sum();
            if upper - threshold <= 1e-12 {
                continue;
            }
            let set: std::collections::BTreeSet<&Word> = idx.iter().map(|&i| &support[i]).collect();
            let nu = condition(mu, |w| set.contains(&w.to_vec()))?;
            dbar(&nu, mu)?
        };
        let margin = d - threshold;
        if margin > 1e-12 {
            return Ok(RefutationResult {
                params: *params,
                status: RefutationStatus::Refuted,
                witness: Some(Witness::Primal {
                    set: idx.iter().map(|&i| support[i].clone()).collect(),
                    dbar: d,
                    kl,
                    margin,
                }),
                budget_used: used,
            });
        }
    }
    Ok(not_refuted(used))
}

/// Re-derives a refutation from its stored witness. True iff the witness is valid.
pub fn verify_refutation(mu: &DiscreteMeasure, result: &RefutationResult) -> Result<bool> {
    match &result.witness {
        None => Ok(false),
        Some(Witness::Dual(w)) => {
            let metric = SupportMetric::new(mu.support());
            if w.f.len() != mu.len() || metric.lipschitz_violation(&w.f) > 1e-10 {
                return Ok(false);
            }
            let nu = gibbs_tilt(mu, &w.f, w.t)?;
            Ok(exact_margin(&nu, mu, &result.params)?.2 > 0.0)
        }
        Some(Witness::Primal { set, .. }) => {
            let keep: std::collections::BTreeSet<&Word> = set.iter().collect();
            let nu = match condition(mu, |w| keep.contains(&w.to_vec())) {
                Ok(nu) => nu,
                Err(Error::NullReweighting) => return Ok(false),
                Err(e) => return Err(e),
            };
            Ok(exact_margin(&nu, mu, &result.params)?.2 > 0.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LSearchBudget {
    pub grid: usize,
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for LSearchBudget {
    fn default() -> Self {
        Self {
            grid: 24,
            restarts: 8,
            steps: 100,
            seed: 0,
        }
    }
}

/// `D(μ|e^{−tf} ‖ μ)` for `f` aligned with the support.
pub fn tilt_divergence(mu: &DiscreteMeasure, f: &[f64], t: f64) -> f64 {
    let masses = mu.masses();
    let (nu, z) = tilt_weights(&masses, f, -t);
    let mean: f64 = nu.iter().zip(f).map(|(a, b)| a * b).sum();
    (-t * mean - z).max(0.0)
}

/// Log-spaced grid over `[κ0, κ]`.
pub fn t_grid(params: &LParams, points: usize) -> Vec<f64> {
    let lo = params.kappa0.max(params.kappa * 1e-3);
    let hi = params.kappa;
    if points <= 1 || hi <= lo {
        return vec![hi];
    }
    (0..points)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// L-search over one support, evaluated one grid point at a time.
pub struct LSearch<'a> {
    mu: &'a DiscreteMeasure,
    support: Vec<Word>,
    masses: Vec<f64>,
    metric: SupportMetric,
    params: LParams,
    budget: LSearchBudget,
    grid: Vec<f64>,
}

impl<'a> LSearch<'a> {
    pub fn new(mu: &'a DiscreteMeasure, params: &LParams, budget: &LSearchBudget) -> Self {
        let support = mu.support();
        Self {
            mu,
            masses: mu.masses(),
            metric: SupportMetric::new(support.clone()),
            support,
            params: *params,
            budget: budget.clone(),
            grid: t_grid(params, budget.grid),
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Violations found at `t = grid[g]`, largest margin first. Each `f` is
    /// 1-Lipschitz with minimum 0 and the margin `D(μ|e^{−tf}‖μ) − αt²` is exact.
    pub fn at(&self, g: usize) -> Vec<LipschitzWitness> {
        if self.support.len() <= 1 {
            return Vec::new();
        }
        let t = self.grid[g];
        let (masses, alpha) = (&self.masses, self.params.alpha);
        let mut found: Vec<(usize, LipschitzWitness)> = (0..self.budget.restarts)
            .into_par_iter()
            .filter_map(|k| {
                let seed = self.budget.seed.wrapping_add(g as u64 * 7919);
                let f0 = restart_start(self.mu, &self.support, masses, &self.metric, k, seed);
                let objective = |f: &[f64]| {
                    let (nu, z) = tilt_weights(masses, f, -t);
                    let mean: f64 = nu.iter().zip(f).map(|(a, b)| a * b).sum();
                    let value = -t * mean - z - alpha * t * t;
                    let grad = nu.iter().zip(f).map(|(p, v)| t * t * p * (v - mean)).collect();
                    (value, grad)
                };
                let out = ascend(&self.metric, f0, self.budget.steps, None, objective);
                let lo = out.f.iter().copied().fold(f64::INFINITY, f64::min);
                let f: Vec<f64> = out.f.iter().map(|v| v - lo).collect();
                let nu = gibbs_tilt(self.mu, &f, -t).ok()?;
                let margin = kl_divergence(&nu, self.mu).ok()? - alpha * t * t;
                (margin > 1e-12 && self.metric.lipschitz_violation(&f) <= 1e-10).then_some((
                    k,
                    LipschitzWitness {
                        f,
                        t,
                        violation_margin: margin,
                    },
                ))
            })
            .collect();
        found.sort_by(|a, b| {
            b.1.violation_margin
                .total_cmp(&a.1.violation_margin)
                .then(a.0.cmp(&b.0))
        });
        found.into_iter().map(|(_, w)| w).collect()
    }
}

/// All violations of the L-inequality found over the whole grid, largest margin first.
pub fn l_violation_candidates(mu: &DiscreteMeasure, params: &LParams, budget: &LSearchBudget) -> Vec<LipschitzWitness> {
    let search = LSearch::new(mu, params, budget);
    let mut found: Vec<(usize, usize, LipschitzWitness)> = (0..search.grid().len())
        .flat_map(|g| search.at(g).into_iter().enumerate().map(move |(k, w)| (g, k, w)))
        .collect();
    found.sort_by(|a, b| {
        b.2.violation_margin
            .total_cmp(&a.2.violation_margin)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    found.into_iter().map(|(_, _, w)| w).collect()
}

/// The largest-margin L-violation found, if any.
pub fn find_l_violation(mu: &DiscreteMeasure, params: &LParams, budget: &LSearchBudget) -> Option<LipschitzWitness> {
    l_violation_candidates(mu, params, budget).into_iter().next()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentratedSubset {
    pub set: Vec<Word>,
    /// `ν(U)`.
    pub mass: f64,
    pub params: TParams,
    pub dbar: f64,
}

/// Given `μ` satisfying `T(κ, r)` and `ν` with `d̄(ν, μ) ≤ δ²`, finds `U` with
/// `ν(U) ≥ 1 − 4δ` such that `ν|U` satisfies `T(κ, (8δ + 2 log 4)/κ + 4r + 4δ)`.
pub fn concentrate_subset(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    params: &TParams,
    delta: f64,
) -> Result<ConcentratedSubset> {
    if !(0.0..0.125).contains(&delta) {
        return Err(Error::InvalidParameter(format!("δ must lie in [0, 1/8), got {delta}")));
    }
    let plan = transport_distance(mu, nu)?;
    if plan.cost > delta * delta + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "d̄(ν, μ) = {} exceeds δ² = {}",
            plan.cost,
            delta * delta
        )));
    }
    let n = mu.dimension() as f64;
    let mut near: BTreeMap<&Word, f64> = BTreeMap::new();
    let mut total = 0.0;
    for e in &plan.plan {
        if mismatches(&e.from, &e.to) as f64 / n <= delta + 1e-12 {
            *near.entry(&e.to).or_insert(0.0) += e.mass;
            total += e.mass;
        }
    }
    let threshold = 0.5 + 2.0 * delta;
    let set: Vec<Word> = nu
        .iter()
        .filter(|(y, m)| near.get(y).copied().unwrap_or(0.0) / total / m >= threshold - 1e-12)
        .map(|(y, _)| y.clone())
        .collect();
    let mass = nu.measure_of(&set);
    Ok(ConcentratedSubset {
        set,
        mass,
        params: TParams {
            kappa: params.kappa,
            r: (8.0 * delta + 2.0 * 4f64.ln()) / params.kappa + 4.0 * params.r + 4.0 * delta,
        },
        dbar: plan.cost,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityReport {
    /// `Σ p_ω d̄(μ_ω, μ)`.
    pub lhs: f64,
    /// `Σ p_ω D(μ_ω ‖ μ)`.
    pub rhs_kl: f64,
    /// `lhs − rhs_kl/κ`: the smallest `r` for which this representation is `(κ, r)`-extremal.
    pub r_required: f64,
    pub kappa: f64,
    pub per_component: Vec<(f64, f64)>,
}

pub fn extremality_gap(rep: &MixtureRepresentation, kappa: f64) -> Result<ExtremalityReport> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("κ must be positive, got {kappa}")));
    }
    let mu = mix(rep)?;
    let per_component: Vec<(f64, f64)> = rep
        .components
        .iter()
        .map(|c| Ok((dbar(c, &mu)?, kl_divergence(c, &mu)?)))
        .collect::<Result<_>>()?;
    let lhs: f64 = rep.weights.iter().zip(&per_component).map(|(p, (d, _))| p * d).sum();
    let rhs_kl: f64 = rep.weights.iter().zip(&per_component).map(|(p, (_, k))| p * k).sum();
    Ok(ExtremalityReport {
        lhs,
        rhs_kl,
        r_required: lhs - rhs_kl / kappa,
        kappa,
        per_component,
    })
}

/// Pulls a representation of `μ' = plan.target` back along the coupling to a
/// representation of `μ = plan.source`:
/// `μ_ω(x) = Σ_{x'} plan(x, x')/μ'(x') · μ'_ω(x')`.
pub fn transport_representation(rep: &MixtureRepresentation, plan: &TransportPlan) -> Result<MixtureRepresentation> {
    let target = &plan.target;
    let components = rep
        .components
        .iter()
        .map(|c| {
            let weights = plan.plan.iter().map(|e| {
                let q = target.mass(&e.to);
                let w = if q > 0.0 { e.mass / q * c.mass(&e.to) } else { 0.0 };
                (e.from.clone(), w)
            });
            DiscreteMeasure::from_weights(plan.source.space(), weights.collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    MixtureRepresentation::new(rep.weights.clone(), components)
}

/// Mass carried by components whose required `r` exceeds `threshold`.
pub fn bad_set_mass(weights: &[f64], r_required: &[f64], threshold: f64) -> f64 {
    weights
        .iter()
        .zip(r_required)
        .filter(|(_, r)| **r > threshold)
        .map(|(w, _)| w)
        .sum()
}
