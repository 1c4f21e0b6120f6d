//! Decomposition pipelines: DTC-decrement splitting, the mixture builder,
//! sampling coarsening, and the set partitioner.
//!
//! Every pipeline reports what it achieved against the configured constants
//! instead of asserting the existential bounds, and every component carries a
//! budgeted refutation attempt at the parameters the construction guarantees.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::{
    concentrate_subset, propagate_t_params, refute_t, LParams, LSearch, LSearchBudget, LipschitzWitness,
    RefutationBudget, RefutationResult, StabilityTransform, TParams,
};
use crate::error::{Error, Result};
use crate::information::{
    dtc_decrement, dual_total_correlation, dual_total_correlation_within, fuzzy_mutual_information, kl_divergence,
    marginal_entropy, total_correlation, trim_coordinates, Decrement,
};
use crate::measures::{
    condition_on, marginal, reweight, DiscreteMeasure, FuzzyPartition, MixtureRepresentation, ProductSpace, Word,
};
use crate::transport::{dbar, exact_support_cap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub r: f64,
    /// Components are tested against `T(rn/kappa_divisor, r)` in the recursion.
    pub kappa_divisor: f64,
    /// L-search uses `α = l_constant/n`.
    pub l_constant: f64,
    /// The mixture builder splits at `r·split_r_fraction`; `1/3` makes the
    /// lifted certificates land at `r`, larger values land at `O(r)`.
    pub split_r_fraction: f64,
    /// Overrides `δ = min(r²/42, 1/18)` in the carving construction.
    pub delta: Option<f64>,
    pub c: f64,
    pub c_b: f64,
    pub c_c: f64,
    /// Overrides the case-1 atom coefficient `161 c_B/δ²`.
    pub atom_coefficient: Option<f64>,
    pub max_iters: usize,
    pub max_cells: usize,
    pub sample_cap: usize,
    pub carve_retries: usize,
    pub max_split_candidates: usize,
    pub refutation: RefutationBudget,
    pub l_search: LSearchBudget,
    pub seed: u64,
}

impl PipelineConfig {
    /// The constants as stated: `T(rn/200, r)`, `α = 100/n`, `c = 50`, `c_B = c_C = 10`.
    pub fn asymptotic(epsilon: f64, r: f64) -> Self {
        Self {
            epsilon,
            r,
            kappa_divisor: 200.0,
            l_constant: 100.0,
            split_r_fraction: 1.0 / 3.0,
            delta: None,
            c: 50.0,
            c_b: 10.0,
            c_c: 10.0,
            atom_coefficient: None,
            max_iters: 64,
            max_cells: 4096,
            sample_cap: 1 << 16,
            carve_retries: 16,
            max_split_candidates: 16,
            refutation: RefutationBudget::default(),
            l_search: LSearchBudget::default(),
            seed: 0,
        }
    }

    /// Constants at which the constructions are non-vacuous for `n ≤ 12`:
    /// `T(4rn, r)` (half the Marton constant), `α = 1/(8n)` as Herbst
    /// requires for that κ, and a carving calibration under which the
    /// level-set slicing route is reachable.
    pub fn desk(epsilon: f64, r: f64) -> Self {
        Self {
            kappa_divisor: 0.25,
            l_constant: 0.125,
            split_r_fraction: 1.0,
            delta: Some(0.25),
            atom_coefficient: Some(0.5),
            ..Self::asymptotic(epsilon, r)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {v}")))
            }
        };
        unit("epsilon", self.epsilon)?;
        unit("r", self.r)?;
        if !(self.kappa_divisor > 0.0 && self.l_constant > 0.0) {
            return Err(Error::InvalidParameter(
                "kappa_divisor and l_constant must be positive".into(),
            ));
        }
        if !(self.split_r_fraction > 0.0 && self.r * self.split_r_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "split_r_fraction must be positive with r·fraction < 1".into(),
            ));
        }
        if self.max_iters == 0 || self.max_cells == 0 || self.sample_cap == 0 || self.carve_retries == 0 {
            return Err(Error::InvalidParameter("caps must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            unit("delta", d)?;
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| (self.r * self.r / 42.0).min(1.0 / 18.0))
    }

    pub fn atom_coefficient(&self) -> f64 {
        let d = self.delta();
        self.atom_coefficient.unwrap_or(161.0 * self.c_b / (d * d))
    }

    /// `T(rn/kappa_divisor, r)`.
    pub fn recursion_params(&self, r: f64, n: usize) -> TParams {
        TParams {
            kappa: r * n as f64 / self.kappa_divisor,
            r,
        }
    }

    fn budget(&self, a: u64, b: u64) -> RefutationBudget {
        RefutationBudget {
            seed: mix_seed(self.seed, a, b),
            ..self.refutation.clone()
        }
    }
}

pub const MAX_ALPHABET: usize = 8;
pub const MAX_DIMENSION: usize = 12;

/// Pipelines run exact transport throughout, so inputs must fit the desk envelope:
/// `|A| ≤ 8`, `n ≤ 12` and support within [`exact_support_cap`].
pub fn check_envelope(mu: &DiscreteMeasure) -> Result<()> {
    let cap = exact_support_cap();
    let over = |what: &str, size: usize, cap: usize| Error::CapExceeded {
        what: what.into(),
        size,
        cap,
        hint: "pipelines are limited to the exact-transport envelope".into(),
    };
    if mu.alphabet_size() > MAX_ALPHABET {
        return Err(over("alphabet size", mu.alphabet_size(), MAX_ALPHABET));
    }
    if mu.dimension() > MAX_DIMENSION {
        return Err(over("dimension", mu.dimension(), MAX_DIMENSION));
    }
    if mu.len() > cap {
        return Err(over("support size", mu.len(), cap));
    }
    Ok(())
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    base.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

/// `r² n⁻¹ e^{−n}`, the guaranteed mutual information of a decrement split.
pub fn decrement_lower_bound(r: f64, n: usize) -> f64 {
    r * r * (-(n as f64)).exp() / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecrementSplit {
    /// `(ρ₁, ρ₂) = (½e^{−tf}, 1 − ½e^{−tf})` on the support of the split measure.
    pub partition: FuzzyPartition,
    pub witness: LipschitzWitness,
    pub mutual_information: f64,
    pub decrement: Decrement,
    pub lower_bound: f64,
}

fn split_from_witness(mu: &DiscreteMeasure, w: &LipschitzWitness, lower_bound: f64) -> Result<Option<DecrementSplit>> {
    let rho1: Vec<f64> = w.f.iter().map(|v| 0.5 * (-w.t * v).exp()).collect();
    let rho2: Vec<f64> = rho1.iter().map(|v| 1.0 - v).collect();
    let fp = FuzzyPartition::new(mu, vec![rho1, rho2])?;
    let i = fuzzy_mutual_information(mu, &fp)?;
    let dec = dtc_decrement(mu, &fp)?;
    if dec.lhs >= 0.5 * i - 1e-8 && i >= lower_bound - 1e-12 {
        Ok(Some(DecrementSplit {
            partition: fp,
            witness: w.clone(),
            mutual_information: i,
            decrement: dec,
            lower_bound,
        }))
    } else {
        Ok(None)
    }
}

/// Walks the L-search grid from the largest `t` down and returns, at the first
/// `t` that yields one, the split with the largest `I` whose measured DTC
/// decrement is at least `½I` and whose `I` meets the lower bound.
fn find_split(mu: &DiscreteMeasure, r: f64, cfg: &PipelineConfig, seed: u64) -> Result<Option<DecrementSplit>> {
    let n = mu.dimension();
    let params = cfg.recursion_params(r, n);
    let Ok(lp) = LParams::new(r / 2.0, params.kappa, cfg.l_constant / n as f64) else {
        return Ok(None);
    };
    let budget = LSearchBudget {
        seed,
        ..cfg.l_search.clone()
    };
    let search = LSearch::new(mu, &lp, &budget);
    let bound = decrement_lower_bound(r, n);
    for g in (0..search.grid().len()).rev() {
        let mut best: Option<DecrementSplit> = None;
        for w in search.at(g).iter().take(cfg.max_split_candidates) {
            if let Some(split) = split_from_witness(mu, w, bound)? {
                if best
                    .as_ref()
                    .is_none_or(|b| split.mutual_information > b.mutual_information)
                {
                    best = Some(split);
                }
            }
        }
        if best.is_some() {
            return Ok(best);
        }
    }
    Ok(None)
}

/// One decrement step: if `μ` is refuted at `T(rn/kappa_divisor, r)`, turn an
/// L-violation into a binary fuzzy partition with a verified DTC decrement.
pub fn decrement_step(mu: &DiscreteMeasure, r: f64, cfg: &PipelineConfig) -> Result<Option<DecrementSplit>> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
    }
    if r >= 1.0 {
        return Ok(None);
    }
    let params = cfg.recursion_params(r, mu.dimension());
    if !refute_t(mu, &params, &cfg.budget(0, 0))?.refuted() {
        return Ok(None);
    }
    find_split(mu, r, cfg, cfg.seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub cell: usize,
    pub weight: f64,
    pub t: f64,
    pub l_margin: f64,
    pub mutual_information: f64,
    pub decrement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditStep {
    pub iteration: usize,
    pub cells: usize,
    pub refuted_mass: f64,
    pub mutual_information: f64,
    pub delta_i: f64,
    pub average_dtc: f64,
    pub splits: Vec<SplitRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionOutcome {
    /// Cell 0 collects every component still refuted at the end.
    pub partition: FuzzyPartition,
    /// Refutation attempts for cells `1..`; `None` for the bad cell.
    pub certificates: Vec<Option<RefutationResult>>,
    pub params: TParams,
    pub audit: Vec<AuditStep>,
    /// `I` of the final partition before the refuted cells are merged.
    pub mutual_information_unmerged: f64,
    pub mutual_information: f64,
    pub final_average_dtc: f64,
    pub truncated: bool,
    pub stalled: bool,
}

struct CellEval {
    weight: f64,
    dtc: f64,
    refutation: RefutationResult,
    split: Option<DecrementSplit>,
    support: Vec<Word>,
}

fn evaluate_cell(
    mu: &DiscreteMeasure,
    rho: &[f64],
    r: f64,
    cfg: &PipelineConfig,
    params: &TParams,
    iteration: usize,
    cell: usize,
    want_split: bool,
) -> Result<CellEval> {
    let comp = reweight(mu, rho)?;
    let weight = mu.integrate(rho);
    let seed = mix_seed(cfg.seed, iteration as u64 + 1, cell as u64);
    let refutation = refute_t(
        &comp,
        params,
        &RefutationBudget {
            seed,
            ..cfg.refutation.clone()
        },
    )?;
    let split = if want_split && refutation.refuted() {
        find_split(&comp, r, cfg, seed)?
    } else {
        None
    };
    Ok(CellEval {
        weight,
        dtc: dual_total_correlation(&comp),
        refutation,
        split,
        support: comp.support(),
    })
}

/// Refines `μ` by decrement splits until the refuted mass drops below `ε`,
/// then merges every still-refuted cell into cell 0.
pub fn decrement_recursion(mu: &DiscreteMeasure, cfg: &PipelineConfig) -> Result<RecursionOutcome> {
    cfg.validate()?;
    check_envelope(mu)?;
    recursion_inner(mu, cfg.r, cfg.epsilon, cfg)
}

fn recursion_inner(mu: &DiscreteMeasure, r: f64, epsilon: f64, cfg: &PipelineConfig) -> Result<RecursionOutcome> {
    let params = cfg.recursion_params(r, mu.dimension());
    let s = mu.len();
    let mut cells: Vec<Vec<f64>> = vec![vec![1.0; s]];
    // a cell keeps its evaluation until it is split
    let mut cached: Vec<Option<CellEval>> = vec![None];
    let mut audit: Vec<AuditStep> = Vec::new();
    let mut truncated = false;
    let mut stalled = false;
    let mut last_i = 0.0;
    let mut iteration = 0;
    let evals = loop {
        let fresh: Vec<(usize, CellEval)> = (0..cells.len())
            .filter(|&j| cached[j].is_none())
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|j| Ok((j, evaluate_cell(mu, &cells[j], r, cfg, &params, iteration, j, true)?)))
            .collect::<Result<_>>()?;
        for (j, e) in fresh {
            cached[j] = Some(e);
        }
        let evals: Vec<CellEval> = cached.drain(..).map(|e| e.expect("every cell evaluated")).collect();
        let refuted_mass: f64 = evals.iter().filter(|e| e.refutation.refuted()).map(|e| e.weight).sum();
        let fp = FuzzyPartition {
            space: mu.space(),
            densities: cells.clone(),
        };
        let i_now = fuzzy_mutual_information(mu, &fp)?;
        let average_dtc: f64 = evals.iter().map(|e| e.weight * e.dtc).sum();
        let splits: Vec<SplitRecord> = evals
            .iter()
            .enumerate()
            .filter_map(|(j, e)| {
                e.split.as_ref().map(|sp| SplitRecord {
                    cell: j,
                    weight: e.weight,
                    t: sp.witness.t,
                    l_margin: sp.witness.violation_margin,
                    mutual_information: sp.mutual_information,
                    decrement: sp.decrement.lhs,
                })
            })
            .collect();
        let any_split = !splits.is_empty();
        audit.push(AuditStep {
            iteration,
            cells: cells.len(),
            refuted_mass,
            mutual_information: i_now,
            delta_i: i_now - last_i,
            average_dtc,
            splits,
        });
        last_i = i_now;
        if refuted_mass < epsilon {
            break evals;
        }
        if !any_split {
            stalled = true;
            break evals;
        }
        let new_count = cells.len() + evals.iter().filter(|e| e.split.is_some()).count();
        if iteration + 1 >= cfg.max_iters || new_count > cfg.max_cells {
            truncated = true;
            break evals;
        }
        let mut next = Vec::with_capacity(new_count);
        for (rho, e) in cells.iter().zip(evals) {
            match &e.split {
                None => {
                    next.push(rho.clone());
                    cached.push(Some(e));
                }
                Some(sp) => {
                    let index: BTreeMap<&Word, usize> = e.support.iter().enumerate().map(|(i, w)| (w, i)).collect();
                    let mut a = vec![0.0; s];
                    let mut b = vec![0.0; s];
                    for (x, (w, _)) in mu.iter().enumerate() {
                        let r1 = index.get(w).map_or(0.5, |&i| sp.partition.densities[0][i]);
                        a[x] = rho[x] * r1;
                        b[x] = rho[x] - a[x];
                    }
                    next.push(a);
                    next.push(b);
                    cached.push(None);
                    cached.push(None);
                }
            }
        }
        cells = next;
        iteration += 1;
    };
    let final_average_dtc = evals.iter().map(|e| e.weight * e.dtc).sum();
    let mut bad = vec![0.0; s];
    let mut densities = Vec::new();
    let mut certificates = vec![None];
    for (rho, e) in cells.into_iter().zip(evals) {
        if e.refutation.refuted() {
            for (b, v) in bad.iter_mut().zip(&rho) {
                *b += v;
            }
        } else {
            densities.push(rho);
            certificates.push(Some(e.refutation));
        }
    }
    densities.insert(0, bad);
    let partition = FuzzyPartition {
        space: mu.space(),
        densities,
    };
    let mutual_information = fuzzy_mutual_information(mu, &partition)?;
    Ok(RecursionOutcome {
        partition,
        certificates,
        params,
        audit,
        mutual_information_unmerged: last_i,
        mutual_information,
        final_average_dtc,
        truncated,
        stalled,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledMixture {
    /// Drawn component indices, after replacing draws outside the good set.
    pub indices: Vec<usize>,
    pub m: usize,
    /// `‖(1/m)Σ μ_{ω_j} − μ‖`.
    pub l1_error: f64,
    pub mutual_information: f64,
    /// `log` of the truncation level `e^{8(I+1)/ε}`.
    pub log_truncation_level: f64,
    /// `∫ (F − F′)⁺ d(P × μ)`.
    pub truncated_mass: f64,
    /// `log m*` with `m* = ⌈16 ε⁻² e^{16(I+1)/ε}⌉`.
    pub log_nominal_cap: f64,
    pub attempts: usize,
}

impl SampledMixture {
    pub fn counts(&self) -> BTreeMap<usize, usize> {
        let mut c = BTreeMap::new();
        for &i in &self.indices {
            *c.entry(i).or_insert(0) += 1;
        }
        c
    }
}

/// `log m*` for the literal sample size of the sampling argument.
pub fn log_nominal_sample_cap(epsilon: f64, information: f64) -> f64 {
    16f64.ln() - 2.0 * epsilon.ln() + 16.0 * (information + 1.0) / epsilon
}

/// Coarsens a mixture to an empirical average of `m` sampled components that
/// is within `3ε` of `μ` in total variation norm, doubling `m` from 64.
pub fn sample_coarsen(
    mu: &DiscreteMeasure,
    rep: &MixtureRepresentation,
    good_set: &[usize],
    epsilon: f64,
    seed: u64,
    cap: usize,
) -> Result<SampledMixture> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "sampling needs ε in (0, ½), got {epsilon}"
        )));
    }
    let good: BTreeSet<usize> = good_set.iter().copied().filter(|&i| i < rep.len()).collect();
    let good_mass: f64 = good.iter().map(|&i| rep.weights[i]).sum();
    if !(good_mass > 1.0 - epsilon / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "good set carries {good_mass}, need more than 1 − ε/2"
        )));
    }
    let divergences: Vec<f64> = rep
        .components
        .iter()
        .map(|c| kl_divergence(c, mu))
        .collect::<Result<_>>()?;
    let information: f64 = rep.weights.iter().zip(&divergences).map(|(p, d)| p * d).sum();
    let log_level = 8.0 * (information + 1.0) / epsilon;
    let level = log_level.exp();
    let truncated_mass: f64 = rep
        .weights
        .iter()
        .zip(&rep.components)
        .map(|(p, c)| {
            p * c
                .iter()
                .map(|(w, q)| {
                    let m = mu.mass(w);
                    (q - m * level).max(0.0)
                })
                .sum::<f64>()
        })
        .sum();
    let log_cap = log_nominal_sample_cap(epsilon, information);
    let cap = if log_cap < (usize::MAX as f64).ln() {
        cap.min(log_cap.exp().ceil() as usize)
    } else {
        cap
    };

    let mix_of = |indices: &[usize]| -> Result<f64> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in indices {
            *counts.entry(i).or_insert(0) += 1;
        }
        let m = indices.len() as f64;
        let mut acc: BTreeMap<&Word, f64> = BTreeMap::new();
        for (&i, &k) in &counts {
            for (w, q) in rep.components[i].iter() {
                *acc.entry(w).or_insert(0.0) += k as f64 / m * q;
            }
        }
        let mut l1: f64 = mu.iter().filter(|(w, _)| !acc.contains_key(w)).map(|(_, q)| q).sum();
        l1 += acc.iter().map(|(w, q)| (q - mu.mass(w)).abs()).sum::<f64>();
        Ok(l1)
    };

    let good_list: Vec<usize> = good.iter().copied().collect();
    let all = WeightedIndex::new(&rep.weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let restricted = WeightedIndex::new(good_list.iter().map(|&i| rep.weights[i]))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = if rep.len() == 1 { 1 } else { 64.min(cap) };
    let mut best = f64::INFINITY;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let mut indices: Vec<usize> = (0..m).map(|_| all.sample(&mut rng)).collect();
        for i in indices.iter_mut() {
            if !good.contains(i) {
                *i = good_list[restricted.sample(&mut rng)];
            }
        }
        indices.sort_unstable();
        let l1 = mix_of(&indices)?;
        best = best.min(l1);
        if l1 < 3.0 * epsilon {
            return Ok(SampledMixture {
                indices,
                m,
                l1_error: l1,
                mutual_information: information,
                log_truncation_level: log_level,
                truncated_mass,
                log_nominal_cap: log_cap,
                attempts,
            });
        }
        if m >= cap {
            return Err(Error::SamplingExhausted { best_tv: best, m });
        }
        m = (m * 2).min(cap);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionKind {
    Mixture,
    Partition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarveCase {
    HeavyAtom,
    SmallTc,
    LevelSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    /// `None` only for an empty bad cell.
    pub measure: Option<DiscreteMeasure>,
    /// Density on the support of the input (mixtures).
    pub density: Option<Vec<f64>>,
    /// Cell of the partition (partitions).
    pub set: Option<Vec<Word>>,
    pub params: Option<TParams>,
    pub certificate: Option<RefutationResult>,
    pub case: Option<CarveCase>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub truncated: bool,
    pub stalled: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Number of components including the bad one.
    pub m: usize,
    pub tc: f64,
    pub dtc: f64,
    pub kept_coordinates: Option<Vec<usize>>,
    pub dtc_trimmed: Option<f64>,
    pub sample_size: Option<usize>,
    /// `log(c) + c·TC(μ)`, the log of the configured bound on `m`.
    pub log_m_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub kind: DecompositionKind,
    pub space: ProductSpace,
    pub epsilon: f64,
    pub r: f64,
    pub components: Vec<Component>,
    pub bad_index: usize,
    pub bad_mass: f64,
    /// `‖Σ p_j μ_j − μ‖` for mixtures; uncovered mass for partitions.
    pub reconstruction_error: f64,
    pub flags: Flags,
    pub stats: Stats,
    pub recursion: Option<RecursionOutcome>,
    pub sampling: Option<SampledMixture>,
    pub carves: Vec<CarveReport>,
}

impl DecompositionResult {
    pub fn representation(&self) -> Result<MixtureRepresentation> {
        let (w, c): (Vec<f64>, Vec<DiscreteMeasure>) = self
            .components
            .iter()
            .filter_map(|c| c.measure.clone().map(|m| (c.weight, m)))
            .unzip();
        let total: f64 = w.iter().sum();
        MixtureRepresentation::new(w.iter().map(|x| x / total).collect(), c)
    }
}

fn mixture_error(mu: &DiscreteMeasure, components: &[Component]) -> f64 {
    let mut acc: BTreeMap<&Word, f64> = BTreeMap::new();
    for c in components {
        if let Some(m) = &c.measure {
            for (w, q) in m.iter() {
                *acc.entry(w).or_insert(0.0) += c.weight * q;
            }
        }
    }
    let missing: f64 = mu.iter().filter(|(w, _)| !acc.contains_key(w)).map(|(_, q)| q).sum();
    missing + acc.iter().map(|(w, q)| (q - mu.mass(w)).abs()).sum::<f64>()
}

/// Mixture decomposition: trim coordinates, refine by decrement splits,
/// coarsen by sampling, repair by the Jordan decomposition, then lift.
///
/// Inside, the sampling stage runs at `(ε/4)²` and the recursion at `(ε/4)²/2`
/// so that the bad component stays below `ε`.
pub fn theorem_b(mu: &DiscreteMeasure, cfg: &PipelineConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    check_envelope(mu)?;
    let n = mu.dimension();
    let tc = total_correlation(mu).max(0.0);
    let dtc = dual_total_correlation(mu).max(0.0);
    let kept = trim_coordinates(mu, cfg.r)?;
    let mu_s = marginal(mu, &kept)?;
    let dtc_s = dual_total_correlation_within(mu, &kept).max(0.0);
    let r_in = cfg.r * cfg.split_r_fraction;
    let eps_in = cfg.epsilon / 4.0;
    let mut flags = Flags::default();

    let rec = recursion_inner(&mu_s, r_in, eps_in * eps_in / 2.0, cfg)?;
    flags.truncated = rec.truncated;
    flags.stalled = rec.stalled;
    let rec_rep_weights = rec.partition.weights(&mu_s);
    let comps: Vec<Option<DiscreteMeasure>> = rec
        .partition
        .densities
        .iter()
        .zip(&rec_rep_weights)
        .map(|(rho, &p)| {
            if p > 0.0 {
                reweight(&mu_s, rho).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    // Densities on A^S (support of μ_S) for the components before lifting.
    let s_len = mu_s.len();
    let mut good_densities: Vec<Vec<f64>> = Vec::new();
    let mut sampling = None;
    let eps_sample = eps_in * eps_in;
    let good_set: Vec<usize> = (1..rec.partition.len()).filter(|&j| rec_rep_weights[j] > 0.0).collect();
    let good_mass: f64 = good_set.iter().map(|&j| rec_rep_weights[j]).sum();
    let sampled = if good_set.is_empty() {
        flags
            .notes
            .push("no unrefuted component: everything is assigned to the bad cell".into());
        None
    } else if good_mass <= 1.0 - eps_sample / 2.0 {
        flags.notes.push(format!(
            "sampling skipped: good mass {good_mass} is not above 1 − ε²/2; recursion cells used directly"
        ));
        None
    } else {
        let nonzero: Vec<usize> = (0..comps.len()).filter(|&j| comps[j].is_some()).collect();
        let rep = MixtureRepresentation::new(
            nonzero
                .iter()
                .map(|&j| rec_rep_weights[j])
                .collect::<Vec<_>>()
                .normalized(),
            nonzero.iter().map(|&j| comps[j].clone().unwrap()).collect(),
        )?;
        let good_local: Vec<usize> = nonzero
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != 0)
            .map(|(k, _)| k)
            .collect();
        match sample_coarsen(
            &mu_s,
            &rep,
            &good_local,
            eps_sample,
            mix_seed(cfg.seed, 7, 0),
            cfg.sample_cap,
        ) {
            Ok(s) => Some((s, nonzero)),
            Err(Error::SamplingExhausted { best_tv, m }) => {
                flags.notes.push(format!(
                    "sampling exhausted at m = {m} (best ‖·‖ {best_tv}); recursion cells used directly"
                ));
                None
            }
            Err(e) => return Err(e),
        }
    };

    let density_bound = (1.0 - 1.5 * eps_in).recip();
    let mut bad_s = vec![0.0; s_len];
    match sampled {
        Some((s, nonzero)) => {
            let m = s.m as f64;
            let counts = s.counts();
            let masses = mu_s.masses();
            let mut mu_prime = vec![0.0; s_len];
            for (&k, &c) in &counts {
                let j = nonzero[k];
                for x in 0..s_len {
                    mu_prime[x] += c as f64 / m * rec.partition.densities[j][x] * masses[x] / rec_rep_weights[j];
                }
            }
            // Jordan decomposition: γ = min(μ, μ′), f = dγ/dμ′
            let f: Vec<f64> = (0..s_len)
                .map(|x| {
                    if mu_prime[x] > 0.0 {
                        masses[x].min(mu_prime[x]) / mu_prime[x]
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut good_total = vec![0.0; s_len];
            for (&k, &c) in &counts {
                let j = nonzero[k];
                let rho = &rec.partition.densities[j];
                let p = rec_rep_weights[j];
                let integral: f64 = (0..s_len).map(|x| f[x] * rho[x] * masses[x] / p).sum();
                if integral > 1.0 - 1.5 * eps_in {
                    let dens: Vec<f64> = (0..s_len).map(|x| c as f64 / m * f[x] * rho[x] / p).collect();
                    for x in 0..s_len {
                        good_total[x] += dens[x];
                    }
                    good_densities.push(dens);
                }
            }
            for x in 0..s_len {
                bad_s[x] = (1.0 - good_total[x]).max(0.0);
            }
            sampling = Some(s);
        }
        None => {
            bad_s = rec.partition.densities[0].clone();
            good_densities = rec.partition.densities[1..].to_vec();
        }
    }

    // Parameters: recursion T, then the density bound (only after the Jordan
    // repair), then lifting from A^S to A^n.
    let mut params = rec.params;
    if sampling.is_some() {
        params = propagate_t_params(&params, &StabilityTransform::density_bound(density_bound)?)?;
    }
    let a = 1.0 - kept.len() as f64 / n as f64;
    params = propagate_t_params(&params, &StabilityTransform::Lift { a })?;

    let index_s: BTreeMap<&Word, usize> = mu_s.atoms().keys().enumerate().map(|(i, w)| (w, i)).collect();
    let lift = |rho: &[f64]| -> Vec<f64> {
        mu.iter()
            .map(|(w, _)| {
                let z: Word = kept.iter().map(|&c| w[c]).collect();
                rho[index_s[&z]]
            })
            .collect()
    };
    let mut densities = vec![lift(&bad_s)];
    densities.extend(good_densities.iter().map(|d| lift(d)));
    let components: Vec<Component> = densities
        .into_par_iter()
        .enumerate()
        .map(|(j, rho)| {
            let weight = mu.integrate(&rho);
            let measure = if weight > 0.0 { Some(reweight(mu, &rho)?) } else { None };
            let (p, certificate) = match (&measure, j) {
                (Some(c), j) if j > 0 => (Some(params), Some(refute_t(c, &params, &cfg.budget(101, j as u64))?)),
                _ => (None, None),
            };
            Ok(Component {
                weight,
                measure,
                density: Some(rho),
                set: None,
                params: p,
                certificate,
                case: None,
            })
        })
        .collect::<Result<_>>()?;
    let bad_mass = components[0].weight;
    let reconstruction_error = mixture_error(mu, &components);
    let m = components.iter().filter(|c| c.weight > 0.0).count();
    Ok(DecompositionResult {
        kind: DecompositionKind::Mixture,
        space: mu.space(),
        epsilon: cfg.epsilon,
        r: cfg.r,
        components,
        bad_index: 0,
        bad_mass,
        reconstruction_error,
        flags,
        stats: Stats {
            m,
            tc,
            dtc,
            kept_coordinates: Some(kept),
            dtc_trimmed: Some(dtc_s),
            sample_size: sampling.as_ref().map(|s| s.m),
            log_m_bound: cfg.c.ln() + cfg.c * tc,
        },
        recursion: Some(rec),
        sampling,
        carves: Vec::new(),
    })
}

trait Normalized {
    fn normalized(self) -> Self;
}

impl Normalized for Vec<f64> {
    fn normalized(self) -> Self {
        let s: f64 = self.iter().sum();
        self.into_iter().map(|v| v / s).collect()
    }
}

/// One checked inequality of the carving construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarveReport {
    pub case: Option<CarveCase>,
    pub tc: f64,
    pub mass: f64,
    pub checks: Vec<InequalityCheck>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarveOutcome {
    pub set: Vec<Word>,
    pub case: CarveCase,
    /// `μ(V)`.
    pub mass: f64,
    pub params: TParams,
    pub report: CarveReport,
}

fn carve_failed(inequality: &str, detail: String) -> Error {
    Error::CarveFailed {
        inequality: inequality.into(),
        detail,
    }
}

/// Finds `V` with `μ|V` concentrated, by the first applicable of three cases:
/// a heavy atom, small total correlation (via the product of marginals), or
/// level-set slicing followed by a mixture component and a random subset.
pub fn carve_concentrated_set(mu: &DiscreteMeasure, cfg: &PipelineConfig) -> Result<CarveOutcome> {
    cfg.validate()?;
    check_envelope(mu)?;
    let n = mu.dimension();
    let nf = n as f64;
    let r = cfg.r;
    let tc = total_correlation(mu).max(0.0);
    let delta = cfg.delta();
    let h0 = cfg.atom_coefficient() * tc;
    let mut checks = Vec::new();
    let nominal = TParams {
        kappa: r * nf / (6.0 * cfg.kappa_divisor),
        r: 9.0 * r,
    };

    // Case 1: heavy atom (ties go to the lexicographically first word).
    let (heavy, heavy_mass) = mu.iter().fold(
        (None, 0.0),
        |(bw, bm), (w, m)| if m > bm { (Some(w), m) } else { (bw, bm) },
    );
    checks.push(InequalityCheck {
        name: "largest atom ≥ exp(−h0)".into(),
        lhs: heavy_mass,
        rhs: (-h0).exp(),
        holds: heavy_mass >= (-h0).exp(),
    });
    if heavy_mass >= (-h0).exp() {
        let set = vec![heavy.unwrap().clone()];
        return Ok(CarveOutcome {
            set,
            case: CarveCase::HeavyAtom,
            mass: heavy_mass,
            params: nominal,
            report: CarveReport {
                case: Some(CarveCase::HeavyAtom),
                tc,
                mass: heavy_mass,
                checks,
                failure: None,
            },
        });
    }

    // Case 2: TC(μ) ≤ r⁴n.
    let small = InequalityCheck::le("TC(μ) ≤ r⁴n", tc, r.powi(4) * nf);
    checks.push(small.clone());
    if small.holds {
        let factors: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let m = marginal(mu, &[i]).expect("coordinate in range");
                (0..mu.alphabet_size()).map(|s| m.mass(&[s as u16])).collect()
            })
            .collect();
        let product = DiscreteMeasure::product(&factors)?;
        let eta = dbar(&product, mu)?;
        checks.push(InequalityCheck::le(
            "d̄(μ, ⊗μ_i) ≤ √(TC/2n)",
            eta,
            (tc / (2.0 * nf)).sqrt() + 1e-12,
        ));
        let dc = eta.sqrt();
        let near = InequalityCheck::le("√d̄(μ, ⊗μ_i) < 1/8", dc, 0.125 - 1e-12);
        checks.push(near.clone());
        if !near.holds {
            return Err(carve_failed(&near.name, format!("√d̄ = {dc}")));
        }
        let out = concentrate_subset(&product, mu, &TParams { kappa: 8.0 * r * nf, r }, dc)?;
        let mass = out.mass;
        return Ok(CarveOutcome {
            set: out.set,
            case: CarveCase::SmallTc,
            mass,
            params: out.params,
            report: CarveReport {
                case: Some(CarveCase::SmallTc),
                tc,
                mass,
                checks,
                failure: None,
            },
        });
    }

    // Case 3: level sets P_j = {e^{−h0−j} ≥ μ(x) > e^{−h0−j−1}}.
    let a_size = mu.alphabet_size() as f64;
    let big_m = (nf * a_size.ln()).ceil().max(1.0) as usize;
    let mut levels: BTreeMap<usize, BTreeSet<Word>> = BTreeMap::new();
    for (w, m) in mu.iter() {
        let j = ((-m.ln() - h0).floor().max(0.0) as usize).min(big_m);
        levels.entry(j).or_default().insert(w.clone());
    }
    let mut chosen: Option<(usize, f64, DiscreteMeasure)> = None;
    for (&j, set) in &levels {
        if j >= big_m {
            continue;
        }
        let mass = mu.measure_of(set);
        let cond = condition_on(mu, set)?;
        if total_correlation(&cond) <= 4.0 * tc + 1e-12 && chosen.as_ref().is_none_or(|(_, m, _)| mass > *m) {
            chosen = Some((j, mass, cond));
        }
    }
    let Some((j, p_mass, mu_p)) = chosen else {
        return Err(carve_failed(
            "TC(μ|P_j) ≤ 4·TC(μ) for some j < M",
            format!("no level set qualifies among {} nonempty levels", levels.len()),
        ));
    };
    checks.push(InequalityCheck::le("1/(4M) ≤ μ(P)", 1.0 / (4.0 * big_m as f64), p_mass));
    let a = -p_mass.ln();
    let h = h0 + j as f64 - a;
    let ents: Vec<f64> = (0..n).map(|i| marginal_entropy(&mu_p, &[i])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| ents[x].total_cmp(&ents[y]).then(x.cmp(&y)));
    let m = ((1.0 - delta) * nf).ceil() as usize;
    let mut s_coords: Vec<usize> = order[..m].to_vec();
    s_coords.sort_unstable();
    checks.push(InequalityCheck::le("|S| < n (needs δn ≥ 1)", m as f64, nf - 1.0));
    let proj = marginal(&mu_p, &s_coords)?;
    let q_threshold = (-(1.0 - delta / 4.0) * h).exp();
    let q: BTreeSet<Word> = proj
        .iter()
        .filter(|(_, p)| *p >= q_threshold)
        .map(|(z, _)| z.clone())
        .collect();
    let q_mass = proj.measure_of(&q);
    checks.push(InequalityCheck::le("δ/8 ≤ μ'_S(Q)", delta / 8.0, q_mass));
    let r_set: BTreeSet<Word> = mu_p
        .iter()
        .filter(|(w, _)| q.contains(&s_coords.iter().map(|&c| w[c]).collect::<Word>()))
        .map(|(w, _)| w.clone())
        .collect();
    if r_set.is_empty() {
        return Err(carve_failed(
            "μ'_S(Q) ≥ δ/8",
            format!("Q is empty (threshold {q_threshold}); R has no mass"),
        ));
    }
    let nu = condition_on(mu, &r_set)?;
    let tc_nu = total_correlation(&nu).max(0.0);
    checks.push(InequalityCheck::le("TC(μ|R) ≤ 33·TC(μ)/δ", tc_nu, 33.0 * tc / delta));
    let e_term = (-33.0 * cfg.c_b * tc / delta).exp();
    checks.push(InequalityCheck::le(
        "e^{−δh/4} ≤ δ³/(2c_B)·e^{−33c_B·TC/δ}",
        (-delta * h / 4.0).exp(),
        delta.powi(3) / (2.0 * cfg.c_b) * e_term,
    ));

    let b_cfg = PipelineConfig {
        epsilon: 0.5 - 1e-12,
        seed: mix_seed(cfg.seed, 31, 0),
        ..cfg.clone()
    };
    let dec = theorem_b(&nu, &b_cfg)?;
    let best = dec
        .components
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| c.weight > 0.0 && c.certificate.as_ref().is_some_and(|z| !z.refuted()))
        .fold(None::<(usize, f64)>, |acc, (j, c)| match acc {
            Some((_, w)) if w >= c.weight => acc,
            _ => Some((j, c.weight)),
        });
    let Some((jb, rho_mass)) = best else {
        return Err(carve_failed(
            "a non-bad component with an unrefuted certificate exists",
            format!("mixture on R had bad mass {}", dec.bad_mass),
        ));
    };
    checks.push(InequalityCheck::le(
        "e^{−33c_B·TC/δ}/(2c_B) ≤ ⟨ρ⟩",
        e_term / (2.0 * cfg.c_b),
        rho_mass,
    ));
    let rho = dec.components[jb].density.clone().unwrap();
    let b_params = dec.components[jb].params.unwrap();
    let nu_rho = dec.components[jb].measure.clone().unwrap();
    let nu_support = nu.support();
    let nu_masses = nu.masses();

    let mut accepted = None;
    for attempt in 0..cfg.carve_retries {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 37, attempt as u64));
        let u: BTreeSet<Word> = nu_support
            .iter()
            .zip(&rho)
            .filter(|(_, &p)| rng.gen::<f64>() < p)
            .map(|(w, _)| w.clone())
            .collect();
        let nu_u: f64 = nu_support
            .iter()
            .zip(&nu_masses)
            .filter(|(w, _)| u.contains(*w))
            .map(|(_, m)| m)
            .sum();
        if nu_u <= 0.0 {
            continue;
        }
        if (nu_u - rho_mass).abs() > 9.0 * delta * rho_mass {
            continue;
        }
        let nu_cond = condition_on(&nu, &u)?;
        let d = dbar(&nu_cond, &nu_rho)?;
        if nu_u * d <= 21.0 * delta * rho_mass {
            accepted = Some((u, nu_cond, d));
            break;
        }
    }
    let Some((_, nu_u, d)) = accepted else {
        return Err(carve_failed(
            "|ν(U) − ⟨ρ⟩| ≤ 9δ⟨ρ⟩ and ν(U)·d̄(ν|U, ν|ρ) ≤ 21δ⟨ρ⟩",
            format!("no acceptable random subset in {} attempts", cfg.carve_retries),
        ));
    };
    let dc = d.sqrt();
    let near = InequalityCheck::le("√d̄(ν|U, ν|ρ) < 1/8", dc, 0.125 - 1e-12);
    checks.push(near.clone());
    if !near.holds {
        return Err(carve_failed(&near.name, format!("√d̄ = {dc}")));
    }
    let out = concentrate_subset(&nu_rho, &nu_u, &b_params, dc)?;
    let mass = mu.measure_of(&out.set);
    checks.push(InequalityCheck::le("exp(−c·TC(μ)) ≤ μ(V)", (-cfg.c * tc).exp(), mass));
    Ok(CarveOutcome {
        set: out.set,
        case: CarveCase::LevelSet,
        mass,
        params: out.params,
        report: CarveReport {
            case: Some(CarveCase::LevelSet),
            tc,
            mass,
            checks,
            failure: None,
        },
    })
}

/// Set partition: carve concentrated sets one at a time from the remainder
/// until it carries less than `ε`; the remainder is cell 0.
pub fn theorem_c(mu: &DiscreteMeasure, cfg: &PipelineConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    check_envelope(mu)?;
    let tc = total_correlation(mu).max(0.0);
    let mut remaining: BTreeSet<Word> = mu.atoms().keys().cloned().collect();
    let mut cells: Vec<(Vec<Word>, CarveOutcome)> = Vec::new();
    let mut carves = Vec::new();
    let mut flags = Flags::default();
    let mut round = 0;
    loop {
        let rest = mu.measure_of(&remaining);
        if rest < cfg.epsilon || remaining.is_empty() {
            break;
        }
        if round >= cfg.max_iters {
            flags.truncated = true;
            break;
        }
        let sub = condition_on(mu, &remaining)?;
        let round_cfg = PipelineConfig {
            seed: mix_seed(cfg.seed, 53, round as u64),
            ..cfg.clone()
        };
        match carve_concentrated_set(&sub, &round_cfg) {
            Ok(out) => {
                let set: Vec<Word> = out.set.iter().filter(|w| remaining.contains(*w)).cloned().collect();
                if set.is_empty() {
                    flags.stalled = true;
                    flags
                        .notes
                        .push(format!("round {round}: carved set misses the remainder"));
                    break;
                }
                for w in &set {
                    remaining.remove(w);
                }
                carves.push(out.report.clone());
                cells.push((set, out));
            }
            Err(Error::CarveFailed { inequality, detail }) => {
                flags.stalled = true;
                flags
                    .notes
                    .push(format!("round {round}: carve failed at {inequality}: {detail}"));
                carves.push(CarveReport {
                    case: None,
                    tc: total_correlation(&sub).max(0.0),
                    mass: 0.0,
                    checks: Vec::new(),
                    failure: Some(format!("{inequality}: {detail}")),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        round += 1;
    }
    let bad_set: Vec<Word> = remaining.into_iter().collect();
    let bad_mass = mu.measure_of(&bad_set);
    let mut components = vec![Component {
        weight: bad_mass,
        measure: if bad_mass > 0.0 {
            Some(condition_on(mu, &bad_set.iter().cloned().collect())?)
        } else {
            None
        },
        density: None,
        set: Some(bad_set),
        params: None,
        certificate: None,
        case: None,
    }];
    let carved: Vec<Component> = cells
        .into_par_iter()
        .enumerate()
        .map(|(j, (set, out))| {
            let measure = condition_on(mu, &set.iter().cloned().collect())?;
            let certificate = refute_t(&measure, &out.params, &cfg.budget(211, j as u64))?;
            Ok(Component {
                weight: mu.measure_of(&set),
                measure: Some(measure),
                density: None,
                set: Some(set),
                params: Some(out.params),
                certificate: Some(certificate),
                case: Some(out.case),
            })
        })
        .collect::<Result<_>>()?;
    components.extend(carved);
    let covered: f64 = components.iter().map(|c| c.weight).sum();
    let m = components.len();
    Ok(DecompositionResult {
        kind: DecompositionKind::Partition,
        space: mu.space(),
        epsilon: cfg.epsilon,
        r: cfg.r,
        components,
        bad_index: 0,
        bad_mass,
        reconstruction_error: (1.0 - covered).abs(),
        flags,
        stats: Stats {
            m,
            tc,
            dtc: dual_total_correlation(mu).max(0.0),
            kept_coordinates: None,
            dtc_trimmed: None,
            sample_size: None,
            log_m_bound: cfg.c.ln() + cfg.c * tc,
        },
        recursion: None,
        sampling: None,
        carves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::mix;

    fn two_points(n: usize) -> DiscreteMeasure {
        let space = ProductSpace::new(2, n).unwrap();
        DiscreteMeasure::uniform(space, vec![vec![0; n], vec![1; n]]).unwrap()
    }

    fn diagonal(n: usize) -> DiscreteMeasure {
        let space = ProductSpace::new(2, n).unwrap();
        let words = space
            .words(1 << 12)
            .unwrap()
            .into_iter()
            .filter(|w| (0..n / 2).all(|i| w[2 * i] == w[2 * i + 1]));
        DiscreteMeasure::uniform(space, words).unwrap()
    }

    #[test]
    fn lower_bound_value() {
        assert!((decrement_lower_bound(0.2, 4) - 0.01 * (-4f64).exp()).abs() < 1e-15);
        assert!((decrement_lower_bound(0.2, 4) - 1.832e-4).abs() < 1e-7);
    }

    #[test]
    fn nominal_sample_cap() {
        let expected = 100f64.ln() + 40.0;
        assert!((log_nominal_sample_cap(0.4, 0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn product_has_no_split() {
        let mu = DiscreteMeasure::iid(&[0.7, 0.3], 5).unwrap();
        let cfg = PipelineConfig::desk(0.3, 0.3);
        assert!(decrement_step(&mu, 0.3, &cfg).unwrap().is_none());
        let rec = decrement_recursion(&mu, &cfg).unwrap();
        assert_eq!(rec.partition.len(), 2);
        assert!(rec.mutual_information.abs() < 1e-12);
    }

    #[test]
    fn two_points_split_meets_decrement() {
        let mu = two_points(6);
        let cfg = PipelineConfig::desk(0.3, 0.3);
        let split = decrement_step(&mu, 0.3, &cfg).unwrap().expect("split");
        let i = fuzzy_mutual_information(&mu, &split.partition).unwrap();
        let dec = dtc_decrement(&mu, &split.partition).unwrap();
        assert!((i - split.mutual_information).abs() < 1e-12);
        assert!(dec.lhs >= 0.5 * i - 1e-8);
        assert!(i >= decrement_lower_bound(0.3, 6) - 1e-12);
    }

    #[test]
    fn recursion_isolates_two_points() {
        let mu = two_points(6);
        let cfg = PipelineConfig::desk(0.045, 0.3);
        let rec = decrement_recursion(&mu, &cfg).unwrap();
        assert!(!rec.truncated && !rec.stalled);
        let weights = rec.partition.weights(&mu);
        assert!(weights[0] < 0.045);
        let total: f64 = rec.audit.iter().map(|a| a.delta_i).sum();
        assert!((total - rec.mutual_information_unmerged).abs() < 1e-9);
        for pair in rec.audit.windows(2) {
            assert!(pair[1].average_dtc <= pair[0].average_dtc + 1e-8);
        }
    }

    #[test]
    fn sampling_single_component() {
        let mu = DiscreteMeasure::iid(&[0.5, 0.5], 3).unwrap();
        let rep = MixtureRepresentation::new(vec![1.0], vec![mu.clone()]).unwrap();
        let s = sample_coarsen(&mu, &rep, &[0], 0.3, 1, 1 << 10).unwrap();
        assert_eq!(s.m, 1);
        assert!(s.l1_error < 1e-15);
    }

    #[test]
    fn sampling_point_masses() {
        let space = ProductSpace::new(2, 4).unwrap();
        let words = [vec![0, 0, 0, 0], vec![1, 1, 1, 1], vec![0, 0, 1, 1]];
        let comps: Vec<DiscreteMeasure> = words
            .iter()
            .map(|w| DiscreteMeasure::dirac(space, w.clone()).unwrap())
            .collect();
        let rep = MixtureRepresentation::new(vec![1.0 / 3.0; 3], comps).unwrap();
        let mu = mix(&rep).unwrap();
        let s = sample_coarsen(&mu, &rep, &[0, 1, 2], 0.3, 5, 1 << 10).unwrap();
        let counts = s.counts();
        assert_eq!(counts.len(), 3);
        let tv: f64 = counts
            .values()
            .map(|&c| (c as f64 / s.m as f64 - 1.0 / 3.0).abs())
            .sum();
        assert!((tv - s.l1_error).abs() < 1e-12);
        assert!(tv < 0.9);
    }

    #[test]
    fn sampling_rejects_small_good_set() {
        let mu = two_points(3);
        let space = mu.space();
        let comps = vec![
            DiscreteMeasure::dirac(space, vec![0; 3]).unwrap(),
            DiscreteMeasure::dirac(space, vec![1; 3]).unwrap(),
        ];
        let rep = MixtureRepresentation::new(vec![0.5, 0.5], comps).unwrap();
        assert!(sample_coarsen(&mu, &rep, &[0], 0.3, 0, 64).is_err());
    }

    #[test]
    fn point_mass_partition() {
        let space = ProductSpace::new(3, 4).unwrap();
        let mu = DiscreteMeasure::dirac(space, vec![2, 0, 1, 1]).unwrap();
        let res = theorem_c(&mu, &PipelineConfig::asymptotic(0.1, 0.2)).unwrap();
        assert_eq!(res.stats.m, 2);
        assert_eq!(res.components[1].set.as_deref(), Some(&[vec![2, 0, 1, 1]][..]));
        assert_eq!(res.bad_mass, 0.0);
    }

    #[test]
    fn heavy_atom_case() {
        let space = ProductSpace::new(2, 4).unwrap();
        let mu = DiscreteMeasure::from_weights(space, vec![(vec![0; 4], 0.9), (vec![1, 0, 1, 0], 0.1)]).unwrap();
        let carve = carve_concentrated_set(&mu, &PipelineConfig::asymptotic(0.1, 0.2)).unwrap();
        assert_eq!(carve.case, CarveCase::HeavyAtom);
        assert_eq!(carve.set, vec![vec![0; 4]]);
    }

    #[test]
    fn product_small_tc_case() {
        let mu = DiscreteMeasure::iid(&[0.7, 0.3], 6).unwrap();
        let carve = carve_concentrated_set(&mu, &PipelineConfig::desk(0.3, 0.3)).unwrap();
        assert_eq!(carve.case, CarveCase::SmallTc);
        assert!(carve.mass >= 0.5);
    }

    #[test]
    fn diagonal_level_set_case() {
        let mu = diagonal(8);
        let carve = carve_concentrated_set(&mu, &PipelineConfig::desk(0.3, 0.3)).unwrap();
        assert_eq!(carve.case, CarveCase::LevelSet);
        // the large-n condition is reported but cannot hold at n = 8
        let skipped = [
            "largest atom ≥ exp(−h0)",
            "TC(μ) ≤ r⁴n",
            "e^{−δh/4} ≤ δ³/(2c_B)·e^{−33c_B·TC/δ}",
        ];
        assert!(carve.report.checks.iter().any(|c| c.name == skipped[2] && !c.holds));
        for c in carve
            .report
            .checks
            .iter()
            .filter(|c| !skipped.contains(&c.name.as_str()))
        {
            assert!(c.holds, "{}", c.name);
        }
        assert!(carve.mass >= (-50.0 * total_correlation(&mu)).exp());
    }

    #[test]
    fn product_mixture_is_trivial() {
        let mu = DiscreteMeasure::iid(&[0.8, 0.2], 4).unwrap();
        let res = theorem_b(&mu, &PipelineConfig::desk(0.3, 0.3)).unwrap();
        assert!(res.stats.m <= 2);
        assert!(res.bad_mass < 0.3);
        assert!(res.reconstruction_error < 1e-9);
    }

    #[test]
    fn envelope_rejects_large_dimension() {
        let mu = DiscreteMeasure::dirac(ProductSpace::new(2, 13).unwrap(), vec![0; 13]).unwrap();
        assert!(matches!(
            theorem_c(&mu, &PipelineConfig::asymptotic(0.1, 0.2)),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn seeds_mix_apart() {
        assert_ne!(mix_seed(0, 1, 0), mix_seed(0, 0, 1));
        assert_eq!(mix_seed(3, 0, 0), 3);
    }
}
