//! Stationary finite-state processes and their finite-window statistics.
//!
//! Every spec is reduced to a hidden Markov chain with a deterministic letter
//! map; block laws are computed by forward enumeration over (state, word).

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{theorem_c, DecompositionResult, PipelineConfig};
use crate::error::{Error, Result};
use crate::information::total_correlation;
use crate::measures::{DiscreteMeasure, ProductSpace, Symbol, Word, ENUMERATION_CAP, PRUNE_BELOW};
use crate::transport::dbar;

const ROW_TOLERANCE: f64 = 1e-12;
const STATIONARY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    Iid {
        distribution: Vec<f64>,
    },
    /// States are the letters. Without `stationary` the chain must have a
    /// unique stationary law.
    Markov {
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        stationary: Option<Vec<f64>>,
    },
    /// Markov chain on hidden states observed through `letters[state]`.
    Hidden {
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        stationary: Option<Vec<f64>>,
        letters: Vec<Symbol>,
        alphabet_size: usize,
    },
    /// Sliding block code `x_i = code[y_i … y_{i+window−1}]`, with base windows
    /// indexed in lexicographic order.
    BlockCode {
        base: Box<ProcessSpec>,
        window: usize,
        code: Vec<Symbol>,
        alphabet_size: usize,
    },
    /// A process on pairs `(b, a)` encoded as the letter `b·a_alphabet + a`.
    Joint {
        b_alphabet: usize,
        a_alphabet: usize,
        law: Box<ProcessSpec>,
    },
}

/// A hidden Markov chain with deterministic emissions.
#[derive(Clone, Debug)]
struct Chain {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    letters: Vec<Symbol>,
}

fn check_stochastic(transition: &[Vec<f64>]) -> Result<()> {
    let k = transition.len();
    if k == 0 {
        return Err(Error::InvalidParameter("transition matrix is empty".into()));
    }
    for (i, row) in transition.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidParameter(format!(
                "transition row {i} has length {}, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "transition row {i} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidParameter(format!("transition row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "{what} must be nonempty and nonnegative"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidParameter(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// The stationary law of an irreducible chain, by solving `π(P − I) = 0`, `Σπ = 1`.
pub fn stationary_law(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_stochastic(transition)?;
    let k = transition.len();
    // rows: equations; replace the last balance equation by normalization
    let mut a = vec![vec![0.0; k + 1]; k];
    for j in 0..k {
        for i in 0..k {
            a[j][i] = transition[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[k - 1] = vec![1.0; k + 1];
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::InvalidParameter(
                "transition matrix has no unique stationary law; supply one".into(),
            ));
        }
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        a[row][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..k).map(|i| (a[i][k] / a[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / s).collect())
}

fn resolve_stationary(transition: &[Vec<f64>], given: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    check_stochastic(transition)?;
    match given {
        None => stationary_law(transition),
        Some(pi) => {
            if pi.len() != transition.len() {
                return Err(Error::LengthMismatch(pi.len(), transition.len()));
            }
            check_distribution(pi, "stationary law")?;
            for j in 0..pi.len() {
                let v: f64 = (0..pi.len()).map(|i| pi[i] * transition[i][j]).sum();
                if (v - pi[j]).abs() > STATIONARY_TOLERANCE {
                    return Err(Error::InvalidParameter(format!(
                        "stationary law is not fixed by the matrix at state {j}: {v} vs {}",
                        pi[j]
                    )));
                }
            }
            Ok(pi.clone())
        }
    }
}

impl ProcessSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Json {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Alphabet of the observed process (pairs for joint specs).
    pub fn alphabet_size(&self) -> usize {
        match self {
            Self::Iid { distribution } => distribution.len(),
            Self::Markov { transition, .. } => transition.len(),
            Self::Hidden { alphabet_size, .. } | Self::BlockCode { alphabet_size, .. } => *alphabet_size,
            Self::Joint {
                b_alphabet, a_alphabet, ..
            } => b_alphabet * a_alphabet,
        }
    }

    /// Checks the structural invariants of this process description.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Iid { distribution } => check_distribution(distribution, "distribution"),
            Self::Markov { transition, stationary } => resolve_stationary(transition, stationary).map(|_| ()),
            Self::Hidden {
                transition,
                stationary,
                letters,
                alphabet_size,
            } => {
                resolve_stationary(transition, stationary)?;
                if letters.len() != transition.len() {
                    return Err(Error::LengthMismatch(letters.len(), transition.len()));
                }
                if letters.iter().any(|&l| l as usize >= *alphabet_size) {
                    return Err(Error::InvalidParameter("letter map leaves the alphabet".into()));
                }
                Ok(())
            }
            Self::BlockCode {
                base,
                window,
                code,
                alphabet_size,
            } => {
                base.validate()?;
                if *window == 0 {
                    return Err(Error::InvalidParameter("window must be at least 1".into()));
                }
                let expected = (base.alphabet_size() as u128).checked_pow(*window as u32);
                if expected != Some(code.len() as u128) {
                    return Err(Error::InvalidParameter(format!(
                        "code table has {} entries, expected |base alphabet|^window",
                        code.len()
                    )));
                }
                if code.iter().any(|&l| l as usize >= *alphabet_size) {
                    return Err(Error::InvalidParameter("code leaves the alphabet".into()));
                }
                Ok(())
            }
            Self::Joint {
                b_alphabet,
                a_alphabet,
                law,
            } => {
                law.validate()?;
                if law.alphabet_size() != b_alphabet * a_alphabet {
                    return Err(Error::InvalidParameter(format!(
                        "joint law has alphabet {}, expected {}·{}",
                        law.alphabet_size(),
                        b_alphabet,
                        a_alphabet
                    )));
                }
                Ok(())
            }
        }
    }

    fn chain(&self) -> Result<Option<Chain>> {
        Ok(match self {
            Self::Iid { distribution } => {
                check_distribution(distribution, "distribution")?;
                Some(Chain {
                    transition: vec![distribution.clone(); distribution.len()],
                    stationary: distribution.clone(),
                    letters: (0..distribution.len()).map(|i| i as Symbol).collect(),
                })
            }
            Self::Markov { transition, stationary } => Some(Chain {
                stationary: resolve_stationary(transition, stationary)?,
                transition: transition.clone(),
                letters: (0..transition.len()).map(|i| i as Symbol).collect(),
            }),
            Self::Hidden {
                transition,
                stationary,
                letters,
                ..
            } => {
                self.validate()?;
                Some(Chain {
                    stationary: resolve_stationary(transition, stationary)?,
                    transition: transition.clone(),
                    letters: letters.clone(),
                })
            }
            Self::BlockCode { .. } => None,
            Self::Joint { law, .. } => law.chain()?,
        })
    }
}

fn space(alphabet: usize, n: usize) -> Result<ProductSpace> {
    ProductSpace::new(alphabet, n)
}

fn code_window(window: &[Symbol], base_alphabet: usize) -> usize {
    window.iter().fold(0usize, |acc, &s| acc * base_alphabet + s as usize)
}

/// Exact law of the first `n` letters, by forward enumeration over hidden states.
pub fn exact_block_measure(spec: &ProcessSpec, n: usize) -> Result<DiscreteMeasure> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("window length must be at least 1".into()));
    }
    if let ProcessSpec::BlockCode {
        base,
        window,
        code,
        alphabet_size,
    } = spec
    {
        let base_law = exact_block_measure(base, n + window - 1)?;
        let b = base.alphabet_size();
        let image = base_law.iter().map(|(y, m)| {
            let x: Word = (0..n).map(|i| code[code_window(&y[i..i + window], b)]).collect();
            (x, m)
        });
        return DiscreteMeasure::from_weights(space(*alphabet_size, n)?, image);
    }
    let chain = spec.chain()?.expect("non-code specs reduce to chains");
    let mut layer: BTreeMap<(usize, Word), f64> = BTreeMap::new();
    for (s, &p) in chain.stationary.iter().enumerate() {
        if p > PRUNE_BELOW {
            *layer.entry((s, vec![chain.letters[s]])).or_insert(0.0) += p;
        }
    }
    for _ in 1..n {
        let mut next: BTreeMap<(usize, Word), f64> = BTreeMap::new();
        for ((s, w), m) in layer {
            for (t, &p) in chain.transition[s].iter().enumerate() {
                let q = m * p;
                if q > PRUNE_BELOW {
                    let mut w2 = w.clone();
                    w2.push(chain.letters[t]);
                    *next.entry((t, w2)).or_insert(0.0) += q;
                }
            }
        }
        if next.len() > ENUMERATION_CAP {
            return Err(Error::CapExceeded {
                what: "hidden-state enumeration".into(),
                size: next.len(),
                cap: ENUMERATION_CAP,
                hint: "use empirical_block_measure".into(),
            });
        }
        layer = next;
    }
    let mut atoms: BTreeMap<Word, f64> = BTreeMap::new();
    for ((_, w), m) in layer {
        *atoms.entry(w).or_insert(0.0) += m;
    }
    DiscreteMeasure::from_weights(space(spec.alphabet_size(), n)?, atoms)
}

fn sample_path(spec: &ProcessSpec, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Symbol>> {
    if let ProcessSpec::BlockCode { base, window, code, .. } = spec {
        let y = sample_path(base, length + window - 1, rng)?;
        let b = base.alphabet_size();
        return Ok((0..length).map(|i| code[code_window(&y[i..i + window], b)]).collect());
    }
    let chain = spec.chain()?.expect("non-code specs reduce to chains");
    let rows: Vec<WeightedIndex<f64>> = chain
        .transition
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    let mut state = WeightedIndex::new(&chain.stationary)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    let mut out = Vec::with_capacity(length);
    for i in 0..length {
        if i > 0 {
            state = rows[state].sample(rng);
        }
        out.push(chain.letters[state]);
    }
    Ok(out)
}

/// Sliding-window frequencies of `n`-blocks along one sampled path.
pub fn empirical_block_measure(spec: &ProcessSpec, n: usize, length: usize, seed: u64) -> Result<DiscreteMeasure> {
    spec.validate()?;
    if n == 0 || length < n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ n ≤ length, got n = {n}, length = {length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = sample_path(spec, length, &mut rng)?;
    let mut counts: BTreeMap<Word, f64> = BTreeMap::new();
    for w in path.windows(n) {
        *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
    }
    DiscreteMeasure::from_weights(space(spec.alphabet_size(), n)?, counts)
}

/// The conditional law of the `a`-window given the `b`-window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockKernel {
    pub n: usize,
    pub a_alphabet: usize,
    /// Law of the `b`-window.
    pub base: DiscreteMeasure,
    /// One conditional per `b` in the support of `base`.
    pub kernel: BTreeMap<Word, DiscreteMeasure>,
}

impl BlockKernel {
    /// The conditional at `b`, uniform on `A^n` when `b` has zero probability.
    pub fn conditional(&self, b: &[Symbol]) -> Result<DiscreteMeasure> {
        match self.kernel.get(b) {
            Some(m) => Ok(m.clone()),
            None => {
                let sp = space(self.a_alphabet, self.n)?;
                DiscreteMeasure::uniform(sp, sp.words(ENUMERATION_CAP)?)
            }
        }
    }

    /// `∫ δ_b × λ(·|b) ν(db)` as a measure on pair words.
    pub fn hookup(&self) -> Result<DiscreteMeasure> {
        let a = self.a_alphabet;
        let b_alpha = self.base.alphabet_size();
        let atoms = self.base.iter().flat_map(|(b, p)| {
            self.kernel[b].iter().map(move |(x, q)| {
                let w: Word = b
                    .iter()
                    .zip(x)
                    .map(|(&bi, &xi)| (bi as usize * a + xi as usize) as Symbol)
                    .collect();
                (w, p * q)
            })
        });
        DiscreteMeasure::from_weights(space(b_alpha * a, self.n)?, atoms.collect::<Vec<_>>())
    }

    /// `∫ f(λ(·|b)) ν(db)`.
    pub fn average(&self, f: impl Fn(&DiscreteMeasure) -> f64) -> f64 {
        self.base.iter().map(|(b, p)| p * f(&self.kernel[b])).sum()
    }
}

fn joint_parts(spec: &ProcessSpec) -> Result<(usize, usize)> {
    match spec {
        ProcessSpec::Joint {
            b_alphabet, a_alphabet, ..
        } => Ok((*b_alphabet, *a_alphabet)),
        _ => Err(Error::InvalidParameter("operation needs a joint spec".into())),
    }
}

/// Splits the joint block law into the `b`-window law and the conditionals.
pub fn block_kernel(spec: &ProcessSpec, n: usize) -> Result<BlockKernel> {
    let (b_alpha, a_alpha) = joint_parts(spec)?;
    let ProcessSpec::Joint { law, .. } = spec else {
        unreachable!()
    };
    let pairs = exact_block_measure(law, n)?;
    let mut by_b: BTreeMap<Word, Vec<(Word, f64)>> = BTreeMap::new();
    for (w, m) in pairs.iter() {
        let b: Word = w.iter().map(|&s| (s as usize / a_alpha) as Symbol).collect();
        let a: Word = w.iter().map(|&s| (s as usize % a_alpha) as Symbol).collect();
        by_b.entry(b).or_default().push((a, m));
    }
    let a_space = space(a_alpha, n)?;
    let mut kernel = BTreeMap::new();
    let mut base = Vec::new();
    for (b, atoms) in by_b {
        base.push((b.clone(), atoms.iter().map(|(_, m)| m).sum::<f64>()));
        kernel.insert(b, DiscreteMeasure::from_weights(a_space, atoms)?);
    }
    Ok(BlockKernel {
        n,
        a_alphabet: a_alpha,
        base: DiscreteMeasure::from_weights(space(b_alpha, n)?, base)?,
        kernel,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcPoint {
    /// Window length in letters.
    pub n: usize,
    /// Number of coordinates after regrouping.
    pub blocks: usize,
    pub tc: f64,
}

/// `TC` of the `n`-window law for each window up to `n_max`. With a block size
/// `ℓ` only windows `kℓ` are used, viewed as measures on `(A^ℓ)^k`. For joint
/// specs each value is the `ν`-average of `TC` of the conditional block laws.
pub fn tc_profile(spec: &ProcessSpec, n_max: usize, block: Option<usize>) -> Result<Vec<TcPoint>> {
    let ell = block.unwrap_or(1);
    if ell == 0 {
        return Err(Error::InvalidParameter("block size must be at least 1".into()));
    }
    let conditional = matches!(spec, ProcessSpec::Joint { .. });
    (1..=n_max / ell)
        .map(|k| {
            let n = k * ell;
            let tc = if conditional {
                let kernel = block_kernel(spec, n)?;
                let parts: Vec<(f64, f64)> = kernel
                    .base
                    .iter()
                    .map(|(b, p)| Ok((p, total_correlation(&kernel.kernel[b].regroup(ell)?))))
                    .collect::<Result<_>>()?;
                parts.iter().map(|(p, t)| p * t).sum()
            } else {
                total_correlation(&exact_block_measure(spec, n)?.regroup(ell)?)
            };
            Ok(TcPoint { n, blocks: k, tc })
        })
        .collect()
}

/// `∫ d̄(λ(·|b), θ(·|b)) ν(db)` over `n`-windows.
pub fn relative_dbar_estimate(lambda: &ProcessSpec, theta: &ProcessSpec, n: usize) -> Result<f64> {
    let kl = block_kernel(lambda, n)?;
    let kt = block_kernel(theta, n)?;
    if kl.a_alphabet != kt.a_alphabet {
        return Err(Error::SpaceMismatch("the two joints have different A alphabets".into()));
    }
    if kl.base.space() != kt.base.space() || kl.base.l1_distance(&kt.base) > 1e-9 {
        return Err(Error::SpaceMismatch("the two joints have different π-marginals".into()));
    }
    let terms: Vec<f64> = kl
        .base
        .atoms()
        .par_iter()
        .map(|(b, p)| Ok(p * dbar(&kl.kernel[b], &kt.conditional(b)?)?))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// `∫ d̄(λ_{kn}(·|b), ⊗_j λ_n(·|b_j)) ν(db)` with `b_j` the `j`-th `n`-block of `b`.
pub fn block_independence_gap(lambda: &ProcessSpec, n: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let short = block_kernel(lambda, n)?;
    let long = block_kernel(lambda, k * n)?;
    let terms: Vec<f64> = long
        .base
        .atoms()
        .par_iter()
        .map(|(b, p)| {
            let mut prod = short.conditional(&b[..n])?;
            for j in 1..k {
                prod = prod.product_with(&short.conditional(&b[j * n..(j + 1) * n])?)?;
            }
            Ok(p * dbar(&long.kernel[b], &prod)?)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// `F_* ν^{×ℓ}` for `ν` on `A × A` given as a matrix, with `F` the interleaving
/// bijection `(A×A)^ℓ → A^{2ℓ}`.
pub fn pair_image_measure(nu: &[Vec<f64>], ell: usize) -> Result<DiscreteMeasure> {
    let a = nu.len();
    if nu.iter().any(|r| r.len() != a) {
        return Err(Error::InvalidParameter("pair law must be a square matrix".into()));
    }
    let flat: Vec<f64> = nu.iter().flatten().copied().collect();
    check_distribution(&flat, "pair law")?;
    let pairs = DiscreteMeasure::iid(&flat, ell)?;
    let atoms = pairs.iter().map(|(w, m)| {
        let x: Word = w
            .iter()
            .flat_map(|&s| [(s as usize / a) as Symbol, (s as usize % a) as Symbol])
            .collect();
        (x, m)
    });
    DiscreteMeasure::from_weights(space(a, 2 * ell)?, atoms.collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedPartition {
    pub b: Word,
    pub probability: f64,
    /// `TC` of the conditional viewed on `(A^ℓ)^{n/ℓ}`.
    pub tc: f64,
    pub in_good_set: bool,
    /// [`theorem_c`] partition of the regrouped conditional, for `b ∈ W`.
    pub result: Option<DecompositionResult>,
    /// Cell index of every `a`-word in the support of the conditional (0 is the bad cell).
    pub labels: BTreeMap<Word, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPartition {
    pub n: usize,
    pub block: usize,
    pub delta: f64,
    /// `δ·n`, the threshold on `TC` defining `W`.
    pub threshold: f64,
    /// `ν(W)`.
    pub good_mass: f64,
    pub parts: Vec<ConditionedPartition>,
}

impl ConditionalPartition {
    /// `Ψ(b, a)`: the cell containing `a` in the partition attached to `b`.
    /// Words off the support, and all words when `b ∉ W`, go to the bad cell.
    pub fn label(&self, b: &[Symbol], a: &[Symbol]) -> usize {
        self.parts
            .binary_search_by(|p| p.b.as_slice().cmp(b))
            .ok()
            .and_then(|i| self.parts[i].labels.get(a).copied())
            .unwrap_or(0)
    }
}

/// Runs [`theorem_c`] on every conditional `λ(·|b)` with `TC ≤ δn`, regrouping
/// `A^n` as `(A^ℓ)^{n/ℓ}`.
pub fn conditional_partition(
    lambda: &ProcessSpec,
    n: usize,
    block: usize,
    delta: f64,
    cfg: &PipelineConfig,
) -> Result<ConditionalPartition> {
    if block == 0 || !n.is_multiple_of(block) {
        return Err(Error::InvalidParameter(format!(
            "block size {block} must divide n = {n}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("δ must be positive, got {delta}")));
    }
    cfg.validate()?;
    let kernel = block_kernel(lambda, n)?;
    let threshold = delta * n as f64;
    let a_alpha = kernel.a_alphabet;
    let parts: Vec<ConditionedPartition> = kernel
        .base
        .atoms()
        .iter()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, (b, &p))| {
            let grouped = kernel.kernel[b].regroup(block)?;
            let tc = total_correlation(&grouped).max(0.0);
            let in_good_set = tc <= threshold;
            let mut labels = BTreeMap::new();
            let result = if in_good_set {
                let local = PipelineConfig {
                    seed: cfg.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                    ..cfg.clone()
                };
                let res = theorem_c(&grouped, &local)?;
                for (j, c) in res.components.iter().enumerate() {
                    for w in c.set.iter().flatten() {
                        labels.insert(ungroup(w, a_alpha, block), j);
                    }
                }
                Some(res)
            } else {
                for (w, _) in kernel.kernel[b].iter() {
                    labels.insert(w.clone(), 0);
                }
                None
            };
            Ok(ConditionedPartition {
                b: b.clone(),
                probability: p,
                tc,
                in_good_set,
                result,
                labels,
            })
        })
        .collect::<Result<_>>()?;
    let good_mass = parts.iter().filter(|p| p.in_good_set).map(|p| p.probability).sum();
    Ok(ConditionalPartition {
        n,
        block,
        delta,
        threshold,
        good_mass,
        parts,
    })
}

/// Inverse of regrouping: each block letter expands into `block` letters.
fn ungroup(w: &[Symbol], alphabet: usize, block: usize) -> Word {
    w.iter()
        .flat_map(|&s| {
            let mut v = vec![0; block];
            let mut x = s as usize;
            for k in (0..block).rev() {
                v[k] = (x % alphabet) as Symbol;
                x /= alphabet;
            }
            v
        })
        .collect()
}
