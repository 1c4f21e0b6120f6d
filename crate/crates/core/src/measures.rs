//! Sparse probability measures on finite product spaces `A^n`.
//!
//! Functions "on the support" of a measure are plain `Vec<f64>` aligned with
//! the lexicographic order of its atoms, as returned by [`DiscreteMeasure::support`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u16;
pub type Word = Vec<Symbol>;

/// Largest number of points any operation will enumerate.
pub const ENUMERATION_CAP: usize = 1 << 20;
/// Tolerance on total mass.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Masses below this are dropped after arithmetic.
pub const PRUNE_BELOW: f64 = 1e-15;
/// Tolerance on fuzzy-partition row sums.
pub const PARTITION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductSpace {
    pub alphabet_size: usize,
    pub dimension: usize,
}

impl ProductSpace {
    pub fn new(alphabet_size: usize, dimension: usize) -> Result<Self> {
        if alphabet_size == 0 || dimension == 0 {
            return Err(Error::InvalidParameter(format!(
                "product space needs alphabet_size >= 1 and dimension >= 1, got {alphabet_size} and {dimension}"
            )));
        }
        if alphabet_size > Symbol::MAX as usize + 1 {
            return Err(Error::InvalidParameter(format!(
                "alphabet_size {alphabet_size} does not fit a {}-bit symbol",
                Symbol::BITS
            )));
        }
        Ok(Self {
            alphabet_size,
            dimension,
        })
    }

    /// `|A|^n`, or `None` on overflow.
    pub fn cube_size(&self) -> Option<usize> {
        self.alphabet_size.checked_pow(self.dimension as u32)
    }

    pub fn contains(&self, word: &[Symbol]) -> bool {
        word.len() == self.dimension && word.iter().all(|&s| (s as usize) < self.alphabet_size)
    }

    /// All words in lexicographic order, refusing cubes larger than `cap`.
    pub fn words(&self, cap: usize) -> Result<Vec<Word>> {
        let size = self
            .cube_size()
            .filter(|&s| s <= cap)
            .ok_or_else(|| Error::CapExceeded {
                what: "cube enumeration".into(),
                size: self.cube_size().unwrap_or(usize::MAX),
                cap,
                hint: "work on supports instead of the full cube".into(),
            })?;
        let mut out = Vec::with_capacity(size);
        let mut w = vec![0 as Symbol; self.dimension];
        for _ in 0..size {
            out.push(w.clone());
            for i in (0..self.dimension).rev() {
                if (w[i] as usize) + 1 < self.alphabet_size {
                    w[i] += 1;
                    break;
                }
                w[i] = 0;
            }
        }
        Ok(out)
    }
}

/// A probability measure on `A^n` stored as a map from words to positive masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct DiscreteMeasure {
    space: ProductSpace,
    atoms: BTreeMap<Word, f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    alphabet_size: usize,
    dimension: usize,
    atoms: Vec<AtomFile>,
}

#[derive(Serialize, Deserialize)]
struct AtomFile {
    word: Vec<i64>,
    mass: f64,
}

impl TryFrom<MeasureFile> for DiscreteMeasure {
    type Error = Error;

    fn try_from(file: MeasureFile) -> Result<Self> {
        let space = ProductSpace::new(file.alphabet_size, file.dimension).map_err(|e| Error::InvalidMeasure {
            path: "alphabet_size".into(),
            msg: e.to_string(),
        })?;
        let mut atoms = Vec::with_capacity(file.atoms.len());
        for (i, atom) in file.atoms.into_iter().enumerate() {
            if atom.word.len() != space.dimension {
                return Err(Error::InvalidMeasure {
                    path: format!("atoms[{i}].word"),
                    msg: format!("length {} but dimension is {}", atom.word.len(), space.dimension),
                });
            }
            let mut word = Word::with_capacity(space.dimension);
            for (j, &s) in atom.word.iter().enumerate() {
                if s < 0 || s as usize >= space.alphabet_size {
                    return Err(Error::InvalidMeasure {
                        path: format!("atoms[{i}].word[{j}]"),
                        msg: format!("symbol {s} outside [0, {})", space.alphabet_size),
                    });
                }
                word.push(s as Symbol);
            }
            atoms.push((word, atom.mass));
        }
        DiscreteMeasure::new(space, atoms)
    }
}

impl From<DiscreteMeasure> for MeasureFile {
    fn from(mu: DiscreteMeasure) -> Self {
        MeasureFile {
            alphabet_size: mu.space.alphabet_size,
            dimension: mu.space.dimension,
            atoms: mu
                .atoms
                .into_iter()
                .map(|(w, mass)| AtomFile {
                    word: w.into_iter().map(i64::from).collect(),
                    mass,
                })
                .collect(),
        }
    }
}

impl DiscreteMeasure {
    /// Strict constructor: masses must be nonnegative, words distinct and in
    /// the space, total mass 1 within [`MASS_TOLERANCE`]. Zero masses are dropped.
    pub fn new(space: ProductSpace, atoms: impl IntoIterator<Item = (Word, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut total = 0.0;
        for (i, (word, mass)) in atoms.into_iter().enumerate() {
            if !space.contains(&word) {
                return Err(Error::InvalidMeasure {
                    path: format!("atoms[{i}].word"),
                    msg: format!("{word:?} is not a word of {}^{}", space.alphabet_size, space.dimension),
                });
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::InvalidMeasure {
                    path: format!("atoms[{i}].mass"),
                    msg: format!("mass {mass} is not a nonnegative number"),
                });
            }
            if map.contains_key(&word) {
                return Err(Error::InvalidMeasure {
                    path: format!("atoms[{i}].word"),
                    msg: format!("duplicate word {word:?}"),
                });
            }
            total += mass;
            if mass > 0.0 {
                map.insert(word, mass);
            }
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure {
                path: "atoms".into(),
                msg: format!("masses sum to {total}, not 1"),
            });
        }
        Ok(Self { space, atoms: map })
    }

    /// Builds a measure from unnormalized nonnegative weights. Repeated words
    /// accumulate; tiny masses are pruned and the result renormalized.
    pub fn from_weights(space: ProductSpace, weights: impl IntoIterator<Item = (Word, f64)>) -> Result<Self> {
        let mut map: BTreeMap<Word, f64> = BTreeMap::new();
        for (word, w) in weights {
            if !space.contains(&word) {
                return Err(Error::SpaceMismatch(format!(
                    "{word:?} is not a word of {}^{}",
                    space.alphabet_size, space.dimension
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "weight {w} is not a nonnegative number"
                )));
            }
            if w > 0.0 {
                *map.entry(word).or_insert(0.0) += w;
            }
        }
        normalize(&mut map)?;
        Ok(Self { space, atoms: map })
    }

    pub fn dirac(space: ProductSpace, word: Word) -> Result<Self> {
        Self::new(space, [(word, 1.0)])
    }

    /// Uniform measure on the given (distinct) words.
    pub fn uniform(space: ProductSpace, words: impl IntoIterator<Item = Word>) -> Result<Self> {
        Self::from_weights(space, words.into_iter().map(|w| (w, 1.0)))
    }

    /// Product of per-coordinate distributions; the alphabet is the longest factor.
    pub fn product(factors: &[Vec<f64>]) -> Result<Self> {
        let a = factors.iter().map(Vec::len).max().unwrap_or(0);
        let space = ProductSpace::new(a, factors.len())?;
        let mut atoms: Vec<(Word, f64)> = vec![(Word::new(), 1.0)];
        for f in factors {
            let mut next = Vec::with_capacity(atoms.len() * f.len());
            for (w, m) in &atoms {
                for (s, &p) in f.iter().enumerate() {
                    if p > 0.0 {
                        let mut w2 = w.clone();
                        w2.push(s as Symbol);
                        next.push((w2, m * p));
                    }
                }
            }
            if next.len() > ENUMERATION_CAP {
                return Err(Error::CapExceeded {
                    what: "product support".into(),
                    size: next.len(),
                    cap: ENUMERATION_CAP,
                    hint: "use fewer coordinates".into(),
                });
            }
            atoms = next;
        }
        Self::from_weights(space, atoms)
    }

    /// `ν^{×n}`.
    pub fn iid(distribution: &[f64], n: usize) -> Result<Self> {
        Self::product(&vec![distribution.to_vec(); n])
    }

    pub fn space(&self) -> ProductSpace {
        self.space
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn alphabet_size(&self) -> usize {
        self.space.alphabet_size
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass(&self, word: &[Symbol]) -> f64 {
        self.atoms.get(word).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Word, f64)> + '_ {
        self.atoms.iter().map(|(w, &m)| (w, m))
    }

    pub fn atoms(&self) -> &BTreeMap<Word, f64> {
        &self.atoms
    }

    pub fn support(&self) -> Vec<Word> {
        self.atoms.keys().cloned().collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.values().copied().collect()
    }

    /// Mass of a set of words.
    pub fn measure_of<'a>(&self, words: impl IntoIterator<Item = &'a Word>) -> f64 {
        words.into_iter().map(|w| self.mass(w)).sum()
    }

    /// `∫ f dμ` for `f` aligned with the support.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.atoms.values().zip(f).map(|(m, v)| m * v).sum()
    }

    /// Evaluates `f` on the support.
    pub fn tabulate(&self, f: impl Fn(&[Symbol]) -> f64) -> Vec<f64> {
        self.atoms.keys().map(|w| f(w)).collect()
    }

    /// Concatenation product `μ × ν` on `A^{n+m}`.
    pub fn product_with(&self, other: &Self) -> Result<Self> {
        if self.alphabet_size() != other.alphabet_size() {
            return Err(Error::SpaceMismatch(format!(
                "alphabets {} and {}",
                self.alphabet_size(),
                other.alphabet_size()
            )));
        }
        let size = self.len().saturating_mul(other.len());
        if size > ENUMERATION_CAP {
            return Err(Error::CapExceeded {
                what: "product support".into(),
                size,
                cap: ENUMERATION_CAP,
                hint: "project to fewer coordinates first".into(),
            });
        }
        let space = ProductSpace::new(self.alphabet_size(), self.dimension() + other.dimension())?;
        let mut atoms = Vec::with_capacity(size);
        for (x, p) in self.iter() {
            for (y, q) in other.iter() {
                let mut w = x.clone();
                w.extend_from_slice(y);
                atoms.push((w, p * q));
            }
        }
        Self::from_weights(space, atoms)
    }

    /// `‖μ − ν‖ = Σ_x |μ(x) − ν(x)|`.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let keys: BTreeSet<&Word> = self.atoms.keys().chain(other.atoms.keys()).collect();
        keys.into_iter().map(|w| (self.mass(w) - other.mass(w)).abs()).sum()
    }

    /// Views `A^{kℓ}` as `(A^ℓ)^k`: consecutive blocks of `block` symbols become one letter.
    pub fn regroup(&self, block: usize) -> Result<Self> {
        let n = self.dimension();
        if block == 0 || !n.is_multiple_of(block) {
            return Err(Error::InvalidParameter(format!(
                "block size {block} does not divide dimension {n}"
            )));
        }
        let a = self
            .alphabet_size()
            .checked_pow(block as u32)
            .filter(|&a| a <= Symbol::MAX as usize + 1)
            .ok_or_else(|| Error::InvalidParameter(format!("alphabet {}^{block} too large", self.alphabet_size())))?;
        let space = ProductSpace::new(a, n / block)?;
        let atoms = self.iter().map(|(w, m)| {
            let grouped = w
                .chunks(block)
                .map(|c| c.iter().fold(0usize, |acc, &s| acc * self.alphabet_size() + s as usize) as Symbol)
                .collect();
            (grouped, m)
        });
        Self::new(space, atoms.collect::<Vec<_>>())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: MeasureFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Json {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        Self::try_from(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serialization cannot fail")
    }
}

fn normalize(map: &mut BTreeMap<Word, f64>) -> Result<()> {
    let total: f64 = map.values().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NullReweighting);
    }
    for v in map.values_mut() {
        *v /= total;
    }
    let before = map.len();
    map.retain(|_, v| *v >= PRUNE_BELOW);
    if map.len() != before {
        let total: f64 = map.values().sum();
        for v in map.values_mut() {
            *v /= total;
        }
    }
    Ok(())
}

/// Pushforward under the projection onto `coords` (in the given order).
pub fn marginal(mu: &DiscreteMeasure, coords: &[usize]) -> Result<DiscreteMeasure> {
    if coords.is_empty() {
        return Err(Error::EmptyProjection);
    }
    let mut seen = BTreeSet::new();
    for &c in coords {
        if c >= mu.dimension() || !seen.insert(c) {
            return Err(Error::InvalidParameter(format!(
                "coordinate {c} out of range or repeated for dimension {}",
                mu.dimension()
            )));
        }
    }
    let space = ProductSpace::new(mu.alphabet_size(), coords.len())?;
    let mut map: BTreeMap<Word, f64> = BTreeMap::new();
    for (w, m) in mu.iter() {
        let proj: Word = coords.iter().map(|&c| w[c]).collect();
        *map.entry(proj).or_insert(0.0) += m;
    }
    Ok(DiscreteMeasure { space, atoms: map })
}

/// `μ|ρ := ρμ / ∫ρ dμ` for `ρ` aligned with the support of `μ`.
pub fn reweight(mu: &DiscreteMeasure, rho: &[f64]) -> Result<DiscreteMeasure> {
    if rho.len() != mu.len() {
        return Err(Error::LengthMismatch(rho.len(), mu.len()));
    }
    if rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidParameter("density must be finite and nonnegative".into()));
    }
    if mu.integrate(rho) <= 0.0 {
        return Err(Error::NullReweighting);
    }
    DiscreteMeasure::from_weights(mu.space, mu.iter().zip(rho).map(|((w, m), r)| (w.clone(), m * r)))
}

/// `μ(· | U)` for `U = {x : keep(x)}`.
pub fn condition(mu: &DiscreteMeasure, keep: impl Fn(&[Symbol]) -> bool) -> Result<DiscreteMeasure> {
    let rho = mu.tabulate(|w| if keep(w) { 1.0 } else { 0.0 });
    reweight(mu, &rho)
}

/// Conditions on an explicit set of words.
pub fn condition_on(mu: &DiscreteMeasure, set: &BTreeSet<Word>) -> Result<DiscreteMeasure> {
    condition(mu, |w| set.contains(w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureRepresentation {
    pub weights: Vec<f64>,
    pub components: Vec<DiscreteMeasure>,
}

impl MixtureRepresentation {
    pub fn new(weights: Vec<f64>, components: Vec<DiscreteMeasure>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::WeightMismatch {
                weights: weights.len(),
                components: components.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let space = components[0].space();
        if let Some(c) = components.iter().find(|c| c.space() != space) {
            return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", c.space(), space)));
        }
        Ok(Self { weights, components })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn space(&self) -> ProductSpace {
        self.components[0].space()
    }
}

/// Atomwise weighted sum of the components.
pub fn mix(rep: &MixtureRepresentation) -> Result<DiscreteMeasure> {
    if rep.weights.len() != rep.components.len() || rep.is_empty() {
        return Err(Error::WeightMismatch {
            weights: rep.weights.len(),
            components: rep.components.len(),
        });
    }
    let space = rep.components[0].space();
    let mut map: BTreeMap<Word, f64> = BTreeMap::new();
    for (p, c) in rep.weights.iter().zip(&rep.components) {
        if c.space() != space {
            return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", c.space(), space)));
        }
        for (w, m) in c.iter() {
            *map.entry(w.clone()).or_insert(0.0) += p * m;
        }
    }
    normalize(&mut map)?;
    Ok(DiscreteMeasure { space, atoms: map })
}

/// Densities `ρ_1, …, ρ_k` on the support of a reference measure, summing to 1 pointwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPartition {
    pub space: ProductSpace,
    pub densities: Vec<Vec<f64>>,
}

impl FuzzyPartition {
    pub fn new(mu: &DiscreteMeasure, densities: Vec<Vec<f64>>) -> Result<Self> {
        if densities.is_empty() {
            return Err(Error::InvalidPartition("no densities".into()));
        }
        for (j, rho) in densities.iter().enumerate() {
            if rho.len() != mu.len() {
                return Err(Error::InvalidPartition(format!(
                    "density {j} has {} values for a support of {}",
                    rho.len(),
                    mu.len()
                )));
            }
            if let Some((i, v)) = rho
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= -PARTITION_TOLERANCE && **v <= 1.0 + PARTITION_TOLERANCE))
            {
                return Err(Error::InvalidPartition(format!(
                    "density {j} takes value {v} at atom {i}"
                )));
            }
        }
        for i in 0..mu.len() {
            let s: f64 = densities.iter().map(|rho| rho[i]).sum();
            if (s - 1.0).abs() > PARTITION_TOLERANCE {
                return Err(Error::InvalidPartition(format!("densities sum to {s} at atom {i}")));
            }
        }
        Ok(Self {
            space: mu.space(),
            densities,
        })
    }

    /// The one-cell partition `(1)`.
    pub fn trivial(mu: &DiscreteMeasure) -> Self {
        Self {
            space: mu.space(),
            densities: vec![vec![1.0; mu.len()]],
        }
    }

    /// Indicator partition from a label per support atom.
    pub fn from_labels(mu: &DiscreteMeasure, labels: &[usize], cells: usize) -> Result<Self> {
        if labels.len() != mu.len() {
            return Err(Error::LengthMismatch(labels.len(), mu.len()));
        }
        let mut densities = vec![vec![0.0; mu.len()]; cells];
        for (i, &l) in labels.iter().enumerate() {
            if l >= cells {
                return Err(Error::InvalidPartition(format!("label {l} out of {cells} cells")));
            }
            densities[l][i] = 1.0;
        }
        Self::new(mu, densities)
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    /// `p_j = ∫ρ_j dμ`.
    pub fn weights(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        self.densities.iter().map(|rho| mu.integrate(rho)).collect()
    }
}

/// Splits `μ` into `Σ p_j μ|ρ_j`, dropping zero-weight cells.
pub fn fuzzy_split(mu: &DiscreteMeasure, fp: &FuzzyPartition) -> Result<MixtureRepresentation> {
    if fp.space != mu.space() {
        return Err(Error::SpaceMismatch(format!("{:?} vs {:?}", fp.space, mu.space())));
    }
    let mut weights = Vec::new();
    let mut components = Vec::new();
    for rho in &fp.densities {
        if rho.len() != mu.len() {
            return Err(Error::LengthMismatch(rho.len(), mu.len()));
        }
        let clipped: Vec<f64> = rho.iter().map(|v| v.max(0.0)).collect();
        let p = mu.integrate(&clipped);
        if p > 0.0 {
            weights.push(p);
            components.push(reweight(mu, &clipped)?);
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    MixtureRepresentation::new(weights, components)
}

/// Joint law of `(ζ, ξ)` where `ζ ~ p` and `ξ | ζ = j ~ μ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hookup {
    pub space: ProductSpace,
    pub weights: Vec<f64>,
    pub joint: BTreeMap<(usize, Word), f64>,
}

impl Hookup {
    pub fn index_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.len()];
        for ((j, _), m) in &self.joint {
            out[*j] += m;
        }
        out
    }

    pub fn space_marginal(&self) -> DiscreteMeasure {
        let mut map: BTreeMap<Word, f64> = BTreeMap::new();
        for ((_, w), m) in &self.joint {
            *map.entry(w.clone()).or_insert(0.0) += m;
        }
        DiscreteMeasure {
            space: self.space,
            atoms: map,
        }
    }
}

pub fn hookup(weights: &[f64], kernel: &[DiscreteMeasure]) -> Result<Hookup> {
    let rep = MixtureRepresentation::new(weights.to_vec(), kernel.to_vec())?;
    let mut joint = BTreeMap::new();
    for (j, (p, c)) in rep.weights.iter().zip(&rep.components).enumerate() {
        for (w, m) in c.iter() {
            if p * m > 0.0 {
                joint.insert((j, w.clone()), p * m);
            }
        }
    }
    Ok(Hookup {
        space: rep.space(),
        weights: rep.weights,
        joint,
    })
}
