use hc_core::measures::{DiscreteMeasure, ProductSpace, Word};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_word(rng: &mut ChaCha8Rng, a: usize, n: usize) -> Word {
    (0..n).map(|_| rng.gen_range(0..a) as u16).collect()
}

/// Random measure with at most `max_support` atoms.
pub fn random_measure(rng: &mut ChaCha8Rng, a: usize, n: usize, max_support: usize) -> DiscreteMeasure {
    let space = ProductSpace::new(a, n).unwrap();
    let k = rng.gen_range(1..=max_support);
    let atoms: Vec<(Word, f64)> = (0..k)
        .map(|_| (random_word(rng, a, n), rng.gen_range(0.05..1.0)))
        .collect();
    DiscreteMeasure::from_weights(space, atoms).unwrap()
}

/// Random product of per-coordinate distributions.
pub fn random_product(rng: &mut ChaCha8Rng, a: usize, n: usize) -> DiscreteMeasure {
    let factors: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..a).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    DiscreteMeasure::product(&factors).unwrap()
}

/// Uniform measure on `{x ∈ (Z/q)^n : Σ x_i = 0 mod q}`.
pub fn sum_zero(q: usize, n: usize) -> DiscreteMeasure {
    let space = ProductSpace::new(q, n).unwrap();
    let words = space
        .words(1 << 20)
        .unwrap()
        .into_iter()
        .filter(|w| w.iter().map(|&s| s as usize).sum::<usize>() % q == 0);
    DiscreteMeasure::uniform(space, words).unwrap()
}
