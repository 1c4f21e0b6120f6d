use hc_core::concentration::{refute_t, RefutationBudget};
use hc_core::decompose::PipelineConfig;
use hc_core::measures::{mix, DiscreteMeasure, MixtureRepresentation, ProductSpace, Word};
use rand::seq::SliceRandom;
use rand::Rng;

use super::fixtures::{random_word, rng};

pub struct Fixture {
    pub name: String,
    pub measure: DiscreteMeasure,
}

fn fixture(name: String, measure: DiscreteMeasure) -> Fixture {
    Fixture { name, measure }
}

/// `w·δ_x + (1−w)·δ_y` with `x` and `y` differing in at least `n/2` places.
pub fn two_cluster(n: usize, a: usize, seed: u64) -> DiscreteMeasure {
    let mut r = rng(seed);
    let x = random_word(&mut r, a, n);
    let mut y = x.clone();
    let mut coords: Vec<usize> = (0..n).collect();
    coords.shuffle(&mut r);
    let flips = r.gen_range(n.div_ceil(2)..=n);
    for &i in &coords[..flips] {
        y[i] = ((y[i] as usize + r.gen_range(1..a)) % a) as u16;
    }
    let w = r.gen_range(0.3..0.7);
    DiscreteMeasure::from_weights(ProductSpace::new(a, n).unwrap(), vec![(x, w), (y, 1.0 - w)]).unwrap()
}

/// Uniform on `x` and its Hamming neighbours, mixed evenly with the same around the complement of `x`.
pub fn two_balls(n: usize, seed: u64) -> DiscreteMeasure {
    let mut r = rng(seed);
    let x = random_word(&mut r, 2, n);
    let y: Word = x.iter().map(|s| 1 - s).collect();
    let ball = |c: &Word| {
        let mut v = vec![(c.clone(), 1.0)];
        for i in 0..n {
            let mut w = c.clone();
            w[i] = 1 - w[i];
            v.push((w, 1.0));
        }
        v
    };
    let mut atoms = ball(&x);
    atoms.extend(ball(&y));
    DiscreteMeasure::from_weights(ProductSpace::new(2, n).unwrap(), atoms).unwrap()
}

/// Uniform on the binary code spanned by `k` random generators.
pub fn linear_code(n: usize, k: usize, seed: u64) -> DiscreteMeasure {
    let mut r = rng(seed);
    let gens: Vec<Word> = (0..k).map(|_| random_word(&mut r, 2, n)).collect();
    let words = (0..1usize << k).map(|m| {
        (0..n)
            .map(|i| (0..k).filter(|&j| m >> j & 1 == 1).map(|j| gens[j][i]).sum::<u16>() % 2)
            .collect::<Word>()
    });
    DiscreteMeasure::uniform(ProductSpace::new(2, n).unwrap(), words).unwrap()
}

/// Uniform on a coset `z + C` of a random binary code.
pub fn coset(n: usize, k: usize, seed: u64) -> DiscreteMeasure {
    let c = linear_code(n, k, seed);
    let mut r = rng(seed ^ 0xC05E7);
    let z = random_word(&mut r, 2, n);
    let words = c
        .support()
        .into_iter()
        .map(|w| w.iter().zip(&z).map(|(a, b)| (a + b) % 2).collect::<Word>());
    DiscreteMeasure::uniform(c.space(), words).unwrap()
}

/// Pairs of coordinates repeat one uniform symbol.
pub fn diagonal_code(n: usize, a: usize) -> DiscreteMeasure {
    let space = ProductSpace::new(a, n).unwrap();
    let words = space
        .words(1 << 16)
        .unwrap()
        .into_iter()
        .filter(|w| (0..n / 2).all(|i| w[2 * i] == w[2 * i + 1]));
    DiscreteMeasure::uniform(space, words).unwrap()
}

/// `(ν_p^{×n} + ν_q^{×n})/2` for binary `ν_p(1) = p`.
pub fn prod_mix(n: usize, p: f64, q: f64) -> DiscreteMeasure {
    let a = DiscreteMeasure::iid(&[1.0 - p, p], n).unwrap();
    let b = DiscreteMeasure::iid(&[1.0 - q, q], n).unwrap();
    mix(&MixtureRepresentation::new(vec![0.5, 0.5], vec![a, b]).unwrap()).unwrap()
}

/// Refuted at the recursion parameters of the desk preset with `r = 0.3`.
pub fn is_non_concentrated(mu: &DiscreteMeasure) -> bool {
    let cfg = PipelineConfig::desk(0.3, 0.3);
    let params = cfg.recursion_params(0.3, mu.dimension());
    refute_t(mu, &params, &RefutationBudget::default()).unwrap().refuted()
}

fn take_refuted(out: &mut Vec<Fixture>, count: usize, candidates: impl Iterator<Item = Fixture>) {
    let mut seen: Vec<DiscreteMeasure> = out.iter().map(|f| f.measure.clone()).collect();
    let mut taken = 0;
    for f in candidates {
        if taken == count {
            break;
        }
        if !seen.contains(&f.measure) && is_non_concentrated(&f.measure) {
            seen.push(f.measure.clone());
            out.push(f);
            taken += 1;
        }
    }
    assert_eq!(taken, count, "candidate family exhausted");
}

/// Fifty non-concentrated fixtures: two-cluster, two-ball, code, coset and product-mixture types with `n ≤ 8`.
pub fn non_concentrated() -> Vec<Fixture> {
    let mut out = Vec::new();
    take_refuted(
        &mut out,
        16,
        (0..400u64).map(|s| {
            let n = 4 + (s % 5) as usize;
            let a = 2 + (s / 5 % 2) as usize;
            fixture(format!("two-cluster n={n} |A|={a} seed={s}"), two_cluster(n, a, s))
        }),
    );
    take_refuted(
        &mut out,
        4,
        (0..100u64).map(|s| {
            let n = 7 + (s % 2) as usize;
            fixture(format!("two-balls n={n} seed={s}"), two_balls(n, s))
        }),
    );
    take_refuted(
        &mut out,
        12,
        (0..400u64).map(|s| {
            let n = 5 + (s % 4) as usize;
            let k = 1 + (s / 4 % 2) as usize;
            fixture(format!("code n={n} k={k} seed={s}"), linear_code(n, k, s))
        }),
    );
    take_refuted(
        &mut out,
        8,
        (0..400u64).map(|s| {
            let n = 5 + (s % 4) as usize;
            fixture(format!("coset n={n} k=2 seed={s}"), coset(n, 2, s))
        }),
    );
    let pairs = [(0.1, 0.9), (0.05, 0.8), (0.2, 0.9), (0.1, 0.7), (0.15, 0.95)];
    take_refuted(
        &mut out,
        10,
        [4usize, 5, 6].into_iter().flat_map(|n| {
            pairs
                .into_iter()
                .map(move |(p, q)| fixture(format!("prod-mix n={n} p={p} q={q}"), prod_mix(n, p, q)))
        }),
    );
    out
}

/// Product measures on which no decrement split may fire.
pub fn products() -> Vec<Fixture> {
    let mut out = Vec::new();
    for (n, p) in [(4, 0.5), (5, 0.3), (6, 0.1), (6, 0.5), (8, 0.2)] {
        out.push(fixture(
            format!("iid n={n} p={p}"),
            DiscreteMeasure::iid(&[1.0 - p, p], n).unwrap(),
        ));
    }
    let mut r = rng(600);
    for n in [3, 4, 5] {
        let factors: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| r.gen_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        out.push(fixture(
            format!("product n={n} |A|=3"),
            DiscreteMeasure::product(&factors).unwrap(),
        ));
    }
    let space = ProductSpace::new(2, 6).unwrap();
    out.push(fixture(
        "point mass n=6".into(),
        DiscreteMeasure::dirac(space, vec![0, 1, 0, 1, 1, 0]).unwrap(),
    ));
    out
}
