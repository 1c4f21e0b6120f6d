//! Independent transportation LP oracle: a dense two-phase simplex with
//! Bland's rule, plus brute-force basis enumeration for tiny instances.

const EPS: f64 = 1e-11;

fn pivot(t: &mut [Vec<f64>], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let row = t[r].clone();
    for (i, other) in t.iter_mut().enumerate() {
        let f = other[c];
        if i != r && f != 0.0 {
            for (v, rv) in other.iter_mut().zip(&row) {
                *v -= f * rv;
            }
        }
    }
}

fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Option<()> {
    let rhs = t[0].len() - 1;
    loop {
        let entering = (0..allowed).find(|&j| {
            let z: f64 = t.iter().zip(basis.iter()).map(|(row, &b)| cost[b] * row[j]).sum();
            cost[j] - z < -EPS
        });
        let Some(j) = entering else { return Some(()) };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][j] > EPS {
                let ratio = t[i][rhs] / t[i][j];
                best = match best {
                    Some((bi, br)) if ratio > br + EPS || (ratio > br - EPS && basis[bi] < basis[i]) => Some((bi, br)),
                    _ => Some((i, ratio)),
                };
            }
        }
        let (i, _) = best?;
        pivot(t, i, j);
        basis[i] = j;
    }
}

/// min c·x subject to A x = b, x ≥ 0. `None` if infeasible or unbounded.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let (m, nv) = (a.len(), c.len());
    let width = nv + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for j in 0..nv {
                row[j] = s * a[i][j];
            }
            row[nv + i] = 1.0;
            row[width - 1] = s * b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (nv..nv + m).collect();
    let mut phase1 = vec![0.0; nv + m];
    phase1[nv..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, nv + m)?;
    let infeasibility: f64 = t.iter().zip(&basis).map(|(row, &b)| phase1[b] * row[width - 1]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, i, j);
                basis[i] = j;
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    let mut cost = c.to_vec();
    cost.resize(nv + m, 0.0);
    run(&mut t, &mut basis, &cost, nv)?;
    Some(t.iter().zip(&basis).map(|(row, &b)| cost[b] * row[width - 1]).sum())
}

fn normalized_hamming(x: &[u16], y: &[u16]) -> f64 {
    x.iter().zip(y).filter(|(a, b)| a != b).count() as f64 / x.len() as f64
}

fn constraints(a: &[f64], b: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (m, k) = (a.len(), b.len());
    let mut rows = Vec::new();
    for i in 0..m {
        rows.push((0..m * k).map(|v| if v / k == i { 1.0 } else { 0.0 }).collect());
    }
    for j in 0..k {
        rows.push((0..m * k).map(|v| if v % k == j { 1.0 } else { 0.0 }).collect());
    }
    (rows, a.iter().chain(b).copied().collect())
}

/// Optimal transport cost between weighted word lists under `d_n`.
pub fn transport_lp(xs: &[Vec<u16>], a: &[f64], ys: &[Vec<u16>], b: &[f64]) -> f64 {
    let (rows, rhs) = constraints(a, b);
    let c: Vec<f64> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| normalized_hamming(x, y)))
        .collect();
    simplex_min(&rows, &rhs, &c).expect("transportation LP is feasible and bounded")
}

fn solve_square(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[p][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, p);
        v.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in 0..n {
                    m[r][c] -= f * m[col][c];
                }
                v[r] -= f * v[col];
            }
        }
    }
    Some((0..n).map(|i| v[i] / m[i][i]).collect())
}

/// Minimum over all basic feasible solutions; exponential, for ≤ 3×3 only.
pub fn transport_by_bases(xs: &[Vec<u16>], a: &[f64], ys: &[Vec<u16>], b: &[f64]) -> f64 {
    let (rows, rhs) = constraints(a, b);
    let (rows, rhs) = (&rows[..rows.len() - 1], &rhs[..rhs.len() - 1]);
    let vars = xs.len() * ys.len();
    let size = rows.len();
    let c: Vec<f64> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| normalized_hamming(x, y)))
        .collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << vars) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let cols: Vec<usize> = (0..vars).filter(|v| mask >> v & 1 == 1).collect();
        let m = rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
        if let Some(x) = solve_square(m, rhs.to_vec()) {
            if x.iter().all(|&v| v > -1e-12) {
                best = best.min(cols.iter().zip(&x).map(|(&c_, v)| c[c_] * v).sum());
            }
        }
    }
    best
}
