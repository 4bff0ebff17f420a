//! Brute-force reference computations, deliberately independent of the crate's numerics.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Standard normal CDF by composite Simpson quadrature of the density on `[0, |x|]`.
pub fn normal_cdf(x: f64) -> f64 {
    let n = 4000;
    let h = x.abs() / n as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = phi(0.0) + phi(x.abs());
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * phi(i as f64 * h);
    }
    let half = sum * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

thread_local! {
    static QUANTILES: std::cell::RefCell<BTreeMap<u64, f64>> = const { std::cell::RefCell::new(BTreeMap::new()) };
}

/// Quantile by bisection on [`normal_cdf`], memoised per probability.
pub fn normal_quantile(p: f64) -> f64 {
    if let Some(q) = QUANTILES.with(|m| m.borrow().get(&p.to_bits()).copied()) {
        return q;
    }
    let q = bisect_quantile(p);
    QUANTILES.with(|m| m.borrow_mut().insert(p.to_bits(), q));
    q
}

fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn se_from_ci(lower: f64, upper: f64, level: f64) -> f64 {
    (upper - lower) / (2.0 * normal_quantile(0.5 + level / 2.0))
}

/// Gauss-Jordan inverse with partial pivoting. Panics on a singular matrix.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        assert!(m[pivot][col].abs() > 1e-300, "singular matrix");
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, p) in m[row].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

#[derive(Clone, Debug)]
pub struct Row {
    pub trial: String,
    pub treatment: usize,
    pub comparator: usize,
    pub md: f64,
    pub se: f64,
}

/// Pairwise estimates `md[a][b]` and `se[a][b]` for all treatments.
#[derive(Clone, Debug)]
pub struct Pairwise {
    pub md: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

/// Dense GLS with explicit inverses. `arm_var[(trial, treatment)]` supplies shared-arm
/// variances; rows of one trial are correlated through every arm they share.
pub fn dense_gls(n: usize, rows: &[Row], arm_var: &BTreeMap<(String, usize), f64>, reference: usize) -> Pairwise {
    let cols: Vec<usize> = (0..n).filter(|&t| t != reference).collect();
    let col = |t: usize| cols.iter().position(|&c| c == t);
    let m = rows.len();
    let mut x = vec![vec![0.0; cols.len()]; m];
    let mut y = vec![vec![0.0]; m];
    let mut sigma = vec![vec![0.0; m]; m];
    for (i, r) in rows.iter().enumerate() {
        if let Some(j) = col(r.treatment) {
            x[i][j] += 1.0;
        }
        if let Some(j) = col(r.comparator) {
            x[i][j] -= 1.0;
        }
        y[i][0] = r.md;
        sigma[i][i] = r.se * r.se;
        for (j, s) in rows.iter().enumerate() {
            if i == j || r.trial != s.trial {
                continue;
            }
            let v = |t: usize| arm_var[&(r.trial.clone(), t)];
            let mut c = 0.0;
            if r.treatment == s.treatment {
                c += v(r.treatment);
            }
            if r.treatment == s.comparator {
                c -= v(r.treatment);
            }
            if r.comparator == s.treatment {
                c -= v(r.comparator);
            }
            if r.comparator == s.comparator {
                c += v(r.comparator);
            }
            sigma[i][j] = c;
        }
    }
    let w = invert(&sigma);
    let xt = transpose(&x);
    let xtw = matmul(&xt, &w);
    let cov = invert(&matmul(&xtw, &x));
    let theta = matmul(&cov, &matmul(&xtw, &y));

    let full = |t: usize| col(t).map(|j| theta[j][0]).unwrap_or(0.0);
    let cv = |a: usize, b: usize| match (col(a), col(b)) {
        (Some(i), Some(j)) => cov[i][j],
        _ => 0.0,
    };
    let mut md = vec![vec![0.0; n]; n];
    let mut se = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            md[a][b] = full(a) - full(b);
            se[a][b] = (cv(a, a) + cv(b, b) - 2.0 * cv(a, b)).max(0.0).sqrt();
        }
    }
    Pairwise { md, se }
}

/// Fixed-effects estimates from the weighted Laplacian pseudoinverse, for networks of
/// independent two-arm rows.
pub fn laplacian_pseudoinverse_nma(n: usize, rows: &[Row]) -> Pairwise {
    let mut l = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for r in rows {
        let w = 1.0 / (r.se * r.se);
        let (a, c) = (r.treatment, r.comparator);
        l[a][a] += w;
        l[c][c] += w;
        l[a][c] -= w;
        l[c][a] -= w;
        b[a] += w * r.md;
        b[c] -= w * r.md;
    }
    let j = 1.0 / n as f64;
    let shifted: Vec<Vec<f64>> = l.iter().map(|row| row.iter().map(|v| v + j).collect()).collect();
    let lp: Vec<Vec<f64>> = invert(&shifted).iter().map(|row| row.iter().map(|v| v - j).collect()).collect();
    let potential: Vec<f64> = (0..n).map(|i| (0..n).map(|k| lp[i][k] * b[k]).sum()).collect();
    let mut md = vec![vec![0.0; n]; n];
    let mut se = vec![vec![0.0; n]; n];
    for a in 0..n {
        for c in 0..n {
            md[a][c] = potential[a] - potential[c];
            se[a][c] = (lp[a][a] + lp[c][c] - 2.0 * lp[a][c]).max(0.0).sqrt();
        }
    }
    Pairwise { md, se }
}

/// Connectivity by repeated edge relaxation from node 0.
pub fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut reached = vec![false; n];
    if n == 0 {
        return true;
    }
    reached[0] = true;
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            if reached[a] != reached[b] {
                reached[a] = true;
                reached[b] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    reached.iter().all(|&r| r)
}

/// Component count by the same relaxation, seeded from each unreached node.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    for seed in 0..n {
        if label[seed].is_some() {
            continue;
        }
        label[seed] = Some(count);
        loop {
            let mut changed = false;
            for &(a, b) in edges {
                match (label[a], label[b]) {
                    (Some(x), None) if x == count => {
                        label[b] = Some(count);
                        changed = true;
                    }
                    (None, Some(x)) if x == count => {
                        label[a] = Some(count);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        count += 1;
    }
    count
}
