//! Brute-force reference implementations used by the integration tests.
//! Everything here enumerates or solves directly and shares no code with
//! the library's inference routines.

#![allow(dead_code)]

use pitchchain::hmm::HmmParams;
use pitchchain::variants::{ArhmmParams, FhmmParams, HsmmParams, KhmmParams, TshmmParams};

/// Calls `f` with every sequence in `0..radix` of length `len`.
pub fn for_each_path(radix: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut z = vec![0; len];
    loop {
        f(&z);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            z[i] += 1;
            if z[i] < radix {
                break;
            }
            z[i] = 0;
        }
    }
}

pub fn hmm_joint(p: &HmmParams, z: &[usize], x: &[usize]) -> f64 {
    let (n, k) = (p.n_states, p.n_symbols);
    let mut prob = p.initial[z[0]] * p.emission[z[0] * k + x[0]];
    for t in 1..z.len() {
        prob *= p.transition[z[t - 1] * n + z[t]] * p.emission[z[t] * k + x[t]];
    }
    prob
}

pub fn hmm_likelihood(p: &HmmParams, x: &[usize]) -> f64 {
    let mut total = 0.0;
    for_each_path(p.n_states, x.len(), |z| total += hmm_joint(p, z, x));
    total
}

pub fn hmm_best_path_prob(p: &HmmParams, x: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for_each_path(p.n_states, x.len(), |z| best = best.max(hmm_joint(p, z, x)));
    best
}

pub fn khmm_joint(p: &KhmmParams, z: &[usize], x: &[usize]) -> f64 {
    let (n, k, ks) = (p.n_states, p.order, p.n_symbols);
    let mut prob = p.initial[z[0]] * p.emission[z[0] * ks + x[0]];
    for t in 1..z.len() {
        let hist = &z[t.saturating_sub(k)..t];
        let code = hist.iter().fold(0, |acc, &s| acc * n + s);
        let table = if hist.len() == k { &p.transition } else { &p.warmup[hist.len() - 1] };
        prob *= table[code * n + z[t]] * p.emission[z[t] * ks + x[t]];
    }
    prob
}

pub fn khmm_likelihood(p: &KhmmParams, x: &[usize]) -> f64 {
    let mut total = 0.0;
    for_each_path(p.n_states, x.len(), |z| total += khmm_joint(p, z, x));
    total
}

pub fn arhmm_likelihood(p: &ArhmmParams, x: &[usize]) -> f64 {
    let (n, k) = (p.n_states, p.n_symbols);
    let mut total = 0.0;
    for_each_path(n, x.len(), |z| {
        let mut prob = p.initial[z[0]] * p.initial_emission[z[0] * k + x[0]];
        for t in 1..z.len() {
            prob *= p.transition[z[t - 1] * n + z[t]] * p.emission[(z[t] * k + x[t - 1]) * k + x[t]];
        }
        total += prob;
    });
    total
}

/// Sum over every segmentation of `x` into complete segments.
pub fn hsmm_likelihood(p: &HsmmParams, x: &[usize]) -> f64 {
    fn segments(p: &HsmmParams, x: &[usize], t: usize, prev: Option<usize>) -> f64 {
        let (n, k, dmax) = (p.n_states, p.n_symbols, p.max_duration);
        let mut total = 0.0;
        for j in 0..n {
            let enter = match prev {
                None => p.initial[j],
                Some(i) => p.transition[i * n + j],
            };
            if enter == 0.0 {
                continue;
            }
            let mut emit = 1.0;
            for d in 1..=dmax {
                if t + d > x.len() {
                    break;
                }
                emit *= p.emission[j * k + x[t + d - 1]];
                let w = enter * p.duration[j * dmax + d - 1] * emit;
                total += if t + d == x.len() { w } else { w * segments(p, x, t + d, Some(j)) };
            }
        }
        total
    }
    segments(p, x, 0, None)
}

pub fn tshmm_likelihood(p: &TshmmParams, x: &[usize]) -> f64 {
    let (m1, m2, k) = (p.m1, p.m2, p.n_symbols);
    let len = x.len();
    let mut total = 0.0;
    for_each_path(m2, len, |r| {
        for_each_path(m1, len, |s| {
            let mut prob = p.initial[r[0] * m1 + s[0]] * p.emission[s[0] * k + x[0]];
            for t in 1..len {
                prob *= p.c[r[t - 1] * m2 + r[t]]
                    * p.d[(r[t] * m1 + s[t - 1]) * m1 + s[t]]
                    * p.emission[s[t] * k + x[t]];
            }
            total += prob;
        });
    });
    total
}

/// Rounded mean of 1-based ordinals, halves up, as a 0-based row.
pub fn fhmm_row(states: &[usize]) -> usize {
    let mean = states.iter().map(|&s| (s + 1) as f64).sum::<f64>() / states.len() as f64;
    (mean + 0.5).floor() as usize - 1
}

pub fn fhmm_likelihood(p: &FhmmParams, x: &[usize]) -> f64 {
    let m = p.sizes.len();
    let joint: usize = p.sizes.iter().product();
    let k = p.n_symbols;
    let split = |mut code: usize| -> Vec<usize> {
        let mut s = vec![0; m];
        for c in (0..m).rev() {
            s[c] = code % p.sizes[c];
            code /= p.sizes[c];
        }
        s
    };
    let mut total = 0.0;
    for_each_path(joint, x.len(), |z| {
        let states: Vec<Vec<usize>> = z.iter().map(|&c| split(c)).collect();
        let mut prob = 1.0;
        for (t, s) in states.iter().enumerate() {
            for c in 0..m {
                let sz = p.sizes[c];
                prob *= if t == 0 {
                    p.initial[c][s[c]]
                } else {
                    p.transition[c][states[t - 1][c] * sz + s[c]]
                };
            }
            prob *= p.emission[fhmm_row(s) * k + x[t]];
        }
        total += prob;
    });
    total
}

/// Minimum cost over all alignments, by exhaustive recursion.
pub fn edit_distance_brute(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_distance_brute(ra, rb) + usize::from(x != y);
            let del = edit_distance_brute(ra, b) + 1;
            let ins = edit_distance_brute(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

pub fn naive_sum(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    s
}

pub fn kahan_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot_row = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot_row[col];
            for (v, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Static conjugate AR(p) regression with prior mean zero and prior
/// scale-free covariance `prior_scale * I`: returns the posterior mean and
/// `d`, the posterior sum of squares.
pub fn batch_regression(series: &[f64], p: usize, prior_scale: f64, d0: f64) -> (Vec<f64>, f64) {
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    let mut yy = 0.0;
    for t in p..series.len() {
        let f: Vec<f64> = (1..=p).map(|j| series[t - j]).collect();
        for i in 0..p {
            xty[i] += f[i] * series[t];
            for j in 0..p {
                xtx[i][j] += f[i] * f[j];
            }
        }
        yy += series[t] * series[t];
    }
    let mut prec = xtx;
    for (i, row) in prec.iter_mut().enumerate() {
        row[i] += 1.0 / prior_scale;
    }
    let m = solve(prec.clone(), xty.clone());
    let quad: f64 = m.iter().zip(&xty).map(|(a, b)| a * b).sum();
    (m, d0 + yy - quad)
}

fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Discounted scale-free DLM for an AR(p) regression written with plain
/// vectors. Returns the one-step predictive log densities, one per filtered
/// step, starting at time `p`.
pub fn dlm_log_predictive(
    series: &[f64],
    p: usize,
    delta: f64,
    beta: f64,
    prior_scale: f64,
    n0: f64,
    s0: f64,
) -> Vec<f64> {
    let mut m = vec![0.0; p];
    let mut c: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { prior_scale } else { 0.0 }).collect())
        .collect();
    let (mut n, mut d) = (n0, n0 * s0);
    let mut out = Vec::new();
    for t in p..series.len() {
        let f: Vec<f64> = (1..=p).map(|j| series[t - j]).collect();
        let r: Vec<Vec<f64>> = c.iter().map(|row| row.iter().map(|v| v / delta).collect()).collect();
        let rf: Vec<f64> = r.iter().map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
        let q = f.iter().zip(&rf).map(|(a, b)| a * b).sum::<f64>() + 1.0;
        let (nb, db) = (beta * n, beta * d);
        let scale2 = db / nb * q;
        let e = series[t] - f.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
        let lp = lgamma((nb + 1.0) / 2.0)
            - lgamma(nb / 2.0)
            - 0.5 * (nb * std::f64::consts::PI * scale2).ln()
            - (nb + 1.0) / 2.0 * (1.0 + e * e / (nb * scale2)).ln();
        out.push(lp);
        for i in 0..p {
            m[i] += rf[i] / q * e;
        }
        for i in 0..p {
            for j in 0..p {
                c[i][j] = r[i][j] - rf[i] * rf[j] / q;
            }
        }
        n = nb + 1.0;
        d = db + e * e / q;
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}
