//! Scaled forward-backward, Viterbi and forward-filter backward-sample over
//! a first-order chain whose transition operator is pluggable.
//!
//! Every model in the crate reduces to a first-order chain on some expanded
//! state space (state tuples, (regime, state) pairs, duration counters,
//! products of independent chains). The variants only differ in how the
//! transition operator is stored and how pairwise expectations are
//! accumulated, which is what [`Transition`] abstracts.
//!
//! Emission likelihoods are passed as a dense `T x N` row-major matrix
//! `lik[t * N + i] = p(x_t | z_t = i, ...)`, so time-varying emissions
//! (autoregressive ones in particular) need no special handling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hmm::sample_categorical;

/// Transition operator of a first-order chain.
pub trait Transition {
    /// Expected pairwise-transition statistics, in whatever layout the
    /// operator's M-step wants.
    type Counts;

    fn n_states(&self) -> usize;

    /// `next[j] = sum_i prev[i] * A[i][j]`
    fn push_forward(&self, prev: &[f64], next: &mut [f64]);

    /// `out[i] = sum_j A[i][j] * w[j]`
    fn pull_backward(&self, w: &[f64], out: &mut [f64]);

    /// Visits every structurally non-zero entry `(i, j, A[i][j])`.
    fn for_each_edge(&self, f: &mut dyn FnMut(usize, usize, f64));

    fn new_counts(&self) -> Self::Counts;

    /// Adds `norm * alpha[i] * A[i][j] * w[j]` for every edge.
    fn accumulate(&self, alpha: &[f64], w: &[f64], norm: f64, counts: &mut Self::Counts);
}

/// Row-major `n x n` matrix.
#[derive(Debug, Clone, Copy)]
pub struct DenseTransition<'a> {
    n: usize,
    probs: &'a [f64],
}

impl<'a> DenseTransition<'a> {
    pub fn new(n: usize, probs: &'a [f64]) -> Self {
        assert_eq!(probs.len(), n * n, "dense transition must be n x n");
        DenseTransition { n, probs }
    }
}

impl Transition for DenseTransition<'_> {
    type Counts = Vec<f64>;

    fn n_states(&self) -> usize {
        self.n
    }

    fn push_forward(&self, prev: &[f64], next: &mut [f64]) {
        next.fill(0.0);
        for (i, &a) in prev.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.probs[i * self.n..(i + 1) * self.n];
            for (dst, &p) in next.iter_mut().zip(row) {
                *dst += a * p;
            }
        }
    }

    fn pull_backward(&self, w: &[f64], out: &mut [f64]) {
        for (i, dst) in out.iter_mut().enumerate() {
            let row = &self.probs[i * self.n..(i + 1) * self.n];
            *dst = row.iter().zip(w).map(|(p, x)| p * x).sum();
        }
    }

    fn for_each_edge(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for i in 0..self.n {
            for j in 0..self.n {
                let p = self.probs[i * self.n + j];
                if p > 0.0 {
                    f(i, j, p);
                }
            }
        }
    }

    fn new_counts(&self) -> Vec<f64> {
        vec![0.0; self.n * self.n]
    }

    fn accumulate(&self, alpha: &[f64], w: &[f64], norm: f64, counts: &mut Vec<f64>) {
        for (i, &a) in alpha.iter().enumerate() {
            let a = a * norm;
            if a == 0.0 {
                continue;
            }
            let row = &self.probs[i * self.n..(i + 1) * self.n];
            let acc = &mut counts[i * self.n..(i + 1) * self.n];
            for ((c, &p), &x) in acc.iter_mut().zip(row).zip(w) {
                *c += a * p * x;
            }
        }
    }
}

/// Compressed sparse rows, with a column index kept alongside for
/// backward sampling. Counts are aligned with edge order.
#[derive(Debug, Clone)]
pub struct SparseTransition {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
    sources: Vec<usize>,
    // edges entering each state, as indices into `cols`/`probs`
    col_ptr: Vec<usize>,
    col_edges: Vec<usize>,
}

impl SparseTransition {
    /// Builds from per-row `(target, probability)` lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        let mut sources = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, p) in row {
                debug_assert!(j < n);
                sources.push(i);
                cols.push(j);
                probs.push(p);
            }
            row_ptr.push(cols.len());
        }
        let mut in_degree = vec![0usize; n + 1];
        for &j in &cols {
            in_degree[j + 1] += 1;
        }
        for j in 0..n {
            in_degree[j + 1] += in_degree[j];
        }
        let col_ptr = in_degree.clone();
        let mut fill = in_degree;
        let mut col_edges = vec![0; cols.len()];
        for (e, &j) in cols.iter().enumerate() {
            col_edges[fill[j]] = e;
            fill[j] += 1;
        }
        SparseTransition {
            n,
            row_ptr,
            cols,
            probs,
            sources,
            col_ptr,
            col_edges,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.cols.len()
    }

    /// Source state of edge `e`.
    pub fn edge_source(&self, e: usize) -> usize {
        self.sources[e]
    }

    pub fn edge_target(&self, e: usize) -> usize {
        self.cols[e]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.probs[range].iter().copied())
    }

    /// Edges `(source, probability)` entering `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_edges[self.col_ptr[j]..self.col_ptr[j + 1]]
            .iter()
            .map(move |&e| (self.edge_source(e), self.probs[e]))
    }
}

impl Transition for SparseTransition {
    type Counts = Vec<f64>;

    fn n_states(&self) -> usize {
        self.n
    }

    fn push_forward(&self, prev: &[f64], next: &mut [f64]) {
        next.fill(0.0);
        for (i, &a) in prev.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                next[self.cols[e]] += a * self.probs[e];
            }
        }
    }

    fn pull_backward(&self, w: &[f64], out: &mut [f64]) {
        for (i, dst) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.probs[e] * w[self.cols[e]];
            }
            *dst = s;
        }
    }

    fn for_each_edge(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for i in 0..self.n {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                f(i, self.cols[e], self.probs[e]);
            }
        }
    }

    fn new_counts(&self) -> Vec<f64> {
        vec![0.0; self.cols.len()]
    }

    fn accumulate(&self, alpha: &[f64], w: &[f64], norm: f64, counts: &mut Vec<f64>) {
        for (i, &a) in alpha.iter().enumerate() {
            let a = a * norm;
            if a == 0.0 {
                continue;
            }
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                counts[e] += a * self.probs[e] * w[self.cols[e]];
            }
        }
    }
}

/// Product of independent chains. Joint state index is mixed-radix with
/// chain 0 most significant. Counts are the per-chain marginal pairwise
/// expectations.
#[derive(Debug, Clone)]
pub struct KroneckerTransition<'a> {
    sizes: Vec<usize>,
    factors: Vec<&'a [f64]>,
    n: usize,
}

impl<'a> KroneckerTransition<'a> {
    pub fn new(sizes: Vec<usize>, factors: Vec<&'a [f64]>) -> Self {
        assert_eq!(sizes.len(), factors.len());
        for (s, f) in sizes.iter().zip(&factors) {
            assert_eq!(f.len(), s * s, "chain factor must be square");
        }
        let n = sizes.iter().product();
        KroneckerTransition { sizes, factors, n }
    }

    fn strides(&self, axis: usize) -> (usize, usize, usize) {
        let outer: usize = self.sizes[..axis].iter().product();
        let inner: usize = self.sizes[axis + 1..].iter().product();
        (outer, self.sizes[axis], inner)
    }

    /// `out[o, b, k] = sum_a cur[o, a, k] * F[a][b]`
    fn apply_axis(&self, axis: usize, cur: &[f64], out: &mut [f64]) {
        let (outer, m, inner) = self.strides(axis);
        let f = self.factors[axis];
        out.fill(0.0);
        for o in 0..outer {
            for a in 0..m {
                let src = &cur[(o * m + a) * inner..(o * m + a + 1) * inner];
                for b in 0..m {
                    let p = f[a * m + b];
                    if p == 0.0 {
                        continue;
                    }
                    let dst = &mut out[(o * m + b) * inner..(o * m + b + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += p * s;
                    }
                }
            }
        }
    }

    /// `out[o, a, k] = sum_b F[a][b] * cur[o, b, k]`
    fn apply_axis_transposed(&self, axis: usize, cur: &[f64], out: &mut [f64]) {
        let (outer, m, inner) = self.strides(axis);
        let f = self.factors[axis];
        out.fill(0.0);
        for o in 0..outer {
            for a in 0..m {
                for b in 0..m {
                    let p = f[a * m + b];
                    if p == 0.0 {
                        continue;
                    }
                    let (src_start, dst_start) = ((o * m + b) * inner, (o * m + a) * inner);
                    for k in 0..inner {
                        out[dst_start + k] += p * cur[src_start + k];
                    }
                }
            }
        }
    }

    pub fn decompose(&self, mut state: usize) -> Vec<usize> {
        let mut coords = vec![0; self.sizes.len()];
        for (c, &s) in coords.iter_mut().zip(&self.sizes).rev() {
            *c = state % s;
            state /= s;
        }
        coords
    }
}

impl Transition for KroneckerTransition<'_> {
    type Counts = Vec<Vec<f64>>;

    fn n_states(&self) -> usize {
        self.n
    }

    fn push_forward(&self, prev: &[f64], next: &mut [f64]) {
        let mut cur = prev.to_vec();
        for axis in 0..self.sizes.len() {
            self.apply_axis(axis, &cur, next);
            cur.copy_from_slice(next);
        }
    }

    fn pull_backward(&self, w: &[f64], out: &mut [f64]) {
        let mut cur = w.to_vec();
        for axis in 0..self.sizes.len() {
            self.apply_axis_transposed(axis, &cur, out);
            cur.copy_from_slice(out);
        }
    }

    fn for_each_edge(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for i in 0..self.n {
            let from = self.decompose(i);
            for j in 0..self.n {
                let to = self.decompose(j);
                let p: f64 = from
                    .iter()
                    .zip(&to)
                    .enumerate()
                    .map(|(c, (&a, &b))| self.factors[c][a * self.sizes[c] + b])
                    .product();
                if p > 0.0 {
                    f(i, j, p);
                }
            }
        }
    }

    fn new_counts(&self) -> Vec<Vec<f64>> {
        self.sizes.iter().map(|&s| vec![0.0; s * s]).collect()
    }

    fn accumulate(&self, alpha: &[f64], w: &[f64], norm: f64, counts: &mut Vec<Vec<f64>>) {
        let mut cur = vec![0.0; self.n];
        let mut tmp = vec![0.0; self.n];
        for (axis, acc) in counts.iter_mut().enumerate() {
            // propagate every other chain, leaving `axis` at its source value
            cur.copy_from_slice(alpha);
            for other in (0..self.sizes.len()).filter(|&o| o != axis) {
                self.apply_axis(other, &cur, &mut tmp);
                std::mem::swap(&mut cur, &mut tmp);
            }
            let (outer, m, inner) = self.strides(axis);
            let f = self.factors[axis];
            for a in 0..m {
                for b in 0..m {
                    let p = f[a * m + b];
                    if p == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for o in 0..outer {
                        let u = &cur[(o * m + a) * inner..(o * m + a + 1) * inner];
                        let v = &w[(o * m + b) * inner..(o * m + b + 1) * inner];
                        s += u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
                    }
                    acc[a * m + b] += norm * p * s;
                }
            }
        }
    }
}

/// E-step output.
#[derive(Debug, Clone)]
pub struct Posteriors<C> {
    pub log_likelihood: f64,
    /// `gamma[t * N + i] = p(z_t = i | x)`
    pub gamma: Vec<f64>,
    /// Expected transition statistics summed over time.
    pub counts: C,
    pub n_states: usize,
    pub len: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scale: Vec<f64>,
}

impl<C> Posteriors<C> {
    pub fn gamma_at(&self, t: usize) -> &[f64] {
        &self.gamma[t * self.n_states..(t + 1) * self.n_states]
    }

    /// Dense `xi_t(i, j) = p(z_t = i, z_{t+1} = j | x)` for `t + 1 < T`.
    pub fn pairwise_at<Tr: Transition>(&self, trans: &Tr, lik: &[f64], t: usize) -> Vec<f64> {
        let n = self.n_states;
        let mut xi = vec![0.0; n * n];
        let alpha = &self.alpha[t * n..(t + 1) * n];
        let beta = &self.beta[(t + 1) * n..(t + 2) * n];
        let b = &lik[(t + 1) * n..(t + 2) * n];
        let norm = 1.0 / self.scale[t + 1];
        trans.for_each_edge(&mut |i, j, p| {
            xi[i * n + j] += alpha[i] * p * b[j] * beta[j] * norm;
        });
        xi
    }
}

fn check_shapes(initial: &[f64], n: usize, lik: &[f64]) -> Result<usize> {
    if initial.len() != n {
        return Err(Error::InvalidParams(format!(
            "initial distribution has {} entries for {n} states",
            initial.len()
        )));
    }
    if lik.is_empty() || !lik.len().is_multiple_of(n) {
        return Err(Error::TooShort {
            len: lik.len() / n.max(1),
            requirement: "at least one observation".into(),
        });
    }
    Ok(lik.len() / n)
}

/// Normalized forward pass. Returns `(alpha_hat, scales, log_likelihood)`;
/// the scale vector has `T + 1` entries, the last one being the terminal
/// normalizer.
pub fn forward<Tr: Transition>(
    initial: &[f64],
    trans: &Tr,
    lik: &[f64],
    terminal: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = trans.n_states();
    let len = check_shapes(initial, n, lik)?;
    let mut alpha = vec![0.0; len * n];
    let mut scale = vec![0.0; len + 1];
    let mut log_likelihood = 0.0;

    for t in 0..len {
        let b = &lik[t * n..(t + 1) * n];
        let (done, rest) = alpha.split_at_mut(t * n);
        let cur = &mut rest[..n];
        if t == 0 {
            for ((c, &p), &e) in cur.iter_mut().zip(initial).zip(b) {
                *c = p * e;
            }
        } else {
            trans.push_forward(&done[(t - 1) * n..], cur);
            for (c, &e) in cur.iter_mut().zip(b) {
                *c *= e;
            }
        }
        let c: f64 = cur.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ZeroProbability { position: t });
        }
        cur.iter_mut().for_each(|x| *x /= c);
        scale[t] = c;
        log_likelihood += c.ln();
    }

    let last = &alpha[(len - 1) * n..];
    let end = match terminal {
        Some(w) => last.iter().zip(w).map(|(a, w)| a * w).sum(),
        None => 1.0,
    };
    if !(end > 0.0) {
        return Err(Error::ZeroProbability { position: len - 1 });
    }
    scale[len] = end;
    log_likelihood += end.ln();
    Ok((alpha, scale, log_likelihood))
}

/// Forward-backward with per-step scaling. `terminal`, when given, weights
/// the final state (used to force complete final segments in
/// explicit-duration chains).
pub fn forward_backward<Tr: Transition>(
    initial: &[f64],
    trans: &Tr,
    lik: &[f64],
    terminal: Option<&[f64]>,
) -> Result<Posteriors<Tr::Counts>> {
    let n = trans.n_states();
    let (alpha, scale, log_likelihood) = forward(initial, trans, lik, terminal)?;
    let len = scale.len() - 1;

    let mut beta = vec![0.0; len * n];
    {
        let last = &mut beta[(len - 1) * n..];
        match terminal {
            Some(w) => last.iter_mut().zip(w).for_each(|(b, &w)| *b = w / scale[len]),
            None => last.fill(1.0),
        }
    }
    let mut counts = trans.new_counts();
    let mut w = vec![0.0; n];
    for t in (0..len - 1).rev() {
        let b = &lik[(t + 1) * n..(t + 2) * n];
        let (head, tail) = beta.split_at_mut((t + 1) * n);
        for ((wj, &bj), &betaj) in w.iter_mut().zip(b).zip(&tail[..n]) {
            *wj = bj * betaj;
        }
        let norm = 1.0 / scale[t + 1];
        trans.accumulate(&alpha[t * n..(t + 1) * n], &w, norm, &mut counts);
        let cur = &mut head[t * n..];
        trans.pull_backward(&w, cur);
        cur.iter_mut().for_each(|x| *x *= norm);
    }

    let mut gamma = vec![0.0; len * n];
    for t in 0..len {
        let g = &mut gamma[t * n..(t + 1) * n];
        let mut s = 0.0;
        for i in 0..n {
            g[i] = alpha[t * n + i] * beta[t * n + i];
            s += g[i];
        }
        // exact in exact arithmetic; renormalize away rounding
        if s > 0.0 {
            g.iter_mut().for_each(|x| *x /= s);
        }
    }

    Ok(Posteriors {
        log_likelihood,
        gamma,
        counts,
        n_states: n,
        len,
        alpha,
        beta,
        scale,
    })
}

/// Most likely state path and its joint log-probability `log p(x, z*)`.
pub fn viterbi<Tr: Transition>(
    initial: &[f64],
    trans: &Tr,
    lik: &[f64],
    terminal: Option<&[f64]>,
) -> Result<(Vec<usize>, f64)> {
    let n = trans.n_states();
    let len = check_shapes(initial, n, lik)?;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    trans.for_each_edge(&mut |i, j, p| edges.push((i, j, p.ln())));

    let mut delta: Vec<f64> = initial
        .iter()
        .zip(&lik[..n])
        .map(|(p, b)| (p * b).ln())
        .collect();
    let mut back = vec![0usize; len * n];
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..len {
        next.fill(f64::NEG_INFINITY);
        let ptr = &mut back[t * n..(t + 1) * n];
        for &(i, j, lp) in &edges {
            let s = delta[i] + lp;
            if s > next[j] {
                next[j] = s;
                ptr[j] = i;
            }
        }
        for (d, (&s, &b)) in delta.iter_mut().zip(next.iter().zip(&lik[t * n..(t + 1) * n])) {
            *d = s + b.ln();
        }
    }
    if let Some(w) = terminal {
        delta.iter_mut().zip(w).for_each(|(d, &w)| *d += w.ln());
    }
    let (mut state, best) = delta
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if best == f64::NEG_INFINITY {
        return Err(Error::ZeroProbability { position: len - 1 });
    }
    let mut path = vec![0; len];
    path[len - 1] = state;
    for t in (1..len).rev() {
        state = back[t * n + state];
        path[t - 1] = state;
    }
    Ok((path, best))
}

/// Draws a state path from `p(z | x)` by forward filtering and backward
/// sampling. Returns the path and the log-likelihood.
pub fn sample_posterior_path<R: Rng + ?Sized>(
    initial: &[f64],
    trans: &SparseTransition,
    lik: &[f64],
    terminal: Option<&[f64]>,
    rng: &mut R,
) -> Result<(Vec<usize>, f64)> {
    let n = trans.n_states();
    let (alpha, scale, log_likelihood) = forward(initial, trans, lik, terminal)?;
    let len = scale.len() - 1;
    let mut path = vec![0; len];
    let mut weights: Vec<f64> = alpha[(len - 1) * n..].to_vec();
    if let Some(w) = terminal {
        weights.iter_mut().zip(w).for_each(|(a, w)| *a *= w);
    }
    path[len - 1] = sample_categorical(&weights, rng);
    let mut probs = vec![0.0; n];
    for t in (0..len - 1).rev() {
        let next = path[t + 1];
        probs.fill(0.0);
        for (i, p) in trans.column(next) {
            probs[i] += alpha[t * n + i] * p;
        }
        path[t] = sample_categorical(&probs, rng);
    }
    Ok((path, log_likelihood))
}
