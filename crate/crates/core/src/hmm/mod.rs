//! First-order categorical HMM: forward-backward, Baum-Welch, Viterbi,
//! ancestral sampling and random (flat Dirichlet) parameters.

pub mod chain;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use chain::{DenseTransition, Posteriors};

/// Pseudo-count added to every structurally allowed accumulator cell
/// before an M-step normalization.
pub const SMOOTHING: f64 = 1e-10;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;

pub type ModelRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> ModelRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Inverse-CDF draw from unnormalized non-negative weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// One row from a flat Dirichlet.
pub fn flat_dirichlet<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

/// Draw from Dirichlet(`concentration`), entries with zero concentration
/// stay exactly zero.
pub fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            if a > 0.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    } else {
        // every gamma draw underflowed: fall back to the mean
        let total: f64 = concentration.iter().sum();
        row.iter_mut()
            .zip(concentration)
            .for_each(|(x, a)| *x = a / total);
    }
    row
}

/// M-step normalization of consecutive rows of width `width`.
///
/// Cells where `template` is zero are structural zeros and stay zero; every
/// other cell gets [`SMOOTHING`] added before the row is normalized.
pub fn reestimate_rows(counts: &[f64], template: &[f64], width: usize) -> Vec<f64> {
    debug_assert_eq!(counts.len(), template.len());
    let mut out = vec![0.0; counts.len()];
    for ((dst, src), tmpl) in out
        .chunks_mut(width)
        .zip(counts.chunks(width))
        .zip(template.chunks(width))
    {
        let mut s = 0.0;
        for ((d, &c), &t) in dst.iter_mut().zip(src).zip(tmpl) {
            if t > 0.0 {
                *d = c.max(0.0) + SMOOTHING;
                s += *d;
            }
        }
        if s > 0.0 {
            dst.iter_mut().for_each(|d| *d /= s);
        } else {
            dst.copy_from_slice(tmpl);
        }
    }
    out
}

pub(crate) fn check_stochastic(name: &str, values: &[f64], width: usize, tol: f64) -> Result<()> {
    if width == 0 || !values.len().is_multiple_of(width) {
        return Err(Error::InvalidParams(format!(
            "{name}: {} entries do not form rows of width {width}",
            values.len()
        )));
    }
    for (r, row) in values.chunks(width).enumerate() {
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "{name}: row {r} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidParams(format!(
                "{name}: row {r} sums to {s}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitReport {
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.log_likelihood_trace.last().copied()
    }

    /// Largest single-step decrease of the trace (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.log_likelihood_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Generic EM driver. `e_step` returns the log-likelihood of the current
/// parameters together with whatever statistics `m_step` consumes.
///
/// The trace holds the log-likelihood of every parameter set visited; the
/// returned parameters are the last ones evaluated. Stops when the relative
/// change drops to `tol` or after `max_iter` M-steps.
pub fn run_em<P, S>(
    init: P,
    opts: &EmOptions,
    mut e_step: impl FnMut(&P) -> Result<(f64, S)>,
    mut m_step: impl FnMut(&P, S) -> P,
) -> Result<(P, FitReport)> {
    let mut report = FitReport::default();
    if opts.max_iter == 0 {
        return Ok((init, report));
    }
    let mut params = init;
    let (mut ll, mut stats) = e_step(&params)?;
    report.log_likelihood_trace.push(ll);
    while report.iterations < opts.max_iter {
        let next = m_step(&params, stats);
        report.iterations += 1;
        let (next_ll, next_stats) = e_step(&next)?;
        report.log_likelihood_trace.push(next_ll);
        params = next;
        stats = next_stats;
        let change = (next_ll - ll).abs();
        ll = next_ll;
        if change == 0.0 || change <= opts.tol * ll.abs() {
            report.converged = true;
            break;
        }
    }
    Ok((params, report))
}

/// First-order HMM over a categorical alphabet. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub n_states: usize,
    pub n_symbols: usize,
    pub initial: Vec<f64>,
    /// `transition[i * n_states + j] = p(z_t = j | z_{t-1} = i)`
    pub transition: Vec<f64>,
    /// `emission[i * n_symbols + k] = p(x_t = k | z_t = i)`
    pub emission: Vec<f64>,
}

impl HmmParams {
    pub fn new(
        n_states: usize,
        n_symbols: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self> {
        let p = HmmParams {
            n_states,
            n_symbols,
            initial,
            transition,
            emission,
        };
        p.validate(1e-9)?;
        Ok(p)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.n_states == 0 || self.n_symbols == 0 {
            return Err(Error::InvalidParams("sizes must be positive".into()));
        }
        if self.initial.len() != self.n_states
            || self.transition.len() != self.n_states * self.n_states
            || self.emission.len() != self.n_states * self.n_symbols
        {
            return Err(Error::InvalidParams("matrix dimensions do not match sizes".into()));
        }
        check_stochastic("initial", &self.initial, self.n_states, tol)?;
        check_stochastic("transition", &self.transition, self.n_states, tol)?;
        check_stochastic("emission", &self.emission, self.n_symbols, tol)
    }

    pub fn uniform(n_states: usize, n_symbols: usize) -> Self {
        HmmParams {
            n_states,
            n_symbols,
            initial: vec![1.0 / n_states as f64; n_states],
            transition: vec![1.0 / n_states as f64; n_states * n_states],
            emission: vec![1.0 / n_symbols as f64; n_states * n_symbols],
        }
    }

    /// Every row drawn from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_symbols: usize, rng: &mut R) -> Self {
        let initial = flat_dirichlet(n_states, rng);
        let transition = (0..n_states).flat_map(|_| flat_dirichlet(n_states, rng)).collect();
        let emission = (0..n_states).flat_map(|_| flat_dirichlet(n_symbols, rng)).collect();
        HmmParams {
            n_states,
            n_symbols,
            initial,
            transition,
            emission,
        }
    }

    /// Random parameters with the strict lower triangle of the transition
    /// matrix zeroed (left-right topology).
    pub fn random_left_right<R: Rng + ?Sized>(n_states: usize, n_symbols: usize, rng: &mut R) -> Self {
        let mut p = HmmParams::random(n_states, n_symbols, rng);
        for i in 0..n_states {
            let tail = flat_dirichlet(n_states - i, rng);
            let row = &mut p.transition[i * n_states..(i + 1) * n_states];
            row[..i].fill(0.0);
            row[i..].copy_from_slice(&tail);
        }
        p
    }

    pub fn transition_op(&self) -> DenseTransition<'_> {
        DenseTransition::new(self.n_states, &self.transition)
    }

    /// `T x N` emission likelihood matrix for `obs`.
    pub fn emission_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        emission_matrix(&self.emission, self.n_states, self.n_symbols, obs)
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<Posteriors<Vec<f64>>> {
        let lik = self.emission_likelihoods(obs)?;
        chain::forward_backward(&self.initial, &self.transition_op(), &lik, None)
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let lik = self.emission_likelihoods(obs)?;
        chain::forward(&self.initial, &self.transition_op(), &lik, None).map(|r| r.2)
    }

    pub fn viterbi(&self, obs: &[usize]) -> Result<Vec<usize>> {
        let lik = self.emission_likelihoods(obs)?;
        chain::viterbi(&self.initial, &self.transition_op(), &lik, None).map(|r| r.0)
    }

    /// M-step from first-order posteriors.
    pub fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<f64>>) -> HmmParams {
        HmmParams {
            n_states: self.n_states,
            n_symbols: self.n_symbols,
            initial: reestimate_rows(post.gamma_at(0), &self.initial, self.n_states),
            transition: reestimate_rows(&post.counts, &self.transition, self.n_states),
            emission: reestimate_rows(
                &emission_counts(&post.gamma, self.n_states, self.n_symbols, obs),
                &self.emission,
                self.n_symbols,
            ),
        }
    }

    /// Ancestral sampling. Returns `(states, symbols)`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let n = self.n_states;
        let k = self.n_symbols;
        for t in 0..len {
            let z = if t == 0 {
                sample_categorical(&self.initial, rng)
            } else {
                let prev = states[t - 1];
                sample_categorical(&self.transition[prev * n..(prev + 1) * n], rng)
            };
            states.push(z);
            symbols.push(sample_categorical(&self.emission[z * k..(z + 1) * k], rng));
        }
        (states, symbols)
    }
}

pub(crate) fn emission_matrix(
    emission: &[f64],
    n_states: usize,
    n_symbols: usize,
    obs: &[usize],
) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut lik = Vec::with_capacity(obs.len() * n_states);
    for (position, &x) in obs.iter().enumerate() {
        if x >= n_symbols {
            return Err(Error::SymbolOutOfAlphabet {
                position,
                symbol: x,
                alphabet_size: n_symbols,
            });
        }
        lik.extend((0..n_states).map(|i| emission[i * n_symbols + x]));
    }
    Ok(lik)
}

pub(crate) fn emission_counts(gamma: &[f64], n_states: usize, n_symbols: usize, obs: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.0; n_states * n_symbols];
    for (t, &x) in obs.iter().enumerate() {
        for i in 0..n_states {
            counts[i * n_symbols + x] += gamma[t * n_states + i];
        }
    }
    counts
}

pub fn forward_backward(params: &HmmParams, obs: &[usize]) -> Result<Posteriors<Vec<f64>>> {
    params.forward_backward(obs)
}

/// Baum-Welch EM from `init`.
pub fn baum_welch(init: HmmParams, obs: &[usize], opts: &EmOptions) -> Result<(HmmParams, FitReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams("tolerance must be positive".into()));
    }
    init.validate(1e-9)?;
    run_em(
        init,
        opts,
        |p| {
            let post = p.forward_backward(obs)?;
            Ok((post.log_likelihood, post))
        },
        |p, post| p.reestimate(obs, &post),
    )
}

pub fn viterbi(params: &HmmParams, obs: &[usize]) -> Result<Vec<usize>> {
    params.viterbi(obs)
}

/// Samples `len` symbols with a fresh RNG seeded from `seed`.
pub fn sample(params: &HmmParams, len: usize, seed: u64) -> Vec<usize> {
    params.sample(len, &mut seeded_rng(seed)).1
}

/// Flat-Dirichlet parameters (the random baseline model).
pub fn random_params(n_states: usize, n_symbols: usize, seed: u64) -> HmmParams {
    HmmParams::random(n_states, n_symbols, &mut seeded_rng(seed))
}
