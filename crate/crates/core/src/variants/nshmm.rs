//! Non-stationary HMM with dwell-dependent self-transitions, fitted by
//! Metropolis-within-Gibbs.
//!
//! The probability of staying in state `i` after `d` steps there is
//! `sigmoid(a_i + b_i * (d - 1))`; on leaving, the next state is drawn from
//! a base transition matrix with zero diagonal. The dwell counter saturates
//! at `D`, so a flat profile (`b_i = 0`) is exactly a first-order HMM.
//!
//! Each sweep draws a state path by forward filtering and backward
//! sampling on the `(state, dwell)` chain, then draws the initial, base
//! transition and emission rows from their Dirichlet conditionals, then
//! updates every `(a_i, b_i)` with one random-walk Metropolis step.
//! Parameters are averaged over the post-burn-in sweeps.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, SparseTransition};
use crate::hmm::{
    baum_welch, dirichlet, emission_matrix, sample_categorical, seeded_rng, EmOptions, FitReport,
    HmmParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NshmmParams {
    pub n_states: usize,
    pub n_symbols: usize,
    pub max_dwell: usize,
    pub initial: Vec<f64>,
    /// Destination distribution on leaving a state; zero diagonal.
    pub base_transition: Vec<f64>,
    pub emission: Vec<f64>,
    pub dwell_intercept: Vec<f64>,
    pub dwell_slope: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NshmmOptions {
    pub sweeps: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub prior_sd: f64,
    /// Pins every dwell slope at zero.
    pub flat_profile: bool,
    /// Baum-Welch iterations for the warm start.
    pub warm_start_iter: usize,
}

impl Default for NshmmOptions {
    fn default() -> Self {
        NshmmOptions {
            sweeps: 400,
            burn_in: 150,
            proposal_sd: 0.25,
            prior_sd: 3.0,
            flat_profile: false,
            warm_start_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcReport {
    /// Log-likelihood of the parameters at the start of each sweep.
    pub log_likelihood_trace: Vec<f64>,
    pub acceptance_rate: f64,
    pub warm_start: FitReport,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl NshmmParams {
    pub fn stay_prob(&self, state: usize, dwell: usize) -> f64 {
        sigmoid(self.dwell_intercept[state] + self.dwell_slope[state] * (dwell as f64 - 1.0))
    }

    /// Implied transition row out of `(state, dwell)` over the original
    /// states (stay mass on the diagonal).
    pub fn transition_row(&self, state: usize, dwell: usize) -> Vec<f64> {
        let n = self.n_states;
        let stay = self.stay_prob(state, dwell);
        let mut row: Vec<f64> = self.base_transition[state * n..(state + 1) * n]
            .iter()
            .map(|b| (1.0 - stay) * b)
            .collect();
        row[state] = stay;
        row
    }

    /// Flat-profile parameters equivalent to a first-order HMM.
    pub fn from_hmm(hmm: &HmmParams, max_dwell: usize) -> Self {
        let n = hmm.n_states;
        let mut base = vec![0.0; n * n];
        let mut intercept = vec![0.0; n];
        for i in 0..n {
            let row = &hmm.transition[i * n..(i + 1) * n];
            let stay = row[i].clamp(1e-6, 1.0 - 1e-6);
            intercept[i] = (stay / (1.0 - stay)).ln();
            let leave: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p).sum();
            for j in (0..n).filter(|&j| j != i) {
                base[i * n + j] = if leave > 0.0 {
                    row[j] / leave
                } else {
                    1.0 / (n - 1) as f64
                };
            }
        }
        NshmmParams {
            n_states: n,
            n_symbols: hmm.n_symbols,
            max_dwell,
            initial: hmm.initial.clone(),
            base_transition: base,
            emission: hmm.emission.clone(),
            dwell_intercept: intercept,
            dwell_slope: vec![0.0; n],
        }
    }

    fn index(&self, state: usize, dwell: usize) -> usize {
        state * self.max_dwell + dwell - 1
    }

    fn expand(&self) -> (SparseTransition, Vec<f64>) {
        let n = self.n_states;
        let dmax = self.max_dwell;
        let mut rows = Vec::with_capacity(n * dmax);
        for i in 0..n {
            for d in 1..=dmax {
                let stay = self.stay_prob(i, d);
                let mut row = vec![(self.index(i, (d + 1).min(dmax)), stay)];
                for j in (0..n).filter(|&j| j != i) {
                    let p = (1.0 - stay) * self.base_transition[i * n + j];
                    if p > 0.0 {
                        row.push((self.index(j, 1), p));
                    }
                }
                rows.push(row);
            }
        }
        let mut initial = vec![0.0; n * dmax];
        for i in 0..n {
            initial[self.index(i, 1)] = self.initial[i];
        }
        (SparseTransition::from_rows(rows), initial)
    }

    fn expanded_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_states;
        let base = emission_matrix(&self.emission, n, self.n_symbols, obs)?;
        let mut lik = Vec::with_capacity(obs.len() * n * self.max_dwell);
        for t in 0..obs.len() {
            for i in 0..n {
                lik.extend(std::iter::repeat_n(base[t * n + i], self.max_dwell));
            }
        }
        Ok(lik)
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let (trans, initial) = self.expand();
        let lik = self.expanded_likelihoods(obs)?;
        chain::forward(&initial, &trans, &lik, None).map(|r| r.2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let n = self.n_states;
        let k = self.n_symbols;
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut state = sample_categorical(&self.initial, rng);
        let mut dwell = 1;
        for t in 0..len {
            if t > 0 {
                if rng.random::<f64>() < self.stay_prob(state, dwell) {
                    dwell = (dwell + 1).min(self.max_dwell);
                } else {
                    state = sample_categorical(&self.base_transition[state * n..(state + 1) * n], rng);
                    dwell = 1;
                }
            }
            states.push(state);
            symbols.push(sample_categorical(&self.emission[state * k..(state + 1) * k], rng));
        }
        (states, symbols)
    }
}

/// Stay/leave counts per `(state, dwell)` along a sampled expanded path.
fn dwell_outcomes(path: &[usize], n: usize, dmax: usize) -> (Vec<f64>, Vec<f64>) {
    let mut stay = vec![0.0; n * dmax];
    let mut leave = vec![0.0; n * dmax];
    for w in path.windows(2) {
        if w[0] / dmax == w[1] / dmax {
            stay[w[0]] += 1.0;
        } else {
            leave[w[0]] += 1.0;
        }
    }
    (stay, leave)
}

fn profile_log_posterior(
    intercept: f64,
    slope: f64,
    stay: &[f64],
    leave: &[f64],
    prior_sd: f64,
) -> f64 {
    let mut lp = -(intercept * intercept + slope * slope) / (2.0 * prior_sd * prior_sd);
    for (d, (&s, &l)) in stay.iter().zip(leave).enumerate() {
        let eta = intercept + slope * d as f64;
        if s > 0.0 {
            lp += s * log_sigmoid(eta);
        }
        if l > 0.0 {
            lp += l * log_sigmoid(-eta);
        }
    }
    lp
}

pub fn train_nshmm(
    n_states: usize,
    max_dwell: usize,
    obs: &[usize],
    n_symbols: usize,
    opts: &NshmmOptions,
    seed: u64,
) -> Result<(NshmmParams, McmcReport)> {
    if n_states < 2 {
        return Err(Error::InvalidParams("the dwell model needs at least two states".into()));
    }
    if max_dwell == 0 || max_dwell >= obs.len() {
        return Err(Error::TooShort {
            len: obs.len(),
            requirement: format!("must exceed the maximum dwell {max_dwell}"),
        });
    }
    if opts.burn_in >= opts.sweeps {
        return Err(Error::InvalidParams("burn-in must be shorter than the sweep budget".into()));
    }
    let mut rng = seeded_rng(seed);
    let init = HmmParams::random(n_states, n_symbols, &mut rng);
    let (warm, warm_report) = baum_welch(
        init,
        obs,
        &EmOptions {
            tol: 1e-6,
            max_iter: opts.warm_start_iter,
        },
    )?;
    let mut params = NshmmParams::from_hmm(&warm, max_dwell);

    let n = n_states;
    let k = n_symbols;
    let dmax = max_dwell;
    let mut sums = NshmmParams {
        initial: vec![0.0; n],
        base_transition: vec![0.0; n * n],
        emission: vec![0.0; n * k],
        dwell_intercept: vec![0.0; n],
        dwell_slope: vec![0.0; n],
        ..params.clone()
    };
    let mut trace = Vec::with_capacity(opts.sweeps);
    let (mut proposed, mut accepted) = (0usize, 0usize);

    for sweep in 0..opts.sweeps {
        let (trans, initial) = params.expand();
        let lik = params.expanded_likelihoods(obs)?;
        let (path, ll) = chain::sample_posterior_path(&initial, &trans, &lik, None, &mut rng)?;
        trace.push(ll);

        let states: Vec<usize> = path.iter().map(|&s| s / dmax).collect();
        let mut init_conc = vec![1.0; n];
        init_conc[states[0]] += 1.0;
        params.initial = dirichlet(&init_conc, &mut rng);

        let mut switch = vec![0.0; n * n];
        for w in states.windows(2).filter(|w| w[0] != w[1]) {
            switch[w[0] * n + w[1]] += 1.0;
        }
        for i in 0..n {
            let conc: Vec<f64> = (0..n)
                .map(|j| if j == i { 0.0 } else { 1.0 + switch[i * n + j] })
                .collect();
            params.base_transition[i * n..(i + 1) * n].copy_from_slice(&dirichlet(&conc, &mut rng));
        }

        let mut emit = vec![1.0; n * k];
        for (&z, &x) in states.iter().zip(obs) {
            emit[z * k + x] += 1.0;
        }
        for i in 0..n {
            let row = dirichlet(&emit[i * k..(i + 1) * k], &mut rng);
            params.emission[i * k..(i + 1) * k].copy_from_slice(&row);
        }

        let (stay, leave) = dwell_outcomes(&path, n, dmax);
        for i in 0..n {
            let (s, l) = (&stay[i * dmax..(i + 1) * dmax], &leave[i * dmax..(i + 1) * dmax]);
            let (a, b) = (params.dwell_intercept[i], params.dwell_slope[i]);
            let step_a: f64 = StandardNormal.sample(&mut rng);
            let step_b: f64 = StandardNormal.sample(&mut rng);
            let a_new = a + opts.proposal_sd * step_a;
            let b_new = if opts.flat_profile {
                0.0
            } else {
                b + opts.proposal_sd * step_b
            };
            let log_ratio = profile_log_posterior(a_new, b_new, s, l, opts.prior_sd)
                - profile_log_posterior(a, b, s, l, opts.prior_sd);
            proposed += 1;
            if rng.random::<f64>().ln() < log_ratio {
                params.dwell_intercept[i] = a_new;
                params.dwell_slope[i] = b_new;
                accepted += 1;
            }
        }

        if sweep >= opts.burn_in {
            let add = |acc: &mut Vec<f64>, v: &[f64]| acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            add(&mut sums.initial, &params.initial);
            add(&mut sums.base_transition, &params.base_transition);
            add(&mut sums.emission, &params.emission);
            add(&mut sums.dwell_intercept, &params.dwell_intercept);
            add(&mut sums.dwell_slope, &params.dwell_slope);
        }
    }

    let kept = (opts.sweeps - opts.burn_in) as f64;
    for v in [
        &mut sums.initial,
        &mut sums.base_transition,
        &mut sums.emission,
        &mut sums.dwell_intercept,
        &mut sums.dwell_slope,
    ] {
        v.iter_mut().for_each(|x| *x /= kept);
    }
    // averaged rows drift from 1 only by rounding
    for (v, width) in [
        (&mut sums.initial, n),
        (&mut sums.base_transition, n),
        (&mut sums.emission, k),
    ] {
        for row in v.chunks_mut(width) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
    }

    Ok((
        sums,
        McmcReport {
            log_likelihood_trace: trace,
            acceptance_rate: accepted as f64 / proposed.max(1) as f64,
            warm_start: warm_report,
            seed,
        },
    ))
}
