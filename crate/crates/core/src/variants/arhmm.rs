//! Autoregressive HMM: each emission conditions on the hidden state and on
//! the previously observed symbol.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, DenseTransition, Posteriors};
use crate::hmm::{flat_dirichlet, reestimate_rows, run_em, sample_categorical, EmOptions, FitReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArhmmParams {
    pub n_states: usize,
    pub n_symbols: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<f64>,
    /// `p(x_1 | z_1)`, `n x K`
    pub initial_emission: Vec<f64>,
    /// `p(x_t | z_t, x_{t-1})` indexed `[(state * K + prev) * K + symbol]`
    pub emission: Vec<f64>,
}

impl ArhmmParams {
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_symbols: usize, rng: &mut R) -> Self {
        let initial = flat_dirichlet(n_states, rng);
        let transition = (0..n_states).flat_map(|_| flat_dirichlet(n_states, rng)).collect();
        let initial_emission = (0..n_states).flat_map(|_| flat_dirichlet(n_symbols, rng)).collect();
        let emission = (0..n_states * n_symbols)
            .flat_map(|_| flat_dirichlet(n_symbols, rng))
            .collect();
        ArhmmParams {
            n_states,
            n_symbols,
            initial,
            transition,
            initial_emission,
            emission,
        }
    }

    pub fn emission_prob(&self, state: usize, prev: Option<usize>, symbol: usize) -> f64 {
        let k = self.n_symbols;
        match prev {
            None => self.initial_emission[state * k + symbol],
            Some(p) => self.emission[(state * k + p) * k + symbol],
        }
    }

    pub fn likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        if obs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let n = self.n_states;
        let mut lik = Vec::with_capacity(obs.len() * n);
        for (t, &x) in obs.iter().enumerate() {
            if x >= self.n_symbols {
                return Err(Error::SymbolOutOfAlphabet {
                    position: t,
                    symbol: x,
                    alphabet_size: self.n_symbols,
                });
            }
            let prev = (t > 0).then(|| obs[t - 1]);
            lik.extend((0..n).map(|i| self.emission_prob(i, prev, x)));
        }
        Ok(lik)
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<Posteriors<Vec<f64>>> {
        let lik = self.likelihoods(obs)?;
        chain::forward_backward(
            &self.initial,
            &DenseTransition::new(self.n_states, &self.transition),
            &lik,
            None,
        )
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        self.forward_backward(obs).map(|p| p.log_likelihood)
    }

    fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<f64>>) -> Self {
        let n = self.n_states;
        let k = self.n_symbols;
        let mut first = vec![0.0; n * k];
        let mut rest = vec![0.0; n * k * k];
        for i in 0..n {
            first[i * k + obs[0]] += post.gamma[i];
        }
        for t in 1..obs.len() {
            let g = post.gamma_at(t);
            for i in 0..n {
                rest[(i * k + obs[t - 1]) * k + obs[t]] += g[i];
            }
        }
        ArhmmParams {
            n_states: n,
            n_symbols: k,
            initial: reestimate_rows(post.gamma_at(0), &self.initial, n),
            transition: reestimate_rows(&post.counts, &self.transition, n),
            initial_emission: reestimate_rows(&first, &self.initial_emission, k),
            emission: reestimate_rows(&rest, &self.emission, k),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let n = self.n_states;
        let k = self.n_symbols;
        let mut states = Vec::with_capacity(len);
        let mut symbols: Vec<usize> = Vec::with_capacity(len);
        for t in 0..len {
            let z = if t == 0 {
                sample_categorical(&self.initial, rng)
            } else {
                let prev = states[t - 1];
                sample_categorical(&self.transition[prev * n..(prev + 1) * n], rng)
            };
            states.push(z);
            let row = if t == 0 {
                &self.initial_emission[z * k..(z + 1) * k]
            } else {
                let base = (z * k + symbols[t - 1]) * k;
                &self.emission[base..base + k]
            };
            symbols.push(sample_categorical(row, rng));
        }
        (states, symbols)
    }
}

pub fn train_arhmm(init: ArhmmParams, obs: &[usize], opts: &EmOptions) -> Result<(ArhmmParams, FitReport)> {
    if obs.len() < 2 {
        return Err(Error::TooShort {
            len: obs.len(),
            requirement: "autoregressive emissions need at least two observations".into(),
        });
    }
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
