//! Order-k HMM, realized by embedding state tuples into a first-order
//! chain.
//!
//! Expanded states are the partial histories `(z_1..z_j)` for `j < k`
//! (only reachable during the first `k - 1` steps) and the full windows
//! `(z_{t-k+1}..z_t)`. Tuples are coded base `n` with the oldest state most
//! significant, so the emitting state is always `code % n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, Posteriors, SparseTransition};
use crate::hmm::{
    emission_counts, emission_matrix, flat_dirichlet, reestimate_rows, run_em, sample_categorical,
    EmOptions, FitReport,
};

pub const DEFAULT_TUPLE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhmmParams {
    pub order: usize,
    pub n_states: usize,
    pub n_symbols: usize,
    /// `p(z_1)`
    pub initial: Vec<f64>,
    /// `warmup[j - 1]` is `p(z_{j+1} | z_1..z_j)` as an `n^j x n` table,
    /// for `j = 1..k-1`.
    pub warmup: Vec<Vec<f64>>,
    /// `p(z_t | z_{t-k}..z_{t-1})` as an `n^k x n` table.
    pub transition: Vec<f64>,
    pub emission: Vec<f64>,
}

/// Checks the `n^k` tuple space against `cap`.
pub fn tuple_space(n_states: usize, order: usize, cap: usize) -> Result<usize> {
    let size = (0..order).try_fold(1usize, |acc, _| acc.checked_mul(n_states));
    match size {
        Some(s) if s <= cap => Ok(s),
        _ => Err(Error::StateSpaceTooLarge {
            size: size.unwrap_or(usize::MAX),
            cap,
            hint: "reduce the number of hidden states or the order",
        }),
    }
}

impl KhmmParams {
    pub fn random<R: Rng + ?Sized>(
        order: usize,
        n_states: usize,
        n_symbols: usize,
        left_right: bool,
        rng: &mut R,
    ) -> Self {
        let n = n_states;
        let row = |last: usize, rng: &mut R| -> Vec<f64> {
            if left_right {
                let mut r = vec![0.0; n];
                r[last..].copy_from_slice(&flat_dirichlet(n - last, rng));
                r
            } else {
                flat_dirichlet(n, rng)
            }
        };
        let initial = flat_dirichlet(n, rng);
        let warmup = (1..order)
            .map(|j| (0..n.pow(j as u32)).flat_map(|c| row(c % n, rng)).collect())
            .collect();
        let transition = (0..n.pow(order as u32)).flat_map(|c| row(c % n, rng)).collect();
        let emission = (0..n).flat_map(|_| flat_dirichlet(n_symbols, rng)).collect();
        KhmmParams {
            order,
            n_states,
            n_symbols,
            initial,
            warmup,
            transition,
            emission,
        }
    }

    /// `p(z_t = next | history)`, `history` oldest first. Histories shorter
    /// than the order select the warm-up tables.
    pub fn transition_prob(&self, history: &[usize], next: usize) -> f64 {
        let n = self.n_states;
        let window = &history[history.len().saturating_sub(self.order)..];
        let code = window.iter().fold(0, |acc, &z| acc * n + z);
        if window.len() == self.order {
            self.transition[code * n + next]
        } else {
            self.warmup[window.len() - 1][code * n + next]
        }
    }

    fn offsets(&self) -> Vec<usize> {
        // offsets[j - 1] = first expanded index of length-j tuples
        let mut offsets = Vec::with_capacity(self.order + 1);
        let mut acc = 0;
        for j in 1..=self.order {
            offsets.push(acc);
            acc += self.n_states.pow(j as u32);
        }
        offsets.push(acc);
        offsets
    }

    /// Expanded chain plus, for each edge, its cell in the concatenated
    /// parameter vector `[warmup.., transition]`.
    fn expand(&self) -> (SparseTransition, Vec<usize>, Vec<f64>) {
        let n = self.n_states;
        let k = self.order;
        let offsets = self.offsets();
        let total = offsets[k];
        let mut rows = Vec::with_capacity(total);
        let mut slots = Vec::new();
        let mut table_base = 0;
        for j in 1..=k {
            let count = n.pow(j as u32);
            for code in 0..count {
                let (table, target_offset, target_code) = if j < k {
                    (&self.warmup[j - 1], offsets[j], code * n)
                } else {
                    (&self.transition, offsets[k - 1], (code % n.pow(k as u32 - 1)) * n)
                };
                let mut row = Vec::with_capacity(n);
                for b in 0..n {
                    let p = table[code * n + b];
                    if p > 0.0 {
                        row.push((target_offset + target_code + b, p));
                        slots.push(table_base + code * n + b);
                    }
                }
                rows.push(row);
            }
            table_base += count * n;
        }
        let mut initial = vec![0.0; total];
        initial[..n].copy_from_slice(&self.initial);
        (SparseTransition::from_rows(rows), slots, initial)
    }

    fn expanded_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        let base = emission_matrix(&self.emission, self.n_states, self.n_symbols, obs)?;
        let last = self.last_states();
        let n = self.n_states;
        let mut lik = Vec::with_capacity(obs.len() * last.len());
        for t in 0..obs.len() {
            let row = &base[t * n..(t + 1) * n];
            lik.extend(last.iter().map(|&z| row[z]));
        }
        Ok(lik)
    }

    /// Emitting (most recent) state of every expanded state.
    fn last_states(&self) -> Vec<usize> {
        let offsets = self.offsets();
        (1..=self.order)
            .flat_map(|j| (0..offsets[j] - offsets[j - 1]).map(|code| code % self.n_states))
            .collect()
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<(Posteriors<Vec<f64>>, Vec<usize>)> {
        let (trans, slots, initial) = self.expand();
        let lik = self.expanded_likelihoods(obs)?;
        Ok((chain::forward_backward(&initial, &trans, &lik, None)?, slots))
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let (trans, _, initial) = self.expand();
        let lik = self.expanded_likelihoods(obs)?;
        chain::forward(&initial, &trans, &lik, None).map(|r| r.2)
    }

    fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<f64>>, slots: &[usize]) -> Self {
        let n = self.n_states;
        let mut flat: Vec<f64> = self.warmup.iter().flatten().copied().collect();
        flat.extend_from_slice(&self.transition);
        let mut counts = vec![0.0; flat.len()];
        for (e, &slot) in slots.iter().enumerate() {
            counts[slot] += post.counts[e];
        }
        let updated = reestimate_rows(&counts, &flat, n);
        let mut warmup = Vec::with_capacity(self.warmup.len());
        let mut cursor = 0;
        for table in &self.warmup {
            warmup.push(updated[cursor..cursor + table.len()].to_vec());
            cursor += table.len();
        }
        let transition = updated[cursor..].to_vec();

        let last = self.last_states();
        let total = last.len();
        let mut gamma = vec![0.0; obs.len() * n];
        for t in 0..obs.len() {
            for (s, &z) in last.iter().enumerate() {
                gamma[t * n + z] += post.gamma[t * total + s];
            }
        }
        KhmmParams {
            order: self.order,
            n_states: n,
            n_symbols: self.n_symbols,
            initial: reestimate_rows(&post.gamma[..n], &self.initial, n),
            warmup,
            transition,
            emission: reestimate_rows(
                &emission_counts(&gamma, n, self.n_symbols, obs),
                &self.emission,
                self.n_symbols,
            ),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let n = self.n_states;
        let k = self.n_symbols;
        let mut states: Vec<usize> = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut probs = vec![0.0; n];
        for t in 0..len {
            let z = if t == 0 {
                sample_categorical(&self.initial, rng)
            } else {
                for (b, p) in probs.iter_mut().enumerate() {
                    *p = self.transition_prob(&states, b);
                }
                sample_categorical(&probs, rng)
            };
            states.push(z);
            symbols.push(sample_categorical(&self.emission[z * k..(z + 1) * k], rng));
        }
        (states, symbols)
    }
}

pub fn train_khmm(init: KhmmParams, obs: &[usize], opts: &EmOptions, cap: usize) -> Result<(KhmmParams, FitReport)> {
    tuple_space(init.n_states, init.order, cap)?;
    if obs.len() <= init.order {
        return Err(Error::TooShort {
            len: obs.len(),
            requirement: format!("must exceed the order {}", init.order),
        });
    }
    run_em(
        init,
        opts,
        |p| {
            let (post, slots) = p.forward_backward(obs)?;
            Ok((post.log_likelihood, (post, slots)))
        },
        |p, (post, slots)| p.reestimate(obs, &post, &slots),
    )
}
