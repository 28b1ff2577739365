//! Factorial HMM: independent chains whose states are combined through the
//! rounded mean of their 1-based ordinals, which selects the emission row.
//!
//! Exact inference on the product chain; the joint transition is never
//! materialized (see [`KroneckerTransition`]).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, KroneckerTransition, Posteriors};
use crate::hmm::{
    emission_counts, emission_matrix, flat_dirichlet, reestimate_rows, run_em, sample_categorical,
    EmOptions, FitReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhmmParams {
    pub sizes: Vec<usize>,
    pub n_symbols: usize,
    pub initial: Vec<Vec<f64>>,
    pub transition: Vec<Vec<f64>>,
    /// One row per attainable rounded mean `1..=n_emission_rows`.
    pub emission: Vec<f64>,
}

/// Emission row for 0-based chain states: `round(mean of 1-based ordinals)`
/// with halves rounded up, minus one.
pub fn emission_row(states: &[usize]) -> usize {
    let m = states.len();
    let total: usize = states.iter().map(|s| s + 1).sum();
    (2 * total + m) / (2 * m) - 1
}

pub fn n_emission_rows(sizes: &[usize]) -> usize {
    let largest: Vec<usize> = sizes.iter().map(|s| s - 1).collect();
    emission_row(&largest) + 1
}

impl FhmmParams {
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], n_symbols: usize, rng: &mut R) -> Self {
        let initial = sizes.iter().map(|&s| flat_dirichlet(s, rng)).collect();
        let transition = sizes
            .iter()
            .map(|&s| (0..s).flat_map(|_| flat_dirichlet(s, rng)).collect())
            .collect();
        let emission = (0..n_emission_rows(sizes))
            .flat_map(|_| flat_dirichlet(n_symbols, rng))
            .collect();
        FhmmParams {
            sizes: sizes.to_vec(),
            n_symbols,
            initial,
            transition,
            emission,
        }
    }

    pub fn n_joint(&self) -> usize {
        self.sizes.iter().product()
    }

    fn operator(&self) -> KroneckerTransition<'_> {
        KroneckerTransition::new(
            self.sizes.clone(),
            self.transition.iter().map(Vec::as_slice).collect(),
        )
    }

    /// Emission row of every joint state.
    fn joint_rows(&self) -> Vec<usize> {
        let op = self.operator();
        (0..self.n_joint()).map(|z| emission_row(&op.decompose(z))).collect()
    }

    fn joint_initial(&self) -> Vec<f64> {
        let op = self.operator();
        (0..self.n_joint())
            .map(|z| {
                op.decompose(z)
                    .iter()
                    .zip(&self.initial)
                    .map(|(&s, pi)| pi[s])
                    .product()
            })
            .collect()
    }

    fn joint_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        let rows = n_emission_rows(&self.sizes);
        let base = emission_matrix(&self.emission, rows, self.n_symbols, obs)?;
        let map = self.joint_rows();
        let mut lik = Vec::with_capacity(obs.len() * map.len());
        for t in 0..obs.len() {
            lik.extend(map.iter().map(|&r| base[t * rows + r]));
        }
        Ok(lik)
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<Posteriors<Vec<Vec<f64>>>> {
        let lik = self.joint_likelihoods(obs)?;
        chain::forward_backward(&self.joint_initial(), &self.operator(), &lik, None)
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let lik = self.joint_likelihoods(obs)?;
        chain::forward(&self.joint_initial(), &self.operator(), &lik, None).map(|r| r.2)
    }

    fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<Vec<f64>>>) -> Self {
        let op = self.operator();
        let mut first: Vec<Vec<f64>> = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        for (z, &g) in post.gamma_at(0).iter().enumerate() {
            for (c, s) in op.decompose(z).into_iter().enumerate() {
                first[c][s] += g;
            }
        }
        let rows = n_emission_rows(&self.sizes);
        let map = self.joint_rows();
        let mut gamma_rows = vec![0.0; obs.len() * rows];
        for t in 0..obs.len() {
            for (z, g) in post.gamma_at(t).iter().enumerate() {
                gamma_rows[t * rows + map[z]] += g;
            }
        }
        FhmmParams {
            sizes: self.sizes.clone(),
            n_symbols: self.n_symbols,
            initial: first
                .iter()
                .zip(&self.initial)
                .map(|(cnt, tmpl)| reestimate_rows(cnt, tmpl, tmpl.len()))
                .collect(),
            transition: post
                .counts
                .iter()
                .zip(&self.transition)
                .zip(&self.sizes)
                .map(|((cnt, tmpl), &s)| reestimate_rows(cnt, tmpl, s))
                .collect(),
            emission: reestimate_rows(
                &emission_counts(&gamma_rows, rows, self.n_symbols, obs),
                &self.emission,
                self.n_symbols,
            ),
        }
    }

    /// Returns `(chain states per step, symbols)`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<Vec<usize>>, Vec<usize>) {
        let k = self.n_symbols;
        let mut paths = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut cur: Vec<usize> = Vec::new();
        for t in 0..len {
            cur = if t == 0 {
                self.initial.iter().map(|pi| sample_categorical(pi, rng)).collect()
            } else {
                cur.iter()
                    .zip(&self.transition)
                    .zip(&self.sizes)
                    .map(|((&s, a), &m)| sample_categorical(&a[s * m..(s + 1) * m], rng))
                    .collect()
            };
            let r = emission_row(&cur);
            symbols.push(sample_categorical(&self.emission[r * k..(r + 1) * k], rng));
            paths.push(cur.clone());
        }
        (paths, symbols)
    }
}

pub fn train_fhmm(init: FhmmParams, obs: &[usize], opts: &EmOptions, cap: usize) -> Result<(FhmmParams, FitReport)> {
    if init.sizes.is_empty() || init.sizes.contains(&0) {
        return Err(Error::InvalidParams("every chain needs at least one state".into()));
    }
    let size = init
        .sizes
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::StateSpaceTooLarge {
            size,
            cap,
            hint: "exact inference only; shrink the chains (approximate inference is not provided)",
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
