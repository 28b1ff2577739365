//! HMM with two hidden processes: a regime chain `R` (m2 values) driving
//! the transitions of a state chain `S` (m1 values), which emits.
//!
//! Inference runs on the product chain `Z = (R, S)`, coded `r * m1 + s`,
//! with `A[(i,k),(j,l)] = C[i][j] * D[j][k][l]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, DenseTransition, Posteriors};
use crate::hmm::{
    emission_counts, emission_matrix, flat_dirichlet, reestimate_rows, run_em, sample_categorical,
    EmOptions, FitReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TshmmParams {
    /// Values of the emitting chain `S`.
    pub m1: usize,
    /// Values of the regime chain `R`.
    pub m2: usize,
    pub n_symbols: usize,
    /// Over pairs, indexed `r * m1 + s`.
    pub initial: Vec<f64>,
    /// `c[i * m2 + j] = P(R_t = j | R_{t-1} = i)`
    pub c: Vec<f64>,
    /// `d[(j * m1 + k) * m1 + l] = P(S_t = l | R_t = j, S_{t-1} = k)`
    pub d: Vec<f64>,
    /// `m1 x K`, conditioned on `S` only.
    pub emission: Vec<f64>,
}

impl TshmmParams {
    pub fn random<R: Rng + ?Sized>(m1: usize, m2: usize, n_symbols: usize, rng: &mut R) -> Self {
        TshmmParams {
            m1,
            m2,
            n_symbols,
            initial: flat_dirichlet(m1 * m2, rng),
            c: (0..m2).flat_map(|_| flat_dirichlet(m2, rng)).collect(),
            d: (0..m2 * m1).flat_map(|_| flat_dirichlet(m1, rng)).collect(),
            emission: (0..m1).flat_map(|_| flat_dirichlet(n_symbols, rng)).collect(),
        }
    }

    pub fn n_product(&self) -> usize {
        self.m1 * self.m2
    }

    /// Dense `A` over the product chain.
    pub fn composite_transition(&self) -> Vec<f64> {
        let (m1, m2) = (self.m1, self.m2);
        let n = m1 * m2;
        let mut a = vec![0.0; n * n];
        for i in 0..m2 {
            for k in 0..m1 {
                let row = &mut a[(i * m1 + k) * n..(i * m1 + k + 1) * n];
                for j in 0..m2 {
                    let cij = self.c[i * m2 + j];
                    for l in 0..m1 {
                        row[j * m1 + l] = cij * self.d[(j * m1 + k) * m1 + l];
                    }
                }
            }
        }
        a
    }

    fn product_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        let base = emission_matrix(&self.emission, self.m1, self.n_symbols, obs)?;
        let n = self.n_product();
        let mut lik = Vec::with_capacity(obs.len() * n);
        for t in 0..obs.len() {
            for _ in 0..self.m2 {
                lik.extend_from_slice(&base[t * self.m1..(t + 1) * self.m1]);
            }
        }
        Ok(lik)
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<Posteriors<Vec<f64>>> {
        let a = self.composite_transition();
        let lik = self.product_likelihoods(obs)?;
        chain::forward_backward(&self.initial, &DenseTransition::new(self.n_product(), &a), &lik, None)
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let a = self.composite_transition();
        let lik = self.product_likelihoods(obs)?;
        chain::forward(&self.initial, &DenseTransition::new(self.n_product(), &a), &lik, None).map(|r| r.2)
    }

    /// Largest deviation from 1 over the row sums of `C` and `D`.
    pub fn constraint_residual(&self) -> f64 {
        self.c
            .chunks(self.m2)
            .chain(self.d.chunks(self.m1))
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<f64>>) -> Self {
        let (m1, m2) = (self.m1, self.m2);
        let n = m1 * m2;
        let mut c = vec![0.0; m2 * m2];
        let mut d = vec![0.0; m2 * m1 * m1];
        for i in 0..m2 {
            for k in 0..m1 {
                let row = &post.counts[(i * m1 + k) * n..(i * m1 + k + 1) * n];
                for j in 0..m2 {
                    for l in 0..m1 {
                        let xi = row[j * m1 + l];
                        c[i * m2 + j] += xi;
                        d[(j * m1 + k) * m1 + l] += xi;
                    }
                }
            }
        }
        let mut gamma_s = vec![0.0; obs.len() * m1];
        for t in 0..obs.len() {
            for (z, g) in post.gamma_at(t).iter().enumerate() {
                gamma_s[t * m1 + z % m1] += g;
            }
        }
        TshmmParams {
            m1,
            m2,
            n_symbols: self.n_symbols,
            initial: reestimate_rows(post.gamma_at(0), &self.initial, n),
            c: reestimate_rows(&c, &self.c, m2),
            d: reestimate_rows(&d, &self.d, m1),
            emission: reestimate_rows(
                &emission_counts(&gamma_s, m1, self.n_symbols, obs),
                &self.emission,
                self.n_symbols,
            ),
        }
    }

    /// Returns `(regimes, states, symbols)`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (m1, m2, k) = (self.m1, self.m2, self.n_symbols);
        let mut regimes = Vec::with_capacity(len);
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let (mut r, mut s) = (0, 0);
        for t in 0..len {
            if t == 0 {
                let z = sample_categorical(&self.initial, rng);
                (r, s) = (z / m1, z % m1);
            } else {
                r = sample_categorical(&self.c[r * m2..(r + 1) * m2], rng);
                let base = (r * m1 + s) * m1;
                s = sample_categorical(&self.d[base..base + m1], rng);
            }
            regimes.push(r);
            states.push(s);
            symbols.push(sample_categorical(&self.emission[s * k..(s + 1) * k], rng));
        }
        (regimes, states, symbols)
    }
}

/// EM with the proportional updates for `C` and `D`. `on_m_step` sees every
/// parameter set produced by an M-step.
pub fn train_tshmm_observed(
    init: TshmmParams,
    obs: &[usize],
    opts: &EmOptions,
    cap: usize,
    mut on_m_step: impl FnMut(&TshmmParams),
) -> Result<(TshmmParams, FitReport)> {
    if init.m1 == 0 || init.m2 == 0 {
        return Err(Error::InvalidParams("both hidden processes need at least one value".into()));
    }
    let size = init.m1 * init.m2;
    if size > cap {
        return Err(Error::StateSpaceTooLarge {
            size,
            cap,
            hint: "reduce m1 or m2",
        });
    }
    run_em(
        init,
        opts,
        |p| {
            let post = p.forward_backward(obs)?;
            Ok((post.log_likelihood, post))
        },
        |p, post| {
            let next = p.reestimate(obs, &post);
            on_m_step(&next);
            next
        },
    )
}

pub fn train_tshmm(init: TshmmParams, obs: &[usize], opts: &EmOptions, cap: usize) -> Result<(TshmmParams, FitReport)> {
    train_tshmm_observed(init, obs, opts, cap, |_| {})
}
