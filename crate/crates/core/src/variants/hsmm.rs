//! Explicit-duration hidden semi-Markov model.
//!
//! Inference runs on the first-order chain over `(state, remaining)` pairs,
//! `remaining` in `1..=D`: a segment entered with duration `d` counts down
//! to 1 and then jumps to a different state. The final observation must
//! close a segment, so the terminal weight is 1 on `remaining == 1` and 0
//! elsewhere; the likelihood is the sum over complete segmentations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::chain::{self, Posteriors, SparseTransition};
use crate::hmm::{
    emission_counts, emission_matrix, flat_dirichlet, reestimate_rows, run_em, sample_categorical,
    EmOptions, FitReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsmmParams {
    pub n_states: usize,
    pub n_symbols: usize,
    pub max_duration: usize,
    pub initial: Vec<f64>,
    /// Zero diagonal.
    pub transition: Vec<f64>,
    pub emission: Vec<f64>,
    /// `duration[i * D + d - 1] = p(d | i)` for `d = 1..=D`
    pub duration: Vec<f64>,
}

/// One sampled piece with its segment structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSample {
    pub states: Vec<usize>,
    pub symbols: Vec<usize>,
    pub dwell: Vec<usize>,
}

fn check_shape(n_states: usize, max_duration: usize, len: usize) -> Result<()> {
    if n_states < 2 {
        return Err(Error::InvalidParams(
            "a semi-Markov chain needs at least two states".into(),
        ));
    }
    if max_duration == 0 {
        return Err(Error::InvalidParams("maximum duration must be at least 1".into()));
    }
    if max_duration >= len {
        return Err(Error::TooShort {
            len,
            requirement: format!("must exceed the maximum duration {max_duration}"),
        });
    }
    Ok(())
}

impl HsmmParams {
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_symbols: usize,
        max_duration: usize,
        rng: &mut R,
    ) -> Self {
        let n = n_states;
        let initial = flat_dirichlet(n, rng);
        let mut transition = vec![0.0; n * n];
        for i in 0..n {
            let off = flat_dirichlet(n - 1, rng);
            let row = &mut transition[i * n..(i + 1) * n];
            for (j, p) in (0..n).filter(|&j| j != i).zip(off) {
                row[j] = p;
            }
        }
        let emission = (0..n).flat_map(|_| flat_dirichlet(n_symbols, rng)).collect();
        let duration = (0..n).flat_map(|_| flat_dirichlet(max_duration, rng)).collect();
        HsmmParams {
            n_states,
            n_symbols,
            max_duration,
            initial,
            transition,
            emission,
            duration,
        }
    }

    fn expanded_index(&self, state: usize, remaining: usize) -> usize {
        state * self.max_duration + remaining - 1
    }

    fn expand(&self) -> (SparseTransition, Vec<f64>, Vec<f64>) {
        let n = self.n_states;
        let dmax = self.max_duration;
        let mut rows = Vec::with_capacity(n * dmax);
        for i in 0..n {
            for r in 1..=dmax {
                if r > 1 {
                    rows.push(vec![(self.expanded_index(i, r - 1), 1.0)]);
                    continue;
                }
                let mut row = Vec::new();
                for j in 0..n {
                    let a = self.transition[i * n + j];
                    if a == 0.0 {
                        continue;
                    }
                    for d in 1..=dmax {
                        let p = a * self.duration[j * dmax + d - 1];
                        if p > 0.0 {
                            row.push((self.expanded_index(j, d), p));
                        }
                    }
                }
                rows.push(row);
            }
        }
        let mut initial = vec![0.0; n * dmax];
        let mut terminal = vec![0.0; n * dmax];
        for i in 0..n {
            for d in 1..=dmax {
                initial[self.expanded_index(i, d)] = self.initial[i] * self.duration[i * dmax + d - 1];
            }
            terminal[self.expanded_index(i, 1)] = 1.0;
        }
        (SparseTransition::from_rows(rows), initial, terminal)
    }

    fn expanded_likelihoods(&self, obs: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_states;
        let base = emission_matrix(&self.emission, n, self.n_symbols, obs)?;
        let mut lik = Vec::with_capacity(obs.len() * n * self.max_duration);
        for t in 0..obs.len() {
            for i in 0..n {
                lik.extend(std::iter::repeat_n(base[t * n + i], self.max_duration));
            }
        }
        Ok(lik)
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<(Posteriors<Vec<f64>>, SparseTransition)> {
        let (trans, initial, terminal) = self.expand();
        let lik = self.expanded_likelihoods(obs)?;
        let post = chain::forward_backward(&initial, &trans, &lik, Some(&terminal))?;
        Ok((post, trans))
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let (trans, initial, terminal) = self.expand();
        let lik = self.expanded_likelihoods(obs)?;
        chain::forward(&initial, &trans, &lik, Some(&terminal)).map(|r| r.2)
    }

    fn reestimate(&self, obs: &[usize], post: &Posteriors<Vec<f64>>, trans: &SparseTransition) -> Self {
        let n = self.n_states;
        let dmax = self.max_duration;
        let mut initial = vec![0.0; n];
        let mut transition = vec![0.0; n * n];
        let mut duration = vec![0.0; n * dmax];
        for i in 0..n {
            for d in 1..=dmax {
                let g = post.gamma[self.expanded_index(i, d)];
                initial[i] += g;
                duration[i * dmax + d - 1] += g;
            }
        }
        for e in 0..trans.n_edges() {
            let (src, dst) = (trans.edge_source(e), trans.edge_target(e));
            if src % dmax != 0 {
                continue; // countdown edge, carries no parameter
            }
            let (i, j, d) = (src / dmax, dst / dmax, dst % dmax + 1);
            transition[i * n + j] += post.counts[e];
            duration[j * dmax + d - 1] += post.counts[e];
        }
        let total = n * dmax;
        let mut gamma = vec![0.0; obs.len() * n];
        for t in 0..obs.len() {
            for s in 0..total {
                gamma[t * n + s / dmax] += post.gamma[t * total + s];
            }
        }
        HsmmParams {
            n_states: n,
            n_symbols: self.n_symbols,
            max_duration: dmax,
            initial: reestimate_rows(&initial, &self.initial, n),
            transition: reestimate_rows(&transition, &self.transition, n),
            emission: reestimate_rows(
                &emission_counts(&gamma, n, self.n_symbols, obs),
                &self.emission,
                self.n_symbols,
            ),
            duration: reestimate_rows(&duration, &self.duration, dmax),
        }
    }

    /// Draws segments until at least `len` symbols exist, then truncates
    /// the last segment.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> SegmentSample {
        let n = self.n_states;
        let k = self.n_symbols;
        let dmax = self.max_duration;
        let mut out = SegmentSample {
            states: Vec::with_capacity(len),
            symbols: Vec::with_capacity(len),
            dwell: Vec::new(),
        };
        let mut state = sample_categorical(&self.initial, rng);
        while out.symbols.len() < len {
            let d = sample_categorical(&self.duration[state * dmax..(state + 1) * dmax], rng) + 1;
            out.dwell.push(d);
            for _ in 0..d {
                out.states.push(state);
                out.symbols.push(sample_categorical(&self.emission[state * k..(state + 1) * k], rng));
            }
            state = sample_categorical(&self.transition[state * n..(state + 1) * n], rng);
        }
        out.states.truncate(len);
        out.symbols.truncate(len);
        out
    }
}

pub fn train_hsmm(init: HsmmParams, obs: &[usize], opts: &EmOptions) -> Result<(HsmmParams, FitReport)> {
    check_shape(init.n_states, init.max_duration, obs.len())?;
    run_em(
        init,
        opts,
        |p| {
            let (post, trans) = p.forward_backward(obs)?;
            Ok((post.log_likelihood, (post, trans)))
        },
        |p, (post, trans)| p.reestimate(obs, &post, &trans),
    )
}
