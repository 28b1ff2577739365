//! Layered HMM: each layer is a plain HMM trained on the Viterbi path of
//! the layer below. Layer 0 emits pitches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{baum_welch, sample_categorical, seeded_rng, EmOptions, FitReport, HmmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhmmParams {
    pub layers: Vec<HmmParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhmmFit {
    pub params: LhmmParams,
    pub reports: Vec<FitReport>,
    /// Observations each layer was trained on, layer 0 first.
    pub layer_inputs: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Seed for the initialization of layer `layer`.
pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_add((layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn train_lhmm(
    layer_sizes: &[usize],
    obs: &[usize],
    n_symbols: usize,
    opts: &EmOptions,
    seed: u64,
) -> Result<LhmmFit> {
    if layer_sizes.is_empty() {
        return Err(Error::InvalidParams("a layered model needs at least one layer".into()));
    }
    let mut fit = LhmmFit {
        params: LhmmParams { layers: Vec::new() },
        reports: Vec::new(),
        layer_inputs: Vec::new(),
        warnings: Vec::new(),
    };
    let mut input = obs.to_vec();
    let mut alphabet = n_symbols;
    for (layer, &n) in layer_sizes.iter().enumerate() {
        let init = HmmParams::random(n, alphabet, &mut seeded_rng(layer_seed(seed, layer)));
        let (params, report) = baum_welch(init, &input, opts)?;
        let path = params.viterbi(&input)?;
        fit.layer_inputs.push(std::mem::replace(&mut input, path));
        fit.params.layers.push(params);
        fit.reports.push(report);
        if layer + 1 < layer_sizes.len() {
            let mut used = input.clone();
            used.sort_unstable();
            used.dedup();
            if used.len() < 2 {
                fit.warnings.push(format!(
                    "layer {} Viterbi path visits {} distinct state(s); layer {} sees a constant input",
                    layer + 1,
                    used.len(),
                    layer + 2
                ));
            }
        }
        alphabet = n;
    }
    Ok(fit)
}

impl LhmmParams {
    /// Top-down ancestral sampling: the top layer runs its chain, and each
    /// layer's emissions are the hidden states of the layer below.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let (top, below) = self.layers.split_last().expect("at least one layer");
        let (_, mut symbols) = top.sample(len, rng);
        for layer in below.iter().rev() {
            let k = layer.n_symbols;
            symbols = symbols
                .iter()
                .map(|&z| sample_categorical(&layer.emission[z * k..(z + 1) * k], rng))
                .collect();
        }
        symbols
    }
}
