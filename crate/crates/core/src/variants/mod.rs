//! Model registry and the uniform train/sample interface over every model
//! family.

pub mod arhmm;
pub mod fhmm;
pub mod hsmm;
pub mod khmm;
pub mod lhmm;
pub mod nshmm;
pub mod tshmm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{baum_welch, seeded_rng, EmOptions, FitReport, HmmParams};
use crate::midi::{build_alphabet, PitchAlphabet, PitchSequence};
use crate::tvar::{self, GridSearch, TvarFit, TvarSpec};

pub use arhmm::{train_arhmm, ArhmmParams};
pub use fhmm::{train_fhmm, FhmmParams};
pub use hsmm::{train_hsmm, HsmmParams};
pub use khmm::{train_khmm, KhmmParams, DEFAULT_TUPLE_CAP};
pub use lhmm::{train_lhmm, LhmmFit, LhmmParams};
pub use nshmm::{train_nshmm, McmcReport, NshmmOptions, NshmmParams};
pub use tshmm::{train_tshmm, TshmmParams};

/// Duration cap used by the semi-Markov and dwell models when none is
/// given. Clamped to `T - 1` on short pieces.
pub const DEFAULT_MAX_DURATION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Hmm,
    Khmm,
    Lrhmm,
    Klrhmm,
    Arhmm,
    Hsmm,
    Nshmm,
    Tshmm,
    Fhmm,
    Lhmm,
    Tvar,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub registry_id: Option<String>,
    pub kind: ModelKind,
    /// Markov order for the tuple models, 1 otherwise.
    pub order: usize,
    /// `[n]`, `[m1, m2]`, per-chain sizes or per-layer sizes.
    pub states: Vec<usize>,
    pub max_duration: Option<usize>,
    pub tvar: Option<TvarSpec>,
}

pub const REGISTRY_IDS: [&str; 15] = [
    "M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8", "M9", "M10", "M11", "M12", "M13", "M14", "M15",
];

impl ModelSpec {
    fn new(id: &str, kind: ModelKind, order: usize, states: Vec<usize>) -> Self {
        ModelSpec {
            registry_id: Some(id.to_string()),
            kind,
            order,
            states,
            max_duration: None,
            tvar: None,
        }
    }

    pub fn registry(id: &str) -> Result<Self> {
        use ModelKind::*;
        let key = id.trim().to_ascii_uppercase();
        let spec = match key.as_str() {
            "M1" => Self::new("M1", Hmm, 1, vec![25]),
            "M2" => Self::new("M2", Khmm, 2, vec![25]),
            "M3" => Self::new("M3", Khmm, 3, vec![10]),
            "M4" => Self::new("M4", Lrhmm, 1, vec![25]),
            "M5" => Self::new("M5", Klrhmm, 2, vec![25]),
            "M6" => Self::new("M6", Klrhmm, 3, vec![10]),
            "M7" => Self::new("M7", Arhmm, 1, vec![25]),
            "M8" => Self::new("M8", Hsmm, 1, vec![25]),
            "M9" => Self::new("M9", Nshmm, 1, vec![25]),
            "M10" => Self::new("M10", Tshmm, 1, vec![10, 5]),
            "M11" => Self::new("M11", Tshmm, 1, vec![5, 10]),
            "M12" => Self::new("M12", Fhmm, 1, vec![15, 10, 5]),
            "M13" => Self::new("M13", Lhmm, 1, vec![25, 25, 25]),
            "M14" => ModelSpec {
                tvar: Some(TvarSpec::default()),
                ..Self::new("M14", Tvar, 1, Vec::new())
            },
            "M15" => Self::new("M15", Random, 1, vec![25]),
            _ => return Err(Error::UnknownModel(id.to_string())),
        };
        Ok(spec)
    }

    pub fn all() -> Vec<ModelSpec> {
        REGISTRY_IDS
            .iter()
            .map(|id| Self::registry(id).expect("registry id"))
            .collect()
    }

    /// Replaces every state count with `n` (layer count is kept).
    pub fn with_states(mut self, n: usize) -> Self {
        self.states.iter_mut().for_each(|s| *s = n);
        self
    }

    /// For layered models: `layers` copies of the current per-layer size.
    pub fn with_layers(mut self, layers: usize) -> Self {
        let size = self.states.first().copied().unwrap_or(1);
        self.states = vec![size; layers];
        self
    }

    pub fn label(&self) -> String {
        self.registry_id.clone().unwrap_or_else(|| format!("{:?}", self.kind))
    }

    pub fn validate(&self) -> Result<()> {
        use ModelKind::*;
        if self.kind == Tvar {
            return self.tvar.as_ref().map_or(Ok(()), TvarSpec::validate);
        }
        if self.states.is_empty() || self.states.contains(&0) {
            return Err(Error::InvalidParams("state counts must be positive".into()));
        }
        let expected = match self.kind {
            Tshmm => Some(2),
            Fhmm | Lhmm => None,
            _ => Some(1),
        };
        if let Some(e) = expected {
            if self.states.len() != e {
                return Err(Error::InvalidParams(format!(
                    "{:?} takes {e} state count(s), got {}",
                    self.kind,
                    self.states.len()
                )));
            }
        }
        if matches!(self.kind, Khmm | Klrhmm) && self.order == 0 {
            return Err(Error::InvalidParams("order must be at least 1".into()));
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelSpec::registry(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub em: EmOptions,
    pub seed: u64,
    /// EM restarts; restart `r` initializes from `seed + r` and the best
    /// final log-likelihood is kept.
    pub restarts: usize,
    pub tuple_cap: usize,
    pub nshmm: NshmmOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            em: EmOptions::default(),
            seed: 0,
            restarts: 1,
            tuple_cap: DEFAULT_TUPLE_CAP,
            nshmm: NshmmOptions::default(),
        }
    }
}

/// Chosen TVAR cell plus the full grid for audit. The filter itself is
/// recomputed from the training piece when sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvarModel {
    pub order: usize,
    pub state_discount: f64,
    pub variance_discount: f64,
    pub log_marginal: f64,
    pub grid_spec: TvarSpec,
    pub grid: GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind")]
pub enum VariantParams {
    #[serde(rename = "HMM")]
    Hmm(HmmParams),
    #[serde(rename = "KHMM")]
    Khmm(KhmmParams),
    #[serde(rename = "ARHMM")]
    Arhmm(ArhmmParams),
    #[serde(rename = "HSMM")]
    Hsmm(HsmmParams),
    #[serde(rename = "NSHMM")]
    Nshmm(NshmmParams),
    #[serde(rename = "TSHMM")]
    Tshmm(TshmmParams),
    #[serde(rename = "FHMM")]
    Fhmm(FhmmParams),
    #[serde(rename = "LHMM")]
    Lhmm(LhmmParams),
    #[serde(rename = "TVAR")]
    Tvar(TvarModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingSummary {
    pub seed: u64,
    /// EM trace of the kept restart (layer 1 for layered models).
    pub fit_report: Option<FitReport>,
    pub restart_log_likelihoods: Vec<f64>,
    pub layer_reports: Vec<FitReport>,
    pub mcmc: Option<McmcReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub alphabet: PitchAlphabet,
    pub training: PitchSequence,
    pub summary: TrainingSummary,
    #[serde(flatten)]
    pub params: VariantParams,
}

impl fmt::Display for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {} ({} notes)", self.spec.label(), self.training.source_name, self.training.len())
    }
}

fn default_duration(spec: &ModelSpec, len: usize) -> Result<usize> {
    if len < 2 {
        return Err(Error::TooShort {
            len,
            requirement: "duration models need at least two observations".into(),
        });
    }
    Ok(spec.max_duration.unwrap_or(DEFAULT_MAX_DURATION).min(len - 1))
}

/// Runs `fit(seed + r)` for every restart and keeps the best final
/// log-likelihood (earliest restart on ties).
fn best_of<P>(
    opts: &TrainOptions,
    mut fit: impl FnMut(u64) -> Result<(P, FitReport)>,
) -> Result<(P, TrainingSummary)> {
    let mut best: Option<(P, FitReport, f64)> = None;
    let mut lls = Vec::new();
    for r in 0..opts.restarts.max(1) {
        let seed = opts.seed.wrapping_add(r as u64);
        let (p, mut report) = fit(seed)?;
        report.seed = Some(seed);
        let ll = report.final_log_likelihood().unwrap_or(f64::NEG_INFINITY);
        lls.push(ll);
        if best.as_ref().is_none_or(|b| ll > b.2) {
            best = Some((p, report, ll));
        }
    }
    let (p, report, _) = best.expect("at least one restart");
    Ok((
        p,
        TrainingSummary {
            seed: opts.seed,
            fit_report: Some(report),
            restart_log_likelihoods: lls,
            ..TrainingSummary::default()
        },
    ))
}

pub fn pitch_series(seq: &PitchSequence) -> Vec<f64> {
    seq.events.iter().map(|e| e.pitch as f64).collect()
}

pub fn train(spec: &ModelSpec, training: &PitchSequence, opts: &TrainOptions) -> Result<TrainedModel> {
    use ModelKind::*;
    spec.validate()?;
    if training.is_empty() {
        return Err(Error::EmptySequence);
    }
    let alphabet = build_alphabet(training)?;
    let obs = alphabet.encode(training)?;
    let k = alphabet.len();
    let n = spec.states.first().copied().unwrap_or(0);
    let em = &opts.em;

    let (params, summary) = match spec.kind {
        Hmm | Lrhmm => {
            let left_right = spec.kind == Lrhmm;
            let (p, s) = best_of(opts, |seed| {
                let mut rng = seeded_rng(seed);
                let init = if left_right {
                    HmmParams::random_left_right(n, k, &mut rng)
                } else {
                    HmmParams::random(n, k, &mut rng)
                };
                baum_welch(init, &obs, em)
            })?;
            (VariantParams::Hmm(p), s)
        }
        Khmm | Klrhmm => {
            khmm::tuple_space(n, spec.order, opts.tuple_cap)?;
            let left_right = spec.kind == Klrhmm;
            let (p, s) = best_of(opts, |seed| {
                let init = KhmmParams::random(spec.order, n, k, left_right, &mut seeded_rng(seed));
                train_khmm(init, &obs, em, opts.tuple_cap)
            })?;
            (VariantParams::Khmm(p), s)
        }
        Arhmm => {
            let (p, s) = best_of(opts, |seed| {
                train_arhmm(ArhmmParams::random(n, k, &mut seeded_rng(seed)), &obs, em)
            })?;
            (VariantParams::Arhmm(p), s)
        }
        Hsmm => {
            let dmax = default_duration(spec, obs.len())?;
            let (p, s) = best_of(opts, |seed| {
                train_hsmm(HsmmParams::random(n, k, dmax, &mut seeded_rng(seed)), &obs, em)
            })?;
            (VariantParams::Hsmm(p), s)
        }
        Nshmm => {
            let dmax = default_duration(spec, obs.len())?;
            let (p, report) = train_nshmm(n, dmax, &obs, k, &opts.nshmm, opts.seed)?;
            let summary = TrainingSummary {
                seed: opts.seed,
                fit_report: Some(report.warm_start.clone()),
                mcmc: Some(report),
                ..TrainingSummary::default()
            };
            (VariantParams::Nshmm(p), summary)
        }
        Tshmm => {
            let (m1, m2) = (spec.states[0], spec.states[1]);
            let (p, s) = best_of(opts, |seed| {
                train_tshmm(TshmmParams::random(m1, m2, k, &mut seeded_rng(seed)), &obs, em, opts.tuple_cap)
            })?;
            (VariantParams::Tshmm(p), s)
        }
        Fhmm => {
            let (p, s) = best_of(opts, |seed| {
                train_fhmm(FhmmParams::random(&spec.states, k, &mut seeded_rng(seed)), &obs, em, opts.tuple_cap)
            })?;
            (VariantParams::Fhmm(p), s)
        }
        Lhmm => {
            let fit = train_lhmm(&spec.states, &obs, k, em, opts.seed)?;
            let summary = TrainingSummary {
                seed: opts.seed,
                fit_report: fit.reports.first().cloned(),
                layer_reports: fit.reports,
                warnings: fit.warnings,
                ..TrainingSummary::default()
            };
            (VariantParams::Lhmm(fit.params), summary)
        }
        Tvar => {
            let tspec = spec.tvar.clone().unwrap_or_default();
            let grid = tvar::grid_search(&tspec, &pitch_series(training))?;
            let best = grid.best;
            let model = TvarModel {
                order: best.order,
                state_discount: best.state_discount,
                variance_discount: best.variance_discount,
                log_marginal: best.log_marginal,
                grid_spec: tspec,
                grid,
            };
            let summary = TrainingSummary {
                seed: opts.seed,
                ..TrainingSummary::default()
            };
            (VariantParams::Tvar(model), summary)
        }
        Random => {
            let p = crate::hmm::random_params(n, k, opts.seed);
            let summary = TrainingSummary {
                seed: opts.seed,
                fit_report: Some(FitReport {
                    seed: Some(opts.seed),
                    ..FitReport::default()
                }),
                ..TrainingSummary::default()
            };
            (VariantParams::Hmm(p), summary)
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        alphabet,
        training: training.clone(),
        summary,
        params,
    })
}

/// A trained model ready to draw pieces. Holds the refitted filter for
/// TVAR so repeated draws do not refilter.
pub struct Sampler<'a> {
    model: &'a TrainedModel,
    tvar_fit: Option<TvarFit>,
    series: Vec<f64>,
}

impl TrainedModel {
    pub fn sampler(&self) -> Result<Sampler<'_>> {
        let series = pitch_series(&self.training);
        let tvar_fit = match &self.params {
            VariantParams::Tvar(t) => Some(tvar::fit_tvar(
                &series,
                t.order,
                t.state_discount,
                t.variance_discount,
                &t.grid_spec,
            )?),
            _ => None,
        };
        Ok(Sampler {
            model: self,
            tvar_fit,
            series,
        })
    }

    pub fn training_len(&self) -> usize {
        self.training.len()
    }

    /// Log-likelihood of an encoded sequence, for the models that have
    /// one in closed form.
    pub fn log_likelihood(&self, obs: &[usize]) -> Option<Result<f64>> {
        Some(match &self.params {
            VariantParams::Hmm(p) => p.log_likelihood(obs),
            VariantParams::Khmm(p) => p.log_likelihood(obs),
            VariantParams::Arhmm(p) => p.log_likelihood(obs),
            VariantParams::Hsmm(p) => p.log_likelihood(obs),
            VariantParams::Nshmm(p) => p.log_likelihood(obs),
            VariantParams::Tshmm(p) => p.log_likelihood(obs),
            VariantParams::Fhmm(p) => p.log_likelihood(obs),
            VariantParams::Lhmm(p) => p.layers[0].log_likelihood(obs),
            VariantParams::Tvar(_) => return None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "serializing model".into(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "model file".into(),
            source,
        })
    }
}

impl Sampler<'_> {
    /// Alphabet indices of a piece of length `len`.
    pub fn sample_symbols(&self, len: usize, seed: u64) -> Result<Vec<usize>> {
        let mut rng = seeded_rng(seed);
        Ok(match &self.model.params {
            VariantParams::Hmm(p) => p.sample(len, &mut rng).1,
            VariantParams::Khmm(p) => p.sample(len, &mut rng).1,
            VariantParams::Arhmm(p) => p.sample(len, &mut rng).1,
            VariantParams::Hsmm(p) => p.sample(len, &mut rng).symbols,
            VariantParams::Nshmm(p) => p.sample(len, &mut rng).1,
            VariantParams::Tshmm(p) => p.sample(len, &mut rng).2,
            VariantParams::Fhmm(p) => p.sample(len, &mut rng).1,
            VariantParams::Lhmm(p) => p.sample(len, &mut rng),
            VariantParams::Tvar(_) => {
                let fit = self.tvar_fit.as_ref().expect("filter prepared");
                let traj = tvar::backward_sample(fit, &mut rng);
                let series = tvar::simulate(&traj.coefficients, Some(&traj.precisions), &self.series, len, &mut rng);
                tvar::bin_to_alphabet(&series, &self.model.alphabet)?
            }
        })
    }

    /// A piece on the training piece's timing grid.
    pub fn generate_piece(&self, seed: u64, name: &str) -> Result<PitchSequence> {
        let symbols = self.sample_symbols(self.model.training_len(), seed)?;
        let pitches = self.model.alphabet.decode(&symbols)?;
        self.model.training.with_pitches(&pitches, name)
    }
}

/// One-shot sampling of `len` symbols.
pub fn sample_variant(model: &TrainedModel, len: usize, seed: u64) -> Result<Vec<usize>> {
    model.sampler()?.sample_symbols(len, seed)
}
