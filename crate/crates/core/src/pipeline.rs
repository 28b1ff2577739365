//! File-level pipeline behind the command-line tool: train, generate,
//! evaluate, rank and export, each leaving a manifest next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::EmOptions;
use crate::metrics::{self, Criterion, EvaluationReport};
use crate::midi::{self, PitchSequence};
use crate::variants::{self, ModelKind, ModelSpec, TrainOptions, TrainedModel, VariantParams};

pub const OUT_ENV: &str = "PITCHCHAIN_OUT";
pub const DEFAULT_OUT: &str = "pitchchain-out";
pub const DEFAULT_BATCH: usize = 1000;
pub const DEFAULT_TOP: usize = 3;
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_JSON: &str = "report.json";

/// Output root: `$PITCHCHAIN_OUT`, else `./pitchchain-out`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T, what: &str) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: format!("serializing {what}"),
        source,
    })
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

pub fn load_piece(path: &Path) -> Result<PitchSequence> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = midi::parse_midi_csv(&read(path)?, &name)?;
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(seq)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    from_json(&read(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub input: PathBuf,
    pub model: String,
    pub states: Option<usize>,
    pub order: Option<usize>,
    pub layers: Option<usize>,
    pub dmax: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub out: PathBuf,
}

impl TrainConfig {
    pub fn new(input: impl Into<PathBuf>, model: &str, out: impl Into<PathBuf>) -> Self {
        TrainConfig {
            input: input.into(),
            model: model.to_string(),
            states: None,
            order: None,
            layers: None,
            dmax: None,
            seed: 0,
            tol: crate::hmm::DEFAULT_TOL,
            max_iter: crate::hmm::DEFAULT_MAX_ITER,
            restarts: 1,
            out: out.into(),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::registry(&self.model)?;
        if let Some(layers) = self.layers {
            if spec.kind != ModelKind::Lhmm {
                return Err(Error::InvalidParams("--layers applies to the layered model only".into()));
            }
            spec = spec.with_layers(layers);
        }
        if let Some(n) = self.states {
            spec = spec.with_states(n);
        }
        if let Some(k) = self.order {
            if !matches!(spec.kind, ModelKind::Khmm | ModelKind::Klrhmm | ModelKind::Tvar) {
                return Err(Error::InvalidParams("--order applies to k-order and TVAR models only".into()));
            }
            if spec.kind == ModelKind::Tvar {
                if let Some(t) = spec.tvar.as_mut() {
                    t.orders = vec![k];
                }
            } else {
                spec.order = k;
            }
        }
        if self.dmax.is_some() {
            if !matches!(spec.kind, ModelKind::Hsmm | ModelKind::Nshmm) {
                return Err(Error::InvalidParams("--dmax applies to duration models only".into()));
            }
            spec.max_duration = self.dmax;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub command: String,
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub model_path: PathBuf,
    pub final_log_likelihood: Option<f64>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

pub fn cmd_train(cfg: &TrainConfig) -> Result<TrainManifest> {
    let start = Instant::now();
    let piece = load_piece(&cfg.input)?;
    let spec = cfg.model_spec()?;
    let opts = TrainOptions {
        em: EmOptions {
            tol: cfg.tol,
            max_iter: cfg.max_iter,
        },
        seed: cfg.seed,
        restarts: cfg.restarts.max(1),
        ..TrainOptions::default()
    };
    let model = variants::train(&spec, &piece, &opts)?;
    let model_path = cfg.out.join(MODEL_FILE);
    write(&model_path, &model.to_json()?)?;
    if let VariantParams::Tvar(t) = &model.params {
        let mut csv = String::from("order,state_discount,variance_discount,log_marginal,chosen\n");
        for c in &t.grid.cells {
            let chosen = c == &t.grid.best;
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                c.order, c.state_discount, c.variance_discount, c.log_marginal, chosen
            );
        }
        write(&cfg.out.join("tvar_grid.csv"), &csv)?;
    }
    let final_log_likelihood = match &model.params {
        VariantParams::Tvar(t) => Some(t.log_marginal),
        _ => model
            .summary
            .fit_report
            .as_ref()
            .and_then(|r| r.final_log_likelihood())
            .or_else(|| model.log_likelihood(&model.alphabet.encode(&model.training).ok()?)?.ok()),
    };
    let manifest = TrainManifest {
        command: "train".into(),
        config: cfg.clone(),
        spec,
        model_path,
        final_log_likelihood,
        warnings: model.summary.warnings.clone(),
        seconds: start.elapsed().as_secs_f64(),
    };
    write(&cfg.out.join(MANIFEST_FILE), &to_json(&manifest, "manifest")?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub model_path: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub midi_csv: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub command: String,
    pub config: GenerateConfig,
    pub model: String,
    pub training_source: String,
    /// `seeds[i] = master + i`
    pub seeds: Vec<u64>,
    pub pieces: Vec<PathBuf>,
    pub seconds: f64,
}

pub fn piece_file_name(i: usize) -> String {
    format!("piece_{i:04}.txt")
}

fn pitch_line(seq: &PitchSequence) -> String {
    let mut line = seq
        .pitches()
        .iter()
        .map(u8::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    line.push('\n');
    line
}

/// Seeded batch of pieces. Piece `i` uses seed `master + i` and the
/// training piece's timing.
pub fn generate_batch(model: &TrainedModel, n: usize, seed: u64) -> Result<Vec<PitchSequence>> {
    let sampler = model.sampler()?;
    (0..n)
        .into_par_iter()
        .map(|i| sampler.generate_piece(seed.wrapping_add(i as u64), &format!("piece_{i:04}")))
        .collect()
}

pub fn cmd_generate(cfg: &GenerateConfig) -> Result<GenerateManifest> {
    if cfg.n == 0 {
        return Err(Error::InvalidParams("batch size must be at least 1".into()));
    }
    let start = Instant::now();
    let model = load_model(&cfg.model_path)?;
    let batch = generate_batch(&model, cfg.n, cfg.seed)?;
    let mut pieces = Vec::with_capacity(cfg.n);
    for (i, piece) in batch.iter().enumerate() {
        let path = cfg.out.join(piece_file_name(i));
        write(&path, &pitch_line(piece))?;
        if cfg.midi_csv {
            let csv = midi::emit_midi_csv(piece, midi::default_note_duration(piece.ticks_per_quarter))?;
            write(&path.with_extension("csv"), &csv)?;
        }
        pieces.push(path);
    }
    let manifest = GenerateManifest {
        command: "generate".into(),
        config: cfg.clone(),
        model: model.spec.label(),
        training_source: model.training.source_name.clone(),
        seeds: (0..cfg.n as u64).map(|i| cfg.seed.wrapping_add(i)).collect(),
        pieces,
        seconds: start.elapsed().as_secs_f64(),
    };
    write(&cfg.out.join(MANIFEST_FILE), &to_json(&manifest, "manifest")?)?;
    Ok(manifest)
}

fn parse_pitch_line(text: &str, path: &Path) -> Result<Vec<u8>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<u8>().ok().filter(|p| *p <= 127).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("{}: bad pitch {tok:?}", path.display()),
            })
        })
        .collect()
}

/// Reads `piece_*.txt` files of a batch directory in name order. Pieces
/// whose length does not match the training piece come back as errors.
pub fn load_batch(dir: &Path, training: &PitchSequence) -> Result<Vec<(PathBuf, Result<PitchSequence>)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "txt")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("piece_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParams(format!("{} holds no piece files", dir.display())));
    }
    Ok(paths
        .into_iter()
        .map(|p| {
            let piece = read(&p).and_then(|text| {
                let pitches = parse_pitch_line(&text, &p)?;
                let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                training.with_pitches(&pitches, &name)
            });
            (p, piece)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub input: PathBuf,
    pub batch: PathBuf,
    pub out: PathBuf,
    pub max_lag: usize,
}

/// Report as stored on disk, labelled with the model that produced the
/// batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledReport {
    pub model: String,
    pub batch: PathBuf,
    pub piece_files: Vec<PathBuf>,
    pub report: EvaluationReport,
}

pub fn cmd_evaluate(cfg: &EvaluateConfig) -> Result<LabelledReport> {
    let training = load_piece(&cfg.input)?;
    if !cfg.batch.is_dir() {
        return Err(Error::InvalidParams(format!("batch directory {} not found", cfg.batch.display())));
    }
    let model = match read(&cfg.batch.join(MANIFEST_FILE)) {
        Ok(text) => from_json::<GenerateManifest>(&text, &cfg.batch.join(MANIFEST_FILE))?.model,
        Err(_) => cfg.batch.display().to_string(),
    };
    let loaded = load_batch(&cfg.batch, &training)?;
    let mut pieces = Vec::new();
    let mut files = Vec::new();
    let mut load_failures = Vec::new();
    for (i, (path, piece)) in loaded.into_iter().enumerate() {
        match piece {
            Ok(p) => {
                pieces.push(p);
                files.push(path);
            }
            Err(e) => load_failures.push((i, path, e.to_string())),
        }
    }
    if pieces.is_empty() {
        return Err(Error::InvalidParams(format!(
            "no readable piece in {} (first failure: {})",
            cfg.batch.display(),
            load_failures[0].2
        )));
    }
    let mut report = metrics::evaluate_batch(&training, &pieces, cfg.max_lag)?;
    // indices in the report refer to `files`; keep load failures visible too
    for (_, path, reason) in load_failures {
        report.skipped.push(metrics::SkippedPiece {
            index: usize::MAX,
            reason: format!("{}: {reason}", path.display()),
        });
    }
    let labelled = LabelledReport {
        model,
        batch: cfg.batch.clone(),
        piece_files: files,
        report,
    };
    write_report_files(&cfg.out, &labelled)?;
    Ok(labelled)
}

pub fn write_report_files(out: &Path, labelled: &LabelledReport) -> Result<()> {
    let report = &labelled.report;
    let mut summary = String::from("metric,value\n");
    for (name, v) in report.summary_rows() {
        let _ = writeln!(summary, "{name},{v}");
    }
    write(&out.join("report.csv"), &summary)?;
    write(&out.join(REPORT_JSON), &to_json(labelled, "report")?)?;

    let mut long = String::from("piece,metric,value\n");
    for p in &report.pieces {
        let name = labelled.piece_files[p.index]
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        for (metric, v) in [
            ("entropy", p.metrics.entropy),
            ("dissonance_rate", p.metrics.dissonance_rate),
            ("large_interval_rate", p.metrics.large_interval_rate),
            ("mutual_information", p.mutual_information),
            ("edit_distance", p.edit_distance),
            ("entropy_error", p.entropy_error),
            ("note_count_rmse", p.note_count_rmse),
            ("acf_rmse", p.acf_rmse),
            ("pacf_rmse", p.pacf_rmse),
            ("musicality_avg", p.musicality_avg),
            ("temporal_avg", p.temporal_avg),
        ] {
            let _ = writeln!(long, "{name},{metric},{v}");
        }
    }
    write(&out.join("pieces.csv"), &long)?;

    for (file, train, mean) in [
        ("acf.csv", &report.training.acf, &report.mean_acf),
        ("pacf.csv", &report.training.pacf, &report.mean_pacf),
    ] {
        let mut csv = String::from("lag,training,batch_mean\n");
        for (h, (a, b)) in train.iter().zip(mean).enumerate() {
            let _ = writeln!(csv, "{},{a},{b}", h + 1);
        }
        write(&out.join(file), &csv)?;
    }
    if !report.skipped.is_empty() {
        let mut csv = String::from("piece,reason\n");
        for s in &report.skipped {
            let label = labelled
                .piece_files
                .get(s.index)
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            let _ = writeln!(csv, "{label},\"{}\"", s.reason.replace('"', "'"));
        }
        write(&out.join("skipped.csv"), &csv)?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<LabelledReport> {
    let path = if path.is_dir() { path.join(REPORT_JSON) } else { path.to_path_buf() };
    from_json(&read(&path)?, &path)
}

/// Registry position for `M<n>` labels, so `M2` sorts before `M10`.
fn model_order_key(label: &str) -> (usize, String) {
    let pos = variants::REGISTRY_IDS
        .iter()
        .position(|id| id.eq_ignore_ascii_case(label))
        .unwrap_or(usize::MAX);
    (pos, label.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub model: String,
    pub value: f64,
    pub source: PathBuf,
}

/// Ascending by criterion, ties broken by model id.
pub fn rank_reports(reports: &[(PathBuf, LabelledReport)], criterion: Criterion) -> Vec<RankRow> {
    let mut rows: Vec<(&PathBuf, &LabelledReport)> = reports.iter().map(|(p, r)| (p, r)).collect();
    rows.sort_by(|a, b| {
        a.1.report
            .criterion_value(criterion)
            .total_cmp(&b.1.report.criterion_value(criterion))
            .then_with(|| model_order_key(&a.1.model).cmp(&model_order_key(&b.1.model)))
            .then_with(|| a.0.cmp(b.0))
    });
    rows.into_iter()
        .enumerate()
        .map(|(i, (path, r))| RankRow {
            rank: i + 1,
            model: r.model.clone(),
            value: r.report.criterion_value(criterion),
            source: path.clone(),
        })
        .collect()
}

pub fn cmd_rank(paths: &[PathBuf], criterion: Criterion) -> Result<Vec<RankRow>> {
    if paths.is_empty() {
        return Err(Error::InvalidParams("no reports given".into()));
    }
    let reports = paths
        .iter()
        .map(|p| Ok((p.clone(), load_report(p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_reports(&reports, criterion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    pub report: PathBuf,
    pub criteria: Vec<Criterion>,
    pub top: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportManifest {
    pub command: String,
    pub config: ExportConfig,
    pub model: String,
    pub selected: Vec<ExportedPiece>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportedPiece {
    pub criterion: Criterion,
    pub source: PathBuf,
    pub midi_csv: PathBuf,
    pub value: f64,
}

/// Copies the best pieces per criterion as MIDI-CSV. Criteria take turns
/// and a piece already chosen for an earlier criterion is skipped.
pub fn cmd_export(cfg: &ExportConfig) -> Result<ExportManifest> {
    let labelled = load_report(&cfg.report)?;
    let training = {
        let manifest_path = labelled.batch.join(MANIFEST_FILE);
        let gm: GenerateManifest = from_json(&read(&manifest_path)?, &manifest_path)?;
        load_model(&gm.config.model_path)?.training
    };
    let picks = metrics::select_top(&labelled.report, &cfg.criteria, cfg.top);
    let mut selected = Vec::new();
    for (criterion, index) in picks {
        let source = labelled.piece_files[index].clone();
        let pitches = parse_pitch_line(&read(&source)?, &source)?;
        let stem = source.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let piece = training.with_pitches(&pitches, &stem)?;
        let csv = midi::emit_midi_csv(&piece, midi::default_note_duration(piece.ticks_per_quarter))?;
        let dest = cfg.out.join(format!("{}_{stem}.csv", criterion.name()));
        write(&dest, &csv)?;
        let value = labelled
            .report
            .pieces
            .iter()
            .find(|p| p.index == index)
            .map(|p| p.criterion_value(criterion))
            .unwrap_or(f64::NAN);
        selected.push(ExportedPiece {
            criterion,
            source,
            midi_csv: dest,
            value,
        });
    }
    let manifest = ExportManifest {
        command: "export".into(),
        config: cfg.clone(),
        model: labelled.model,
        selected,
    };
    write(&cfg.out.join(MANIFEST_FILE), &to_json(&manifest, "manifest")?)?;
    Ok(manifest)
}
