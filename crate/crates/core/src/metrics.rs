//! Originality, musicality and temporal-structure metrics, and the
//! RMSE-based batch report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{build_alphabet, PitchAlphabet, PitchSequence};

pub const DEFAULT_MAX_LAG: usize = 40;
pub const OCTAVE: i32 = 12;

/// Interval classes (mod 12) counted as dissonant.
pub const DISSONANT_CLASSES: [i32; 4] = [1, 2, 10, 11];

fn counts<T: Ord + Copy>(items: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
    let mut map = BTreeMap::new();
    for x in items {
        *map.entry(x).or_insert(0) += 1;
    }
    map
}

/// Plug-in entropy in nats.
pub fn empirical_entropy(pitches: &[u8]) -> Result<f64> {
    if pitches.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = pitches.len() as f64;
    Ok(counts(pitches.iter().copied())
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// Plug-in mutual information (nats) of the aligned pairs `(a_t, b_t)` over
/// the first `min(|a|, |b|)` positions.
pub fn mutual_information(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySequence);
    }
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let n = len as f64;
    let pa = counts(a.iter().copied());
    let pb = counts(b.iter().copied());
    let joint = counts(a.iter().copied().zip(b.iter().copied()));
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = pa[&x] as f64 / n;
            let py = pb[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the longer length; 0 for two empty
/// sequences.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

fn interval_class(a: u8, b: u8) -> i32 {
    (a as i32 - b as i32).abs() % OCTAVE
}

fn is_dissonant(a: u8, b: u8) -> bool {
    DISSONANT_CLASSES.contains(&interval_class(a, b))
}

/// Top (max) and bottom (min) pitch of every chord, in time order.
pub fn outer_lines(seq: &PitchSequence) -> (Vec<u8>, Vec<u8>) {
    seq.chords()
        .iter()
        .map(|c| {
            let top = c.iter().map(|n| n.pitch).max().expect("non-empty chord");
            let bottom = c.iter().map(|n| n.pitch).min().expect("non-empty chord");
            (top, bottom)
        })
        .unzip()
}

fn harmonic_pairs(seq: &PitchSequence) -> Vec<(u8, u8)> {
    let mut pairs = Vec::new();
    for chord in seq.chords() {
        for (i, a) in chord.iter().enumerate() {
            for b in &chord[i + 1..] {
                pairs.push((a.pitch, b.pitch));
            }
        }
    }
    pairs
}

/// Dissonant harmonic intervals (every pair within a chord) plus dissonant
/// melodic steps along the top line, per note.
pub fn dissonance_rate(seq: &PitchSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let harmonic = harmonic_pairs(seq).iter().filter(|(a, b)| is_dissonant(*a, *b)).count();
    let (treble, _) = outer_lines(seq);
    let melodic = treble.windows(2).filter(|w| is_dissonant(w[0], w[1])).count();
    Ok((harmonic + melodic) as f64 / seq.len() as f64)
}

/// Largest value [`dissonance_rate`] can take on this piece's texture.
pub fn dissonance_bound(seq: &PitchSequence) -> f64 {
    let pairs: usize = seq.chords().iter().map(|c| c.len() * (c.len() - 1) / 2).sum();
    let steps = seq.chords().len().saturating_sub(1);
    (pairs + steps) as f64 / seq.len().max(1) as f64
}

/// Jumps of more than an octave along the top and bottom lines, per note.
/// When both chords of a step are single notes the two lines share the
/// same pair of notes and the jump counts once.
pub fn large_interval_rate(seq: &PitchSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let chords = seq.chords();
    let (treble, bass) = outer_lines(seq);
    let mut count = 0;
    for t in 1..chords.len() {
        let top = (treble[t] as i32 - treble[t - 1] as i32).abs() > OCTAVE;
        let bottom = (bass[t] as i32 - bass[t - 1] as i32).abs() > OCTAVE;
        let same_notes = treble[t] == bass[t] && treble[t - 1] == bass[t - 1];
        count += usize::from(top) + usize::from(bottom && !same_notes);
    }
    Ok(count as f64 / seq.len() as f64)
}

/// Relative pitch frequencies over `alphabet` (pitches outside it are not
/// counted, so the caller passes a union alphabet).
pub fn pitch_histogram(pitches: &[u8], alphabet: &PitchAlphabet) -> Result<Vec<f64>> {
    if pitches.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut hist = vec![0.0; alphabet.len()];
    for (position, &p) in pitches.iter().enumerate() {
        let i = alphabet
            .index_of(p)
            .ok_or(Error::PitchOutOfAlphabet { position, pitch: p })?;
        hist[i] += 1.0;
    }
    let n = pitches.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    Ok(hist)
}

/// Sample ACF (biased `1/T` autocovariances) and PACF (Durbin-Levinson),
/// both at lags `1..=max_lag`.
pub fn acf_pacf(series: &[f64], max_lag: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = series.len();
    if len <= max_lag + 1 {
        return Err(Error::TooShort {
            len,
            requirement: format!("correlation up to lag {max_lag} needs more than {} values", max_lag + 1),
        });
    }
    let mean = series.iter().sum::<f64>() / len as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let gamma0 = dev.iter().map(|d| d * d).sum::<f64>() / len as f64;
    if !(gamma0 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let acf: Vec<f64> = (1..=max_lag)
        .map(|h| dev[h..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / len as f64 / gamma0)
        .collect();

    let mut pacf = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    let mut v = 1.0;
    for h in 1..=max_lag {
        let rho = |k: usize| acf[k - 1];
        let num = rho(h) - (1..h).map(|j| phi[j - 1] * rho(h - j)).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let next: Vec<f64> = (1..h).map(|j| phi[j - 1] - a * phi[h - j - 1]).collect();
        phi = next;
        phi.push(a);
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    Ok((acf, pacf))
}

/// Root of the mean squared deviation from `reference`. Squared deviations
/// are summed in sorted order, so the result does not depend on the order
/// of `values`.
pub fn rmse(values: &[f64], reference: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut sq: Vec<f64> = values.iter().map(|v| (v - reference).powi(2)).collect();
    Ok(mean_sorted(&mut sq).sqrt())
}

fn mean_sorted(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalMode {
    Harmonic,
    Melodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalClasses {
    pub thirds: f64,
    pub fourths_fifths: f64,
    pub dissonant: f64,
    /// Unisons/octaves, tritones and sixths.
    pub residual: f64,
    pub total: usize,
}

/// Octave-reduced interval-class fractions. Melodic intervals follow the
/// top line.
pub fn interval_class_table(seq: &PitchSequence, mode: IntervalMode) -> Result<IntervalClasses> {
    let classes: Vec<i32> = match mode {
        IntervalMode::Harmonic => harmonic_pairs(seq).iter().map(|&(a, b)| interval_class(a, b)).collect(),
        IntervalMode::Melodic => {
            let (treble, _) = outer_lines(seq);
            treble.windows(2).map(|w| interval_class(w[0], w[1])).collect()
        }
    };
    if classes.is_empty() {
        return Err(Error::NoIntervals(match mode {
            IntervalMode::Harmonic => "harmonic",
            IntervalMode::Melodic => "melodic",
        }));
    }
    let total = classes.len();
    let frac = |f: &dyn Fn(i32) -> bool| classes.iter().filter(|&&c| f(c)).count() as f64 / total as f64;
    let thirds = frac(&|c| c == 3 || c == 4);
    let fourths_fifths = frac(&|c| c == 5 || c == 7);
    let dissonant = frac(&|c| DISSONANT_CLASSES.contains(&c));
    let residual = frac(&|c| matches!(c, 0 | 6 | 8 | 9));
    Ok(IntervalClasses {
        thirds,
        fourths_fifths,
        dissonant,
        residual,
        total,
    })
}

/// Scalar metrics and correlation curves of a single piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub entropy: f64,
    pub dissonance_rate: f64,
    pub large_interval_rate: f64,
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
}

impl MetricVector {
    pub fn compute(seq: &PitchSequence, max_lag: usize) -> Result<Self> {
        let pitches = seq.pitches();
        let series: Vec<f64> = pitches.iter().map(|&p| p as f64).collect();
        let (acf, pacf) = acf_pacf(&series, max_lag)?;
        Ok(MetricVector {
            entropy: empirical_entropy(&pitches)?,
            dissonance_rate: dissonance_rate(seq)?,
            large_interval_rate: large_interval_rate(seq)?,
            acf,
            pacf,
        })
    }
}

/// Per-piece deviations from the training piece, used to rank pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceScores {
    pub index: usize,
    pub metrics: MetricVector,
    pub mutual_information: f64,
    pub edit_distance: f64,
    pub entropy_error: f64,
    pub dissonance_error: f64,
    pub large_interval_error: f64,
    pub note_count_rmse: f64,
    pub acf_rmse: f64,
    pub pacf_rmse: f64,
    pub musicality_avg: f64,
    pub temporal_avg: f64,
    /// Squared histogram differences over this piece's union alphabet.
    #[serde(skip)]
    histogram_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPiece {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_pieces: usize,
    pub n_evaluated: usize,
    pub entropy_rmse: f64,
    pub dissonance_rmse: f64,
    pub large_interval_rmse: f64,
    pub note_count_rmse: f64,
    pub acf_rmse: f64,
    pub pacf_rmse: f64,
    pub mutual_information_mean: f64,
    pub edit_distance_mean: f64,
    pub musicality_avg: f64,
    pub temporal_avg: f64,
    pub training: MetricVector,
    pub mean_acf: Vec<f64>,
    pub mean_pacf: Vec<f64>,
    pub pieces: Vec<PieceScores>,
    pub skipped: Vec<SkippedPiece>,
}

impl EvaluationReport {
    /// `(metric, value)` rows of the summary table.
    pub fn summary_rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("entropy_rmse", self.entropy_rmse),
            ("musicality_avg", self.musicality_avg),
            ("temporal_avg", self.temporal_avg),
            ("edit_distance_mean", self.edit_distance_mean),
            ("mutual_information_mean", self.mutual_information_mean),
            ("dissonance_rmse", self.dissonance_rmse),
            ("large_interval_rmse", self.large_interval_rmse),
            ("note_count_rmse", self.note_count_rmse),
            ("acf_rmse", self.acf_rmse),
            ("pacf_rmse", self.pacf_rmse),
        ]
    }

    pub fn criterion_value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::EntropyRmse => self.entropy_rmse,
            Criterion::MusicalityAvg => self.musicality_avg,
            Criterion::TemporalAvg => self.temporal_avg,
            Criterion::MutualInformation => self.mutual_information_mean,
            Criterion::EditDistance => self.edit_distance_mean,
        }
    }
}

impl PieceScores {
    pub fn criterion_value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::EntropyRmse => self.entropy_error,
            Criterion::MusicalityAvg => self.musicality_avg,
            Criterion::TemporalAvg => self.temporal_avg,
            Criterion::MutualInformation => self.mutual_information,
            Criterion::EditDistance => self.edit_distance,
        }
    }
}

/// Ranking criteria; every one ranks ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    EntropyRmse,
    MusicalityAvg,
    TemporalAvg,
    MutualInformation,
    EditDistance,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::EntropyRmse,
        Criterion::MusicalityAvg,
        Criterion::TemporalAvg,
        Criterion::MutualInformation,
        Criterion::EditDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::EntropyRmse => "entropy-rmse",
            Criterion::MusicalityAvg => "musicality-avg",
            Criterion::TemporalAvg => "temporal-avg",
            Criterion::MutualInformation => "mi",
            Criterion::EditDistance => "edit-distance",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCriterion {
                given: s.to_string(),
                valid: Criterion::ALL.map(Criterion::name).join(", "),
            })
    }
}

fn score_piece(
    index: usize,
    train_pitches: &[u8],
    train_alphabet: &PitchAlphabet,
    reference: &MetricVector,
    piece: &PitchSequence,
    max_lag: usize,
) -> Result<PieceScores> {
    let metrics = MetricVector::compute(piece, max_lag)?;
    let pitches = piece.pitches();
    let union = train_alphabet.union(&build_alphabet(piece)?);
    let h_train = pitch_histogram(train_pitches, &union)?;
    let h_piece = pitch_histogram(&pitches, &union)?;
    let histogram_sq: Vec<f64> = h_piece.iter().zip(&h_train).map(|(a, b)| (a - b).powi(2)).collect();
    let curve_rmse = |a: &[f64], b: &[f64]| {
        let mut sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
        mean_sorted(&mut sq).sqrt()
    };
    let note_count_rmse = mean_sorted(&mut histogram_sq.clone()).sqrt();
    let acf_rmse = curve_rmse(&metrics.acf, &reference.acf);
    let pacf_rmse = curve_rmse(&metrics.pacf, &reference.pacf);
    let dissonance_error = (metrics.dissonance_rate - reference.dissonance_rate).abs();
    let large_interval_error = (metrics.large_interval_rate - reference.large_interval_rate).abs();
    Ok(PieceScores {
        index,
        entropy_error: (metrics.entropy - reference.entropy).abs(),
        mutual_information: mutual_information(train_pitches, &pitches)?,
        edit_distance: edit_distance(train_pitches, &pitches),
        dissonance_error,
        large_interval_error,
        note_count_rmse,
        acf_rmse,
        pacf_rmse,
        musicality_avg: (dissonance_error + large_interval_error + note_count_rmse) / 3.0,
        temporal_avg: (acf_rmse + pacf_rmse) / 2.0,
        metrics,
        histogram_sq,
    })
}

/// Scores a batch against its training piece. Pieces whose metrics cannot
/// be computed are skipped and listed in the report.
pub fn evaluate_batch(train: &PitchSequence, batch: &[PitchSequence], max_lag: usize) -> Result<EvaluationReport> {
    if batch.is_empty() {
        return Err(Error::EmptySequence);
    }
    let reference = MetricVector::compute(train, max_lag)?;
    let train_pitches = train.pitches();
    let train_alphabet = build_alphabet(train)?;
    let results: Vec<Result<PieceScores>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, piece)| score_piece(i, &train_pitches, &train_alphabet, &reference, piece, max_lag))
        .collect();
    let mut pieces = Vec::with_capacity(batch.len());
    let mut skipped = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => pieces.push(p),
            Err(e) => skipped.push(SkippedPiece {
                index,
                reason: e.to_string(),
            }),
        }
    }
    if pieces.is_empty() {
        return Err(Error::InvalidParams(format!(
            "no piece of the batch could be evaluated (first failure: {})",
            skipped[0].reason
        )));
    }

    let column = |f: &dyn Fn(&PieceScores) -> f64| pieces.iter().map(f).collect::<Vec<f64>>();
    let entropy_rmse = rmse(&column(&|p| p.metrics.entropy), reference.entropy)?;
    let dissonance_rmse = rmse(&column(&|p| p.metrics.dissonance_rate), reference.dissonance_rate)?;
    let large_interval_rmse = rmse(&column(&|p| p.metrics.large_interval_rate), reference.large_interval_rate)?;
    let pooled = |f: &dyn Fn(&PieceScores) -> Vec<f64>| {
        let mut cells: Vec<f64> = pieces.iter().flat_map(f).collect();
        mean_sorted(&mut cells).sqrt()
    };
    let note_count_rmse = pooled(&|p| p.histogram_sq.clone());
    let acf_rmse = pooled(&|p| p.metrics.acf.iter().zip(&reference.acf).map(|(a, b)| (a - b).powi(2)).collect());
    let pacf_rmse = pooled(&|p| p.metrics.pacf.iter().zip(&reference.pacf).map(|(a, b)| (a - b).powi(2)).collect());
    let mean = |v: Vec<f64>| {
        let mut v = v;
        mean_sorted(&mut v)
    };
    let mean_curve = |f: &dyn Fn(&PieceScores) -> &Vec<f64>| -> Vec<f64> {
        (0..max_lag).map(|h| mean(pieces.iter().map(|p| f(p)[h]).collect())).collect()
    };
    Ok(EvaluationReport {
        n_pieces: batch.len(),
        n_evaluated: pieces.len(),
        entropy_rmse,
        dissonance_rmse,
        large_interval_rmse,
        note_count_rmse,
        acf_rmse,
        pacf_rmse,
        mutual_information_mean: mean(column(&|p| p.mutual_information)),
        edit_distance_mean: mean(column(&|p| p.edit_distance)),
        musicality_avg: (dissonance_rmse + large_interval_rmse + note_count_rmse) / 3.0,
        temporal_avg: (acf_rmse + pacf_rmse) / 2.0,
        mean_acf: mean_curve(&|p| &p.metrics.acf),
        mean_pacf: mean_curve(&|p| &p.metrics.pacf),
        training: reference,
        pieces,
        skipped,
    })
}

/// Pieces ordered by `criterion` (ascending, index breaks ties).
pub fn rank_pieces(report: &EvaluationReport, criterion: Criterion) -> Vec<&PieceScores> {
    let mut order: Vec<&PieceScores> = report.pieces.iter().collect();
    order.sort_by(|a, b| {
        a.criterion_value(criterion)
            .total_cmp(&b.criterion_value(criterion))
            .then(a.index.cmp(&b.index))
    });
    order
}

/// Top `k` pieces per criterion, taking criteria in turn and skipping
/// pieces already selected. Returns `(criterion, piece index)` in
/// selection order.
pub fn select_top(report: &EvaluationReport, criteria: &[Criterion], k: usize) -> Vec<(Criterion, usize)> {
    let rankings: Vec<Vec<usize>> = criteria
        .iter()
        .map(|&c| rank_pieces(report, c).iter().map(|p| p.index).collect())
        .collect();
    let mut cursors = vec![0; criteria.len()];
    let mut chosen: Vec<(Criterion, usize)> = Vec::new();
    let available = report.pieces.len();
    for _ in 0..k {
        for (ci, &c) in criteria.iter().enumerate() {
            if chosen.len() == available {
                return chosen;
            }
            while let Some(&idx) = rankings[ci].get(cursors[ci]) {
                cursors[ci] += 1;
                if !chosen.iter().any(|&(_, i)| i == idx) {
                    chosen.push((c, idx));
                    break;
                }
            }
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::Note;

    fn seq(notes: &[(u8, u64)]) -> PitchSequence {
        PitchSequence::new(
            notes.iter().map(|&(pitch, timestamp)| Note { pitch, timestamp }).collect(),
            480,
            "t",
        )
    }

    fn mono(pitches: &[u8]) -> PitchSequence {
        PitchSequence::from_pitches(pitches, 480, "m")
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(empirical_entropy(&[60; 9]).unwrap(), 0.0);
        let uniform: Vec<u8> = (0..50).map(|i| 60 + (i % 5) as u8).collect();
        assert!((empirical_entropy(&uniform).unwrap() - 5f64.ln()).abs() < 1e-15);
        assert!(matches!(empirical_entropy(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn mutual_information_cases() {
        let x = [60u8, 62, 62, 64, 60, 67, 60];
        assert!((mutual_information(&x, &x).unwrap() - empirical_entropy(&x).unwrap()).abs() < 1e-12);
        assert_eq!(mutual_information(&x, &[50; 7]).unwrap(), 0.0);
    }

    #[test]
    fn edit_distance_cases() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(edit_distance::<u8>(&[], &[4, 5, 6]), 1.0);
        assert_eq!(edit_distance::<u8>(&[], &[]), 0.0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn dissonance_cases() {
        assert!((dissonance_rate(&mono(&[60, 61])).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dissonance_rate(&seq(&[(60, 0), (64, 0), (67, 0)])).unwrap(), 0.0);
        assert_eq!(dissonance_rate(&mono(&[60, 72])).unwrap(), 0.0);
        // chord {60, 62} then 71: one harmonic second, top line 62 -> 71 is a ninth class 9
        let s = seq(&[(60, 0), (62, 0), (71, 480)]);
        assert!((dissonance_rate(&s).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(dissonance_rate(&s).unwrap() <= dissonance_bound(&s));
    }

    #[test]
    fn large_interval_cases() {
        assert!((large_interval_rate(&mono(&[60, 73])).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(large_interval_rate(&mono(&[60, 72])).unwrap(), 0.0);
        // bass alternates 48/62 under a held 79: 9 bass jumps, no treble jumps
        let mut notes = Vec::new();
        for t in 0..5u64 {
            notes.push((if t % 2 == 0 { 48 } else { 62 }, t * 480));
            notes.push((79, t * 480));
        }
        let s = seq(&notes);
        assert!((large_interval_rate(&s).unwrap() - 4.0 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_over_union() {
        let a = PitchAlphabet::from_symbols(vec![50, 60, 62]).unwrap();
        let h = pitch_histogram(&[60, 60, 62, 60], &a).unwrap();
        assert_eq!(h, vec![0.0, 0.75, 0.25]);
        assert!(pitch_histogram(&[61], &a).is_err());
    }

    #[test]
    fn periodic_acf_peaks() {
        let series: Vec<f64> = (0..400).map(|t| [60.0, 64.0, 67.0, 72.0, 67.0][t % 5]).collect();
        let (acf, pacf) = acf_pacf(&series, 20).unwrap();
        for m in [5, 10, 15] {
            assert!(acf[m - 1] > acf[m - 2] && acf[m - 1] > acf[m]);
        }
        assert_eq!(pacf[0], acf[0]);
        assert!(acf.iter().chain(&pacf).all(|v| v.abs() <= 1.0 + 1e-9));
        assert!(matches!(acf_pacf(&[3.0; 60], 40), Err(Error::ZeroVariance)));
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 3.0], 2.0).unwrap(), 1.0);
        assert!(rmse(&[], 0.0).is_err());
    }

    #[test]
    fn interval_classes() {
        let fifths = seq(&[(48, 0), (55, 0), (62, 0), (69, 0)]);
        let t = interval_class_table(&fifths, IntervalMode::Harmonic).unwrap();
        // pairs: 7, 14->2, 21->9, 7, 14->2, 7
        assert_eq!(t.total, 6);
        assert_eq!((t.fourths_fifths, t.dissonant), (0.5, 2.0 / 6.0));
        assert!((t.thirds + t.fourths_fifths + t.dissonant + t.residual - 1.0).abs() < 1e-12);
        let dyad = interval_class_table(&seq(&[(60, 0), (63, 0)]), IntervalMode::Harmonic).unwrap();
        assert_eq!(dyad.thirds, 1.0);
        let stacked = seq(&[(48, 0), (55, 0), (60, 480), (67, 480)]);
        assert_eq!(interval_class_table(&stacked, IntervalMode::Harmonic).unwrap().fourths_fifths, 1.0);
        assert!(matches!(
            interval_class_table(&mono(&[60, 62]), IntervalMode::Harmonic),
            Err(Error::NoIntervals("harmonic"))
        ));
    }

    #[test]
    fn criteria_parse() {
        assert_eq!("temporal-avg".parse::<Criterion>().unwrap(), Criterion::TemporalAvg);
        let err = "loudness".parse::<Criterion>().unwrap_err().to_string();
        assert!(err.contains("entropy-rmse"));
    }
}
