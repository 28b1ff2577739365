//! Time-varying autoregression with discount-factor filtering.
//!
//! `x_t = F_t' theta_t + v_t` with `F_t = (x_{t-1}, .., x_{t-p})`, a random
//! walk on `theta_t` whose evolution variance is set by the state discount
//! `delta`, and an unknown observation variance evolved by the variance
//! discount `beta`. The filter is kept in scale-free form: `C*` is the
//! coefficient covariance divided by the current variance estimate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::PitchAlphabet;

pub const PITCH_MIN: f64 = 0.0;
pub const PITCH_MAX: f64 = 127.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvarSpec {
    pub orders: Vec<usize>,
    pub state_discounts: Vec<f64>,
    pub variance_discounts: Vec<f64>,
    /// Prior coefficient mean is zero; prior scale-free covariance is this
    /// times the identity.
    pub prior_scale: f64,
    pub prior_dof: f64,
    pub prior_variance: f64,
}

impl Default for TvarSpec {
    fn default() -> Self {
        TvarSpec {
            orders: (7..=14).collect(),
            state_discounts: vec![0.90, 0.95, 0.99, 1.0],
            variance_discounts: vec![0.90, 0.95, 0.99],
            prior_scale: 1.0,
            prior_dof: 1.0,
            prior_variance: 1.0,
        }
    }
}

impl TvarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.state_discounts.is_empty() || self.variance_discounts.is_empty() {
            return Err(Error::InvalidParams("empty TVAR grid".into()));
        }
        if self.orders.contains(&0) {
            return Err(Error::InvalidParams("TVAR order must be at least 1".into()));
        }
        let in_range = |v: &f64| *v > 0.0 && *v <= 1.0;
        if !self.state_discounts.iter().chain(&self.variance_discounts).all(in_range) {
            return Err(Error::InvalidParams("discount factors must lie in (0, 1]".into()));
        }
        if !(self.prior_scale > 0.0 && self.prior_dof > 0.0 && self.prior_variance > 0.0) {
            return Err(Error::InvalidParams("TVAR priors must be positive".into()));
        }
        Ok(())
    }

    fn max_order(&self) -> usize {
        self.orders.iter().copied().max().unwrap_or(0)
    }
}

/// Filtered posteriors. Index `s` refers to time `start + s`.
#[derive(Debug, Clone)]
pub struct TvarFit {
    pub order: usize,
    pub state_discount: f64,
    pub variance_discount: f64,
    /// First time index that was filtered (needs `order` lags before it).
    pub start: usize,
    pub means: Vec<DVector<f64>>,
    /// Scale-free covariances `C*_t`.
    pub covariances: Vec<DMatrix<f64>>,
    pub dof: Vec<f64>,
    /// `d_t`; the variance estimate is `d_t / n_t`.
    pub scale_sums: Vec<f64>,
    /// One-step predictive log densities.
    pub log_predictive: Vec<f64>,
    pub log_marginal: f64,
}

impl TvarFit {
    pub fn variance_estimate(&self, step: usize) -> f64 {
        self.scale_sums[step] / self.dof[step]
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Sum of the predictive log densities from time `from` on.
    pub fn log_marginal_from(&self, from: usize) -> f64 {
        self.log_predictive[from.saturating_sub(self.start)..].iter().sum()
    }
}

fn student_t_log_density(e: f64, dof: f64, scale2: f64) -> f64 {
    libm::lgamma((dof + 1.0) / 2.0)
        - libm::lgamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI * scale2).ln()
        - (dof + 1.0) / 2.0 * (e * e / (dof * scale2)).ln_1p()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn fit_tvar(
    series: &[f64],
    order: usize,
    state_discount: f64,
    variance_discount: f64,
    spec: &TvarSpec,
) -> Result<TvarFit> {
    if order == 0 {
        return Err(Error::InvalidParams("TVAR order must be at least 1".into()));
    }
    if series.len() <= order + 1 {
        return Err(Error::TooShort {
            len: series.len(),
            requirement: format!("must exceed the autoregressive order {order} plus one"),
        });
    }
    if let Some(position) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { position });
    }
    let p = order;
    let mut m = DVector::zeros(p);
    let mut c = DMatrix::identity(p, p) * spec.prior_scale;
    let mut n = spec.prior_dof;
    let mut d = spec.prior_dof * spec.prior_variance;
    let steps = series.len() - order;
    let mut fit = TvarFit {
        order,
        state_discount,
        variance_discount,
        start: order,
        means: Vec::with_capacity(steps),
        covariances: Vec::with_capacity(steps),
        dof: Vec::with_capacity(steps),
        scale_sums: Vec::with_capacity(steps),
        log_predictive: Vec::with_capacity(steps),
        log_marginal: 0.0,
    };
    for t in order..series.len() {
        let f = DVector::from_iterator(p, (1..=p).map(|j| series[t - j]));
        let r = &c / state_discount;
        let n_prior = variance_discount * n;
        let d_prior = variance_discount * d;
        let s_prior = d_prior / n_prior;
        let rf = &r * &f;
        let q = f.dot(&rf) + 1.0;
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::Singular { step: t });
        }
        let e = series[t] - f.dot(&m);
        let lp = student_t_log_density(e, n_prior, s_prior * q);
        let a = rf / q;
        m += &a * e;
        c = r - &a * a.transpose() * q;
        symmetrize(&mut c);
        n = n_prior + 1.0;
        d = d_prior + e * e / q;
        if !(lp.is_finite() && d.is_finite() && d > 0.0) {
            return Err(Error::Singular { step: t });
        }
        fit.log_marginal += lp;
        fit.log_predictive.push(lp);
        fit.means.push(m.clone());
        fit.covariances.push(c.clone());
        fit.dof.push(n);
        fit.scale_sums.push(d);
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub order: usize,
    pub state_discount: f64,
    pub variance_discount: f64,
    /// Predictive log density summed from the largest grid order on.
    pub log_marginal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: GridCell,
    pub cells: Vec<GridCell>,
}

/// `true` when `a` should be preferred over `b`.
fn better(a: &GridCell, b: &GridCell) -> bool {
    if a.log_marginal != b.log_marginal {
        return a.log_marginal > b.log_marginal;
    }
    if a.order != b.order {
        return a.order < b.order;
    }
    if a.state_discount != b.state_discount {
        return a.state_discount > b.state_discount;
    }
    a.variance_discount > b.variance_discount
}

/// Fits every cell of the grid. Each cell filters from its own order, but
/// scores are summed over the common window starting at the largest order
/// so that cells of different orders are comparable.
pub fn grid_search(spec: &TvarSpec, series: &[f64]) -> Result<GridSearch> {
    spec.validate()?;
    let from = spec.max_order();
    let mut jobs = Vec::new();
    for &order in &spec.orders {
        for &delta in &spec.state_discounts {
            for &beta in &spec.variance_discounts {
                jobs.push((order, delta, beta));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(order, delta, beta)| {
            let fit = fit_tvar(series, order, delta, beta, spec)?;
            Ok(GridCell {
                order,
                state_discount: delta,
                variance_discount: beta,
                log_marginal: fit.log_marginal_from(from),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = cells[0];
    for cell in &cells[1..] {
        if better(cell, &best) {
            best = *cell;
        }
    }
    Ok(GridSearch { best, cells })
}

/// Draws from `N(mean, cov)`. Falls back to an eigendecomposition with
/// negative eigenvalues clipped when the Cholesky factorization fails.
fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let p = mean.len();
    let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(rng)));
    if let Some(chol) = cov.clone().cholesky() {
        return mean + chol.l() * z;
    }
    let eig = cov.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    mean + &eig.eigenvectors * z.component_mul(&root)
}

/// One joint draw of coefficient and precision trajectories, aligned with
/// the filtered steps.
#[derive(Debug, Clone)]
pub struct TvarTrajectory {
    pub coefficients: Vec<DVector<f64>>,
    pub precisions: Vec<f64>,
}

pub fn backward_sample<R: Rng + ?Sized>(fit: &TvarFit, rng: &mut R) -> TvarTrajectory {
    let steps = fit.len();
    let delta = fit.state_discount;
    let beta = fit.variance_discount;
    let mut precisions = vec![0.0; steps];
    let mut coefficients = vec![DVector::zeros(fit.order); steps];
    let last = steps - 1;
    precisions[last] = Gamma::new(fit.dof[last] / 2.0, 2.0 / fit.scale_sums[last])
        .expect("positive gamma parameters")
        .sample(rng);
    coefficients[last] = sample_mvn(&fit.means[last], &(&fit.covariances[last] / precisions[last]), rng);
    for s in (0..last).rev() {
        let shape = (1.0 - beta) * fit.dof[s] / 2.0;
        let innovation = if shape > 0.0 {
            Gamma::new(shape, 2.0 / fit.scale_sums[s])
                .expect("positive gamma parameters")
                .sample(rng)
        } else {
            0.0
        };
        precisions[s] = beta * precisions[s + 1] + innovation;
        coefficients[s] = if delta < 1.0 {
            let mean = &fit.means[s] * (1.0 - delta) + &coefficients[s + 1] * delta;
            let cov = &fit.covariances[s] * ((1.0 - delta) / precisions[s]);
            sample_mvn(&mean, &cov, rng)
        } else {
            coefficients[s + 1].clone()
        };
    }
    TvarTrajectory {
        coefficients,
        precisions,
    }
}

/// Runs the observation equation forward from `opening` (at least `order`
/// values). Step `t >= order` uses trajectory entry `t - order`, holding the
/// last entry past the end. `precisions = None` gives the noiseless
/// extrapolation. Values are clamped to the MIDI pitch range.
pub fn simulate<R: Rng + ?Sized>(
    coefficients: &[DVector<f64>],
    precisions: Option<&[f64]>,
    opening: &[f64],
    len: usize,
    rng: &mut R,
) -> Vec<f64> {
    let p = coefficients[0].len();
    let mut x: Vec<f64> = opening.iter().take(p.min(len)).copied().collect();
    while x.len() < len {
        let t = x.len();
        let s = (t - p).min(coefficients.len() - 1);
        let mean: f64 = (1..=p).map(|j| coefficients[s][j - 1] * x[t - j]).sum();
        let noise = match precisions {
            Some(phi) => {
                let z: f64 = StandardNormal.sample(rng);
                z / phi[s.min(phi.len() - 1)].sqrt()
            }
            None => 0.0,
        };
        x.push((mean + noise).clamp(PITCH_MIN, PITCH_MAX));
    }
    x
}

/// Backward-samples a trajectory and simulates a series the length of the
/// training series, opening with its first `order` values.
pub fn generate_series<R: Rng + ?Sized>(fit: &TvarFit, training: &[f64], rng: &mut R) -> Vec<f64> {
    let traj = backward_sample(fit, rng);
    simulate(&traj.coefficients, Some(&traj.precisions), training, training.len(), rng)
}

/// Nearest alphabet pitch for each value; exact midpoints go to the lower
/// pitch. Returns alphabet indices.
pub fn bin_to_alphabet(series: &[f64], alphabet: &PitchAlphabet) -> Result<Vec<usize>> {
    let pitches = alphabet.symbols();
    if pitches.is_empty() {
        return Err(Error::InvalidParams("empty alphabet".into()));
    }
    series
        .iter()
        .enumerate()
        .map(|(position, &v)| {
            if !v.is_finite() {
                return Err(Error::NonFinite { position });
            }
            let upper = pitches.partition_point(|&p| (p as f64) < v);
            Ok(match upper {
                0 => 0,
                u if u == pitches.len() => u - 1,
                u => {
                    let below = v - pitches[u - 1] as f64;
                    let above = pitches[u] as f64 - v;
                    if above < below {
                        u
                    } else {
                        u - 1
                    }
                }
            })
        })
        .collect()
}
