//! Metropolis-adjusted Langevin sampling of `p*(x) ∝ exp(-G(x)/tau)`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, ProbeError, Result};
use crate::math::{axpy, column_moments, derive_seed, rng_from_seed, standard_normal_vec};
use crate::predictors::Predictor;
use crate::probing::{GradientMode, ParamEnsemble, ProbeFunction};
use crate::types::{Bounds, Temperature};

/// Source of the drift term in the Langevin proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum DriftMode {
    /// Exact gradient of `G`.
    Exact,
    /// Gaussian-smoothed gradient estimated from `samples` antithetic pairs.
    Smoothed {
        sigma: f64,
        samples: usize,
        /// Divide the estimate by `sigma`, giving an unbiased gradient of the smoothed energy.
        #[serde(default)]
        normalized: bool,
        /// Reuse the forward drift in the reverse density instead of re-estimating it
        /// at the proposal. Exact for step energies in the small-step limit.
        #[serde(default = "default_true")]
        freeze_reverse_drift: bool,
    },
    /// No drift: symmetric random-walk Metropolis.
    None,
}

fn default_true() -> bool {
    true
}

impl DriftMode {
    pub fn smoothed(sigma: f64, samples: usize) -> Self {
        DriftMode::Smoothed {
            sigma,
            samples,
            normalized: false,
            freeze_reverse_drift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub tau: Temperature,
    pub step_size: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    #[serde(default)]
    pub bounds: Option<Vec<Bounds>>,
    pub drift: DriftMode,
}

impl ChainConfig {
    /// Exact drift, 20% burn-in, no thinning, unbounded.
    pub fn new(tau: f64, step_size: f64, n_steps: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            tau: Temperature::new(tau)?,
            step_size,
            n_steps,
            burn_in: n_steps / 5,
            thinning: 1,
            seed,
            bounds: None,
            drift: DriftMode::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_thinning(mut self, thinning: usize) -> Self {
        self.thinning = thinning;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<Bounds>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_drift(mut self, drift: DriftMode) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProbeError::Precondition(m));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.burn_in > self.n_steps {
            return bad(format!("burn-in {} exceeds {} steps", self.burn_in, self.n_steps));
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1".into());
        }
        if let DriftMode::Smoothed { sigma, samples, .. } = self.drift {
            if !(sigma > 0.0) || samples == 0 {
                return bad(format!("smoothing needs sigma > 0 and J >= 1, got {sigma}, {samples}"));
            }
        }
        Ok(())
    }

    /// Number of retained samples.
    pub fn n_samples(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thinning
    }

    fn clip(&self, x: &mut [f64]) {
        if let Some(bounds) = &self.bounds {
            for (v, b) in x.iter_mut().zip(bounds) {
                *v = b.clamp(*v);
            }
        }
    }
}

/// Current chain position with its cached energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub g_value: f64,
    /// Cached exact gradient; only kept in exact drift mode.
    pub grad: Option<Vec<f64>>,
    pub accepted: usize,
    pub proposed: usize,
    pub nonfinite: usize,
}

impl ChainState {
    pub fn new(x0: Vec<f64>, g: &ProbeFunction, cfg: &ChainConfig) -> Result<Self> {
        check_dim(g.dim(), x0.len())?;
        if let Some(bounds) = &cfg.bounds {
            check_dim(g.dim(), bounds.len())?;
            if x0.iter().zip(bounds).any(|(v, b)| !b.contains(*v)) {
                return Err(ProbeError::Precondition("start point lies outside the bounds".into()));
            }
        }
        let (g_value, grad) = match cfg.drift {
            DriftMode::Exact => {
                let (v, gr) = g.value_and_gradient(&x0)?;
                (v, Some(gr))
            }
            _ => (g.evaluate(&x0), None),
        };
        if !g_value.is_finite() {
            return Err(ProbeError::Precondition(format!(
                "G is not finite at the start point: {g_value}"
            )));
        }
        Ok(Self {
            x: x0,
            g_value,
            grad,
            accepted: 0,
            proposed: 0,
            nonfinite: 0,
        })
    }
}

/// Monte-Carlo gradient of the Gaussian-smoothed energy:
/// `(1/2J) sum_j (G(x + sigma e_j) - G(x - sigma e_j)) e_j`, optionally divided by `sigma`.
/// Without the division the estimate converges to `sigma` times the smoothed gradient.
pub fn smoothed_gradient<R: Rng + ?Sized>(
    g: &ProbeFunction,
    x: &[f64],
    sigma: f64,
    pairs: usize,
    normalized: bool,
    rng: &mut R,
) -> Vec<f64> {
    let d = x.len();
    let mut acc = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for _ in 0..pairs {
        let eps = standard_normal_vec(rng, d);
        for i in 0..d {
            plus[i] = x[i] + sigma * eps[i];
            minus[i] = x[i] - sigma * eps[i];
        }
        let diff = g.evaluate(&plus) - g.evaluate(&minus);
        if diff.is_finite() {
            axpy(&mut acc, diff, &eps);
        }
    }
    let scale = if normalized {
        2.0 * pairs as f64 * sigma
    } else {
        2.0 * pairs as f64
    };
    acc.iter_mut().for_each(|v| *v /= scale);
    acc
}

/// Log of the Langevin transition density `q(to | from)`, up to a constant.
fn log_q(to: &[f64], from: &[f64], drift_from: &[f64], eta: f64, tau: f64) -> f64 {
    let s: f64 = to
        .iter()
        .zip(from)
        .zip(drift_from)
        .map(|((b, a), d)| {
            let r = b - a + eta * d;
            r * r
        })
        .sum();
    -s / (4.0 * eta * tau)
}

/// `log [pi(y) q(x|y)] - log [pi(x) q(y|x)]` for the move `x -> y`.
#[allow(clippy::too_many_arguments)]
pub fn log_acceptance_ratio(
    x: &[f64],
    g_x: f64,
    drift_x: &[f64],
    y: &[f64],
    g_y: f64,
    drift_y: &[f64],
    eta: f64,
    tau: f64,
) -> f64 {
    -(g_y - g_x) / tau + log_q(x, y, drift_y, eta, tau) - log_q(y, x, drift_x, eta, tau)
}

/// One proposal and accept/reject step. Returns whether the proposal was accepted.
pub fn mala_step<R: Rng + ?Sized>(state: &mut ChainState, g: &ProbeFunction, cfg: &ChainConfig, rng: &mut R) -> bool {
    let eta = cfg.step_size;
    let tau = cfg.tau.get();
    let d = state.x.len();
    let drift = match cfg.drift {
        DriftMode::Exact => state.grad.clone().expect("exact mode caches the gradient"),
        DriftMode::Smoothed {
            sigma,
            samples,
            normalized,
            ..
        } => smoothed_gradient(g, &state.x, sigma, samples, normalized, rng),
        DriftMode::None => vec![0.0; d],
    };
    let noise = standard_normal_vec(rng, d);
    let scale = (2.0 * eta * tau).sqrt();
    let mut y: Vec<f64> = (0..d).map(|i| state.x[i] - eta * drift[i] + scale * noise[i]).collect();
    cfg.clip(&mut y);
    let u: f64 = rng.random();
    state.proposed += 1;

    let (g_y, grad_y) = match cfg.drift {
        DriftMode::Exact => match g.value_and_gradient(&y) {
            Ok((v, gr)) => (v, Some(gr)),
            Err(_) => (f64::NAN, None),
        },
        _ => (g.evaluate(&y), None),
    };
    if !g_y.is_finite() {
        state.nonfinite += 1;
        log::debug!("rejected proposal with non-finite energy {g_y}");
        return false;
    }
    let drift_y = match cfg.drift {
        DriftMode::Exact => grad_y.clone().expect("computed above"),
        DriftMode::Smoothed {
            freeze_reverse_drift: true,
            ..
        } => drift.clone(),
        DriftMode::Smoothed {
            sigma,
            samples,
            normalized,
            ..
        } => smoothed_gradient(g, &y, sigma, samples, normalized, rng),
        DriftMode::None => vec![0.0; d],
    };
    let log_alpha = log_acceptance_ratio(&state.x, state.g_value, &drift, &y, g_y, &drift_y, eta, tau);
    if u.ln() < log_alpha {
        state.x = y;
        state.g_value = g_y;
        state.grad = grad_y;
        state.accepted += 1;
        true
    } else {
        false
    }
}

/// Samples and summary statistics from one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: Vec<Vec<f64>>,
    /// `G` at each retained sample.
    pub energies: Vec<f64>,
    pub accepted: usize,
    pub proposed: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_chains: usize,
    /// Scenario statistics such as flip or disagreement rates.
    pub stats: BTreeMap<String, f64>,
}

impl ProbeReport {
    fn from_parts(
        samples: Vec<Vec<f64>>,
        energies: Vec<f64>,
        accepted: usize,
        proposed: usize,
        dim: usize,
        n_chains: usize,
        nonfinite: usize,
    ) -> Self {
        let (mean, std) = column_moments(&samples, dim);
        let mut stats = BTreeMap::new();
        stats.insert("nonfinite_rejections".to_string(), nonfinite as f64);
        Self {
            samples,
            energies,
            accepted,
            proposed,
            acceptance_rate: if proposed == 0 {
                0.0
            } else {
                accepted as f64 / proposed as f64
            },
            mean,
            std,
            n_chains,
            stats,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Concatenates chain reports in the given order.
    pub fn merge(reports: Vec<ProbeReport>) -> Result<Self> {
        let dim = reports
            .first()
            .map(ProbeReport::dim)
            .ok_or_else(|| ProbeError::Precondition("no reports to merge".into()))?;
        let mut samples = Vec::new();
        let mut energies = Vec::new();
        let (mut accepted, mut proposed, mut nonfinite, mut chains) = (0, 0, 0.0, 0);
        for r in reports {
            check_dim(dim, r.dim())?;
            samples.extend(r.samples);
            energies.extend(r.energies);
            accepted += r.accepted;
            proposed += r.proposed;
            chains += r.n_chains;
            nonfinite += r.stats.get("nonfinite_rejections").copied().unwrap_or(0.0);
        }
        Ok(Self::from_parts(
            samples,
            energies,
            accepted,
            proposed,
            dim,
            chains,
            nonfinite as usize,
        ))
    }

    pub fn with_stat(mut self, name: &str, value: f64) -> Self {
        self.stats.insert(name.to_string(), value);
        self
    }

    /// Standard error of the mean of coordinate `j` from `n_batches` contiguous batch means.
    pub fn batch_means_se(&self, j: usize, n_batches: usize) -> f64 {
        let n = self.samples.len();
        let b = n_batches.max(2).min(n.max(1));
        let size = n / b;
        if size == 0 {
            return f64::NAN;
        }
        let means: Vec<f64> = (0..b)
            .map(|k| self.samples[k * size..(k + 1) * size].iter().map(|s| s[j]).sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per sample, header from `feature_names`.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], out: W) -> Result<()> {
        check_dim(self.dim(), feature_names.len())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(feature_names)?;
        for s in &self.samples {
            w.write_record(s.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs a single chain from `x0`. Deterministic in `(x0, cfg)`.
pub fn run_chain(x0: &[f64], g: &ProbeFunction, cfg: &ChainConfig) -> Result<ProbeReport> {
    cfg.validate()?;
    if cfg.drift == DriftMode::Exact && g.gradient_mode() != GradientMode::Exact {
        return Err(ProbeError::NotDifferentiable(
            "exact drift requested on an energy without gradients; use smoothed drift".into(),
        ));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = ChainState::new(x0.to_vec(), g, cfg)?;
    let mut samples = Vec::with_capacity(cfg.n_samples());
    let mut energies = Vec::with_capacity(cfg.n_samples());
    for t in 0..cfg.n_steps {
        mala_step(&mut state, g, cfg, &mut rng);
        if t >= cfg.burn_in && (t - cfg.burn_in + 1).is_multiple_of(cfg.thinning) {
            samples.push(state.x.clone());
            energies.push(state.g_value);
        }
    }
    if state.nonfinite > 0 {
        log::warn!("{} proposals rejected for non-finite energy", state.nonfinite);
    }
    Ok(ProbeReport::from_parts(
        samples,
        energies,
        state.accepted,
        state.proposed,
        x0.len(),
        1,
        state.nonfinite,
    ))
}

/// Independent chains in parallel; chain `c` uses seed `derive_seed(cfg.seed, c)`.
/// Results are merged in chain order, so the output does not depend on scheduling.
pub fn run_chains(starts: &[Vec<f64>], g: &ProbeFunction, cfg: &ChainConfig) -> Result<ProbeReport> {
    if starts.is_empty() {
        return Err(ProbeError::Precondition("need at least one chain".into()));
    }
    let reports: Vec<Result<ProbeReport>> = starts
        .par_iter()
        .enumerate()
        .map(|(c, x0)| run_chain(x0, g, &cfg.clone().with_seed(derive_seed(cfg.seed, c as u64))))
        .collect();
    ProbeReport::merge(reports.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Chain over a locally constant energy (tree models): smoothed proposals, exact acceptance.
pub fn run_tree_chain(x0: &[f64], g: &ProbeFunction, cfg: &ChainConfig) -> Result<ProbeReport> {
    match cfg.drift {
        DriftMode::Smoothed { .. } => run_chain(x0, g, cfg),
        DriftMode::Exact => Err(ProbeError::NotDifferentiable(
            "tree energies have no exact gradient".into(),
        )),
        DriftMode::None => Err(ProbeError::Precondition("tree chains need smoothed drift".into())),
    }
}

/// `M` i.i.d. draws `theta* + sigma_theta * zeta`, `zeta` standard normal.
pub fn draw_param_ensemble(p_star: &Predictor, sigma_theta: f64, m: usize, seed: u64) -> Result<ParamEnsemble> {
    if !(sigma_theta >= 0.0) || m == 0 {
        return Err(ProbeError::Precondition(format!(
            "ensemble needs sigma_theta >= 0 and M >= 1, got {sigma_theta}, {m}"
        )));
    }
    let center = p_star.params()?;
    let mut rng = rng_from_seed(seed);
    let members = (0..m)
        .map(|_| {
            let z = standard_normal_vec(&mut rng, center.len());
            let theta = center.theta().iter().zip(z).map(|(t, e)| t + sigma_theta * e).collect();
            center.with_theta(theta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamEnsemble {
        center,
        sigma_theta,
        seed,
        members,
    })
}
