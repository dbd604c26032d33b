//! Data loading, training, probe construction, sampling and scenario statistics.

use std::collections::BTreeMap;

use modelprobe::datasets;
use modelprobe::encoding::{one_hot_encode, ColumnKind, ColumnSchema, LabelSchema, RawTable, Schema};
use modelprobe::math::{column_moments, norm, sq_dist};
use modelprobe::predictors::{
    fit_forest, fit_kernel_svm, fit_linear_regression, fit_logistic_regression, fit_mlp, fit_tree, LogisticConfig,
    LrSchedule, MlpSpec, MlpTrainConfig, Predictor, SvmConfig, TreeNode,
};
use modelprobe::probing::{self, ProbeFunction, Regularizer, RiskyMode, RiskyOutput, TargetMode};
use modelprobe::sampler::{draw_param_ensemble, run_chains, ChainConfig, DriftMode, ProbeReport};
use modelprobe::scenarios;
use modelprobe::types::{Bounds, Dataset, Scaler};

use crate::error::{CliError, Result};
use crate::spec::{
    DataSource, ModeSpec, ModelSpec, ProbeSpec, RegSpec, RiskyMeasure, RiskyOutputSpec, ScenarioSpec, StartSpec,
};

/// Training data in raw units and in the units the models see.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: Dataset,
    pub data: Dataset,
    pub scaler: Option<Scaler>,
}

impl Prepared {
    pub fn to_model(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        }
    }

    pub fn to_raw(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaler {
            Some(s) => s.inverse(x),
            None => x.to_vec(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.data
            .feature_names()
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| CliError::Config(format!("unknown feature `{name}`")))
    }
}

/// Everything a finished run produced, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Report in raw feature units.
    pub report: ProbeReport,
    pub prepared: Prepared,
    pub models: Vec<Predictor>,
    /// The fully resolved spec.
    pub manifest: ProbeSpec,
}

pub fn load_data(source: &DataSource) -> Result<Dataset> {
    let gen_seed = |s: &Option<u64>| s.ok_or_else(|| CliError::Config("unresolved data seed".into()));
    Ok(match source {
        DataSource::Circles {
            n_per_class,
            r_inner,
            r_outer,
            noise_sd,
            seed,
        } => datasets::concentric_circles(*n_per_class, *r_inner, *r_outer, *noise_sd, gen_seed(seed)?)
            .map_err(CliError::config)?,
        DataSource::Credit { n, seed } => datasets::synthetic_credit(*n, gen_seed(seed)?),
        DataSource::Wine { n_per_class, seed } => datasets::synthetic_wine(*n_per_class, gen_seed(seed)?),
        DataSource::Housing { n, seed } => datasets::synthetic_housing(*n, gen_seed(seed)?),
        DataSource::Xor { n, noise_sd, seed } => datasets::xor(*n, *noise_sd, gen_seed(seed)?),
        DataSource::GaussianRegression { n, d, noise_sd, seed } => {
            datasets::gaussian_regression(*n, *d, *noise_sd, gen_seed(seed)?)
        }
        DataSource::Csv {
            path,
            schema,
            label,
            classes,
        } => {
            let table = RawTable::read_csv(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let schema = match schema {
                Some(p) => Schema::load(p).map_err(CliError::config)?,
                None => numeric_schema(&table, label.as_deref(), classes.clone()),
            };
            one_hot_encode(&table, &schema).map_err(CliError::config)?
        }
    })
}

fn numeric_schema(table: &RawTable, label: Option<&str>, classes: Option<Vec<String>>) -> Schema {
    Schema {
        version: 1,
        columns: table
            .headers
            .iter()
            .filter(|h| Some(h.as_str()) != label)
            .map(|h| ColumnSchema {
                name: h.clone(),
                kind: ColumnKind::Numeric,
            })
            .collect(),
        label: label.map(|l| LabelSchema {
            column: l.to_string(),
            classes,
        }),
    }
}

pub fn prepare(spec: &ProbeSpec) -> Result<Prepared> {
    let raw = load_data(&spec.data.source)?;
    if raw.is_empty() {
        return Err(CliError::Config("dataset is empty".into()));
    }
    let (data, scaler) = if spec.data.standardize {
        let (d, s) = raw.standardized();
        (d, Some(s))
    } else {
        (raw.clone(), None)
    };
    Ok(Prepared { raw, data, scaler })
}

pub fn train_model(m: &ModelSpec, data: &Dataset, slot: usize) -> Result<Predictor> {
    let stage = format!("model[{slot}]");
    let fail = |e: modelprobe::ProbeError| CliError::training(stage.clone(), e);
    let p: Predictor = match m {
        ModelSpec::Linear {} => fit_linear_regression(data).map_err(fail)?.into(),
        ModelSpec::Logistic { l2, steps, lr } => fit_logistic_regression(
            data,
            &LogisticConfig {
                l2: *l2,
                steps: *steps,
                lr: *lr,
            },
        )
        .map_err(fail)?
        .into(),
        ModelSpec::Mlp {
            hidden,
            dropout,
            steps,
            batch_size,
            lr,
            decay_rate,
            decay_steps,
            seed,
        } => {
            let out = data.task().n_classes().unwrap_or(1);
            let mut widths = hidden.clone();
            widths.push(out);
            let spec = MlpSpec::new(widths, *dropout).map_err(CliError::config)?;
            let cfg = MlpTrainConfig {
                steps: *steps,
                batch_size: *batch_size,
                schedule: LrSchedule {
                    initial: *lr,
                    decay_rate: *decay_rate,
                    decay_steps: *decay_steps,
                    staircase: false,
                },
                seed: seed.unwrap_or(0),
            };
            fit_mlp(data, &spec, &cfg).map_err(fail)?.into()
        }
        ModelSpec::Svm { kernel, c } => fit_kernel_svm(data, &SvmConfig::new(*kernel, *c)).map_err(fail)?.into(),
        ModelSpec::Tree { max_depth } => fit_tree(data, *max_depth).map_err(fail)?.into(),
        ModelSpec::Forest {
            n_trees,
            max_depth,
            seed,
        } => fit_forest(data, *n_trees, *max_depth, seed.unwrap_or(0))
            .map_err(fail)?
            .into(),
        ModelSpec::Saved { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
            Predictor::from_json(&text).map_err(CliError::config)?
        }
    };
    if p.input_dim() != data.dim() {
        return Err(CliError::Config(format!(
            "model[{slot}] expects {} features, data has {}",
            p.input_dim(),
            data.dim()
        )));
    }
    Ok(p)
}

pub fn train_models(spec: &ProbeSpec, prepared: &Prepared) -> Result<Vec<Predictor>> {
    spec.models
        .iter()
        .enumerate()
        .map(|(i, m)| train_model(m, &prepared.data, i))
        .collect()
}

fn regularizer(reg: Option<&RegSpec>, prepared: &Prepared) -> Result<Option<Regularizer>> {
    let Some(r) = reg else { return Ok(None) };
    let anchor = anchor_point(r, prepared)?;
    let mut out = Regularizer::new(anchor, r.lambda, r.r).map_err(CliError::config)?;
    if let Some(w) = &r.weights {
        out = out.with_weights(w.clone()).map_err(CliError::config)?;
    }
    Ok(Some(out))
}

/// Anchor in model units.
pub fn anchor_point(r: &RegSpec, prepared: &Prepared) -> Result<Vec<f64>> {
    match (&r.anchor_index, &r.anchor_point) {
        (Some(i), None) => prepared
            .data
            .points()
            .get(*i)
            .map(|p| p.features.clone())
            .ok_or_else(|| CliError::Config(format!("anchor_index {i} is out of range"))),
        (None, Some(x)) if x.len() == prepared.data.dim() => Ok(prepared.to_model(x)),
        (None, Some(x)) => Err(CliError::Config(format!(
            "anchor_point has {} entries, data has {} features",
            x.len(),
            prepared.data.dim()
        ))),
        _ => Err(CliError::Config("regularizer needs exactly one anchor".into())),
    }
}

fn target_mode(m: ModeSpec) -> TargetMode {
    match m {
        ModeSpec::Soft => TargetMode::Soft,
        ModeSpec::Hard => TargetMode::Hard,
        ModeSpec::Auto => TargetMode::Auto,
    }
}

/// The probe energy over the chain's space (latent space for the latent scenario).
pub fn build_energy(spec: &ProbeSpec, prepared: &Prepared, models: &[Predictor]) -> Result<ProbeFunction> {
    let reg = regularizer(spec.regularizer(), prepared)?;
    let cfg = CliError::config;
    match &spec.scenario {
        ScenarioSpec::FixedLabel { target, .. } => probing::fixed_label_g(&models[0], *target, reg).map_err(cfg),
        ScenarioSpec::Contrast { mode, sigma, .. } => match sigma {
            Some(s) => probing::regression_contrast_g(&models[0], &models[1], *s, reg),
            None => probing::contrast_g(&models[0], &models[1], target_mode(*mode), reg),
        }
        .map_err(cfg),
        ScenarioSpec::Risky {
            measure,
            output,
            class,
            alpha,
            r,
            ..
        } => {
            let mode = match measure {
                RiskyMeasure::Entropy => RiskyMode::Entropy,
                RiskyMeasure::Norm => RiskyMode::Norm {
                    alpha: alpha.unwrap_or(0.0),
                    r: *r,
                    output: match output {
                        RiskyOutputSpec::Decision => RiskyOutput::Decision,
                        RiskyOutputSpec::Proba => RiskyOutput::Proba(*class),
                    },
                },
            };
            probing::risky_g(&models[0], mode, reg).map_err(cfg)
        }
        ScenarioSpec::ParamSensitive {
            sigma_theta,
            members,
            ensemble_seed,
            mode,
            sigma,
            ..
        } => {
            let ens =
                draw_param_ensemble(&models[0], *sigma_theta, *members, ensemble_seed.unwrap_or(0)).map_err(cfg)?;
            match sigma {
                Some(s) if !models[0].is_classifier() => probing::regression_sensitive_g(&ens, &models[0], *s, reg),
                _ => probing::param_sensitive_g(&ens, &models[0], target_mode(*mode), reg),
            }
            .map_err(cfg)
        }
        ScenarioSpec::WinePin { class, weight, .. } => {
            let entropy = probing::risky_g(&models[0], RiskyMode::Entropy, None).map_err(cfg)?;
            let pin = probing::certainty_pin_g(&models[1], *class, *weight).map_err(cfg)?;
            entropy.plus(pin).map_err(cfg)
        }
        ScenarioSpec::Latent { target, .. } => {
            let g = probing::fixed_label_g(&models[0], *target, None).map_err(cfg)?;
            let phi = spec.latent_map()?;
            modelprobe::latent::pushforward_probe(&g, &phi).map_err(cfg)
        }
    }
}

fn default_drift(spec: &ProbeSpec, g: &ProbeFunction) -> DriftMode {
    if matches!(spec.scenario, ScenarioSpec::WinePin { .. }) {
        // random-walk proposals mix far better on piecewise-constant tree energies
        DriftMode::None
    } else if g.is_differentiable() {
        DriftMode::Exact
    } else {
        DriftMode::smoothed(0.3, 8)
    }
}

/// Per-feature bounds in model units; features without a bound are unbounded.
fn chain_bounds(spec: &ProbeSpec, prepared: &Prepared) -> Result<Option<Vec<Bounds>>> {
    if spec.chain.bounds.is_empty() && !spec.chain.clip_to_data {
        return Ok(None);
    }
    if matches!(spec.scenario, ScenarioSpec::Latent { .. }) {
        return Err(CliError::Config("bounds are not supported for latent chains".into()));
    }
    let d = prepared.data.dim();
    let mut out = if spec.chain.clip_to_data {
        prepared.data.observed_bounds()
    } else {
        vec![
            Bounds {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            };
            d
        ]
    };
    for b in &spec.chain.bounds {
        let j = prepared.feature_index(&b.feature)?;
        let (lo, hi) = match &prepared.scaler {
            Some(s) => ((b.lo - s.mean[j]) / s.scale[j], (b.hi - s.mean[j]) / s.scale[j]),
            None => (b.lo, b.hi),
        };
        out[j] = Bounds::new(lo, hi).map_err(CliError::config)?;
    }
    Ok(Some(out))
}

fn start_point(
    spec: &ProbeSpec,
    prepared: &Prepared,
    models: &[Predictor],
    bounds: Option<&[Bounds]>,
) -> Result<Vec<f64>> {
    let latent_dim = match &spec.scenario {
        ScenarioSpec::Latent { latent_dim, .. } => Some(*latent_dim),
        _ => None,
    };
    let x = match (spec.chain.start.as_ref().unwrap_or(&StartSpec::Mean), latent_dim) {
        (StartSpec::Mean, Some(k)) => vec![0.0; k],
        (StartSpec::Point { x }, Some(k)) if x.len() == k => x.clone(),
        (StartSpec::Point { x }, None) if x.len() == prepared.data.dim() => prepared.to_model(x),
        (StartSpec::Point { .. }, _) => return Err(CliError::Config("start point has the wrong dimension".into())),
        (_, Some(_)) => return Err(CliError::Config("latent chains start at mean or a point".into())),
        (StartSpec::Mean, None) => prepared.data.feature_mean(),
        (StartSpec::Anchor, None) => {
            let r = spec
                .regularizer()
                .ok_or_else(|| CliError::Config("start = anchor needs a regularizer".into()))?;
            anchor_point(r, prepared)?
        }
        (StartSpec::Pinned, None) => {
            let ScenarioSpec::WinePin { class, .. } = spec.scenario else {
                return Err(CliError::Config("start = pinned needs the wine-pin scenario".into()));
            };
            scenarios::pinned_start(&prepared.data, &models[1], class).map_err(CliError::config)?
        }
    };
    Ok(match bounds {
        Some(bs) => x.iter().zip(bs).map(|(v, b)| b.clamp(*v)).collect(),
        None => x,
    })
}

/// Runs the whole pipeline in memory. `spec` is resolved in place.
pub fn execute(spec: &mut ProbeSpec, models: Option<Vec<Predictor>>) -> Result<RunOutcome> {
    spec.validate()?;
    spec.resolve();
    let prepared = prepare(spec)?;
    let models = match models {
        Some(m) => m,
        None => train_models(spec, &prepared)?,
    };
    let g = build_energy(spec, &prepared, &models)?;
    let drift = match spec.chain.drift {
        Some(d) => d,
        None => {
            let d = default_drift(spec, &g);
            spec.chain.drift = Some(d);
            d
        }
    };
    if drift == DriftMode::Exact && !g.is_differentiable() {
        return Err(CliError::Config(
            "exact drift needs a differentiable probe; use smoothed or none".into(),
        ));
    }
    let bounds = chain_bounds(spec, &prepared)?;
    let x0 = start_point(spec, &prepared, &models, bounds.as_deref())?;
    let c = &spec.chain;
    let mut cfg = ChainConfig::new(c.tau, c.step_size, c.n_steps, c.seed.unwrap_or(0))
        .map_err(CliError::config)?
        .with_burn_in(c.burn_in.unwrap_or(0))
        .with_thinning(c.thinning)
        .with_drift(drift);
    if let Some(b) = bounds {
        cfg = cfg.with_bounds(b);
    }
    cfg.validate().map_err(CliError::config)?;
    let starts = vec![x0; c.chains];
    log::info!("running {} chain(s) of {} steps", c.chains, c.n_steps);
    let report = run_chains(&starts, &g, &cfg).map_err(|e| CliError::sampling("chains", e))?;
    if c.n_steps > 0 && report.accepted == 0 {
        return Err(CliError::sampling(
            "chains",
            "no proposal was accepted; lower step_size or raise tau",
        ));
    }
    let samples = match &spec.scenario {
        ScenarioSpec::Latent { .. } => {
            let phi = spec.latent_map()?;
            report.samples.iter().map(|z| phi.apply(z)).collect()
        }
        _ => report.samples.clone(),
    };
    let stats = scenario_stats(spec, &prepared, &models, &samples)?;
    let report = to_raw_report(report, samples, &prepared, stats);
    Ok(RunOutcome {
        report,
        prepared,
        models,
        manifest: spec.clone(),
    })
}

/// Replaces samples with raw-unit values and recomputes the moments.
fn to_raw_report(
    mut report: ProbeReport,
    samples: Vec<Vec<f64>>,
    prepared: &Prepared,
    stats: BTreeMap<String, f64>,
) -> ProbeReport {
    let raw: Vec<Vec<f64>> = samples.iter().map(|x| prepared.to_raw(x)).collect();
    let (mean, std) = column_moments(&raw, prepared.data.dim());
    report.samples = raw;
    report.mean = mean;
    report.std = std;
    report.stats.extend(stats);
    report
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Scenario statistics over samples in model units.
pub fn scenario_stats(
    spec: &ProbeSpec,
    prepared: &Prepared,
    models: &[Predictor],
    samples: &[Vec<f64>],
) -> Result<BTreeMap<String, f64>> {
    let fail = |e: modelprobe::ProbeError| CliError::sampling("statistics", e);
    let mut s = BTreeMap::new();
    s.insert("n_samples".to_string(), samples.len() as f64);
    s.insert("norm_mean".to_string(), mean(samples.iter().map(|x| norm(x))));
    for (i, m) in models.iter().enumerate() {
        if m.is_classifier() {
            let labels = prepared.data.class_labels().map_err(fail)?;
            let hits = prepared
                .data
                .points()
                .iter()
                .zip(&labels)
                .map(|(p, &y)| m.predict_class(&p.features).map(|k| (k == y) as usize))
                .sum::<modelprobe::Result<usize>>()
                .map_err(fail)?;
            s.insert(format!("model_{i}_train_accuracy"), hits as f64 / labels.len() as f64);
        }
    }
    if let Ok(Some(bounds)) = chain_bounds(spec, prepared) {
        let inside = samples
            .iter()
            .filter(|x| x.iter().zip(&bounds).all(|(v, b)| b.contains(*v)))
            .count();
        s.insert("in_bounds_rate".into(), rate(inside, samples.len()));
    }
    if let Some(r) = spec.regularizer() {
        let a = anchor_point(r, prepared)?;
        s.insert(
            "anchor_distance_mean".into(),
            mean(samples.iter().map(|x| sq_dist(x, &a).sqrt())),
        );
    }
    match &spec.scenario {
        ScenarioSpec::FixedLabel { target, .. } | ScenarioSpec::Latent { target, .. } => {
            let m = &models[0];
            if m.is_classifier() {
                let k = *target as usize;
                let hits = count(samples, |x| Ok(m.predict_class(x)? == k)).map_err(fail)?;
                s.insert("target_rate".into(), rate(hits, samples.len()));
                let (pm, _) = scenarios::proba_moments(samples, m, k).map_err(fail)?;
                s.insert("target_proba_mean".into(), pm);
                if let Some(r) = spec.regularizer() {
                    let a = anchor_point(r, prepared)?;
                    let nearest = prepared
                        .data
                        .points()
                        .iter()
                        .filter(|p| p.class() == Some(k))
                        .map(|p| sq_dist(&p.features, &a).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    s.insert("nearest_target_distance".into(), nearest);
                }
            } else {
                let preds = samples
                    .iter()
                    .map(|x| m.predict(x))
                    .collect::<modelprobe::Result<Vec<f64>>>()
                    .map_err(fail)?;
                s.insert("prediction_mean".into(), mean(preds.iter().copied()));
            }
        }
        ScenarioSpec::Contrast { .. } => {
            let (a, b) = (&models[0], &models[1]);
            if a.is_classifier() {
                s.insert(
                    "disagreement_rate".into(),
                    scenarios::disagreement_rate(samples, a, b).map_err(fail)?,
                );
            } else {
                let diffs = samples
                    .iter()
                    .map(|x| Ok((a.predict(x)? - b.predict(x)?).abs()))
                    .collect::<modelprobe::Result<Vec<f64>>>()
                    .map_err(fail)?;
                s.insert("abs_difference_mean".into(), mean(diffs.iter().copied()));
            }
        }
        ScenarioSpec::Risky { output, class, .. } => {
            let m = &models[0];
            match output {
                RiskyOutputSpec::Decision if m.n_classes().is_none_or(|n| n == 2) => {
                    let d = samples
                        .iter()
                        .map(|x| m.decision_value(x).map(f64::abs))
                        .collect::<modelprobe::Result<Vec<f64>>>()
                        .map_err(fail)?;
                    s.insert("abs_decision_mean".into(), mean(d));
                }
                _ => {}
            }
            if m.is_classifier() {
                let (pm, ps) = scenarios::proba_moments(samples, m, *class).map_err(fail)?;
                s.insert("proba_mean".into(), pm);
                s.insert("proba_std".into(), ps);
            }
        }
        ScenarioSpec::ParamSensitive {
            sigma_theta,
            members,
            ensemble_seed,
            ..
        } => {
            let ens =
                draw_param_ensemble(&models[0], *sigma_theta, *members, ensemble_seed.unwrap_or(0)).map_err(fail)?;
            let preds = ens.predictors(&models[0]).map_err(fail)?;
            if models[0].is_classifier() {
                s.insert(
                    "flip_rate".into(),
                    scenarios::flip_rate(samples, &preds, &models[0]).map_err(fail)?,
                );
            } else {
                let dev = samples
                    .iter()
                    .map(|x| {
                        let c = models[0].predict(x)?;
                        let d = preds
                            .iter()
                            .map(|p| p.predict(x).map(|v| (v - c).abs()))
                            .sum::<modelprobe::Result<f64>>()?;
                        Ok(d / preds.len() as f64)
                    })
                    .collect::<modelprobe::Result<Vec<f64>>>()
                    .map_err(fail)?;
                s.insert("member_deviation_mean".into(), mean(dev));
            }
        }
        ScenarioSpec::WinePin {
            class, split_feature, ..
        } => {
            let (reference, pin) = (&models[0], &models[1]);
            let pinned = count(samples, |x| Ok(pin.predict_proba(x)?[*class] >= 1.0)).map_err(fail)?;
            s.insert("pin_rate".into(), rate(pinned, samples.len()));
            let probas = samples
                .iter()
                .map(|x| reference.predict_proba(x))
                .collect::<modelprobe::Result<Vec<Vec<f64>>>>()
                .map_err(fail)?;
            let k = reference.n_classes().unwrap_or(1);
            for c in 0..k {
                s.insert(format!("reference_proba_mean_{c}"), mean(probas.iter().map(|p| p[c])));
            }
            let uniform = 1.0 / k as f64;
            let dev = probas
                .iter()
                .flat_map(|p| p.iter().map(|v| (v - uniform).abs()))
                .fold(0.0, f64::max);
            s.insert("uniform_deviation_max".into(), dev);
            let feature = match split_feature {
                Some(f) => Some(prepared.feature_index(f)?),
                None => prepared.feature_index("color_intensity").ok(),
            };
            if let (Some(j), Predictor::DecisionTree(tree)) = (feature, pin) {
                let through = samples
                    .iter()
                    .filter(|x| {
                        tree.decision_path(x)
                            .iter()
                            .any(|&n| matches!(tree.nodes[n], TreeNode::Split { feature, .. } if feature == j))
                    })
                    .count();
                s.insert("split_path_rate".into(), rate(through, samples.len()));
            }
        }
    }
    Ok(s)
}

fn rate(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

fn count(samples: &[Vec<f64>], f: impl Fn(&[f64]) -> modelprobe::Result<bool>) -> modelprobe::Result<usize> {
    samples.iter().map(|x| f(x).map(|b| b as usize)).sum()
}
