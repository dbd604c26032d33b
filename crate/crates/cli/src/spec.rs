//! The versioned run description read from TOML.
//!
//! Every optional field is resolved to a concrete value before a run starts, and the
//! resolved document is what gets written as the manifest. Rerunning the manifest
//! therefore needs nothing else.

use std::path::{Path, PathBuf};

use modelprobe::latent::{LatentLayer, LatentMap};
use modelprobe::math::derive_seed;
use modelprobe::predictors::Kernel;
use modelprobe::sampler::DriftMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub version: u32,
    pub seed: u64,
    pub data: DataSpec,
    #[serde(rename = "model")]
    pub models: Vec<ModelSpec>,
    pub scenario: ScenarioSpec,
    pub chain: ChainSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Fit models and run chains on z-scored features. Outputs stay in raw units.
    #[serde(default)]
    pub standardize: bool,
    pub source: DataSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Circles {
        #[serde(default = "d_200")]
        n_per_class: usize,
        #[serde(default = "d_one")]
        r_inner: f64,
        #[serde(default = "d_two")]
        r_outer: f64,
        #[serde(default = "d_noise")]
        noise_sd: f64,
        seed: Option<u64>,
    },
    Credit {
        #[serde(default = "d_2000")]
        n: usize,
        seed: Option<u64>,
    },
    Wine {
        #[serde(default = "d_60")]
        n_per_class: usize,
        seed: Option<u64>,
    },
    Housing {
        #[serde(default = "d_500")]
        n: usize,
        seed: Option<u64>,
    },
    Xor {
        #[serde(default = "d_400")]
        n: usize,
        #[serde(default = "d_noise")]
        noise_sd: f64,
        seed: Option<u64>,
    },
    GaussianRegression {
        #[serde(default = "d_2000")]
        n: usize,
        #[serde(default = "d_four")]
        d: usize,
        #[serde(default = "d_half")]
        noise_sd: f64,
        seed: Option<u64>,
    },
    /// A CSV file. Without a schema every non-label column is numeric; `classes`
    /// lists the label tokens of a classification target.
    Csv {
        path: PathBuf,
        schema: Option<PathBuf>,
        label: Option<String>,
        classes: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear {},
    Logistic {
        #[serde(default = "d_l2")]
        l2: f64,
        #[serde(default = "d_2000")]
        steps: usize,
        #[serde(default = "d_half")]
        lr: f64,
    },
    Mlp {
        #[serde(default = "d_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        dropout: f64,
        #[serde(default = "d_3000")]
        steps: usize,
        #[serde(default = "d_64")]
        batch_size: usize,
        #[serde(default = "d_lr")]
        lr: f64,
        #[serde(default = "d_decay")]
        decay_rate: f64,
        #[serde(default = "d_1000")]
        decay_steps: usize,
        seed: Option<u64>,
    },
    Svm {
        kernel: Kernel,
        #[serde(default = "d_one")]
        c: f64,
    },
    Tree {
        #[serde(default = "d_four_depth")]
        max_depth: usize,
    },
    Forest {
        #[serde(default = "d_100")]
        n_trees: usize,
        #[serde(default = "d_four_depth")]
        max_depth: usize,
        seed: Option<u64>,
    },
    /// A model JSON written by `train`.
    Saved {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Soft,
    Hard,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RiskyMeasure {
    #[default]
    Norm,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RiskyOutputSpec {
    #[default]
    Decision,
    Proba,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegSpec {
    /// Training row used as the anchor.
    pub anchor_index: Option<usize>,
    /// Literal anchor in raw feature units.
    pub anchor_point: Option<Vec<f64>>,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_two")]
    pub r: f64,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSpec {
    FixedLabel {
        target: f64,
        regularizer: Option<RegSpec>,
    },
    /// Disagreement between `model[0]` and `model[1]`. With `sigma` the
    /// exponential deviation form is used instead of cross-entropy.
    Contrast {
        #[serde(default)]
        mode: ModeSpec,
        sigma: Option<f64>,
        regularizer: Option<RegSpec>,
    },
    Risky {
        #[serde(default)]
        measure: RiskyMeasure,
        #[serde(default)]
        output: RiskyOutputSpec,
        #[serde(default = "d_class")]
        class: usize,
        alpha: Option<f64>,
        #[serde(default = "d_two")]
        r: f64,
        regularizer: Option<RegSpec>,
    },
    ParamSensitive {
        sigma_theta: f64,
        #[serde(default = "d_members")]
        members: usize,
        ensemble_seed: Option<u64>,
        #[serde(default)]
        mode: ModeSpec,
        /// Regressors use the exponential form with this yardstick.
        sigma: Option<f64>,
        regularizer: Option<RegSpec>,
    },
    /// Entropy of `model[0]` plus a pin holding `model[1]` at `class` with certainty.
    WinePin {
        #[serde(default = "d_class")]
        class: usize,
        #[serde(default = "d_pin_weight")]
        weight: f64,
        /// Feature whose split should appear on every pinned decision path.
        split_feature: Option<String>,
    },
    /// Fixed-label probe of `model[0]` pulled back through a latent map.
    Latent {
        target: f64,
        latent_dim: usize,
        layers: Vec<LatentLayer>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    Mean,
    Anchor,
    /// Nearest point to the feature mean that the pinned model assigns to its class.
    Pinned,
    Point {
        x: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub feature: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub tau: f64,
    pub step_size: f64,
    pub n_steps: usize,
    pub burn_in: Option<usize>,
    #[serde(default = "d_one_usize")]
    pub thinning: usize,
    #[serde(default = "d_one_usize")]
    pub chains: usize,
    pub seed: Option<u64>,
    pub drift: Option<DriftMode>,
    pub start: Option<StartSpec>,
    #[serde(default)]
    pub bounds: Vec<BoundSpec>,
    /// Clip every feature to the observed training range; explicit bounds take precedence.
    #[serde(default)]
    pub clip_to_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "d_samples")]
    pub samples: String,
    #[serde(default = "d_report")]
    pub report: String,
    #[serde(default = "d_plot")]
    pub plot: String,
    #[serde(default = "d_manifest")]
    pub manifest: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            samples: d_samples(),
            report: d_report(),
            plot: d_plot(),
            manifest: d_manifest(),
        }
    }
}

impl ProbeSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(CliError::config)
    }

    /// Reads a spec and makes relative paths absolute against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.rebase(base);
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(CliError::output)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = std::fs::canonicalize(&joined).unwrap_or(joined);
            }
        };
        if let DataSource::Csv { path, schema, .. } = &mut self.data.source {
            fix(path);
            if let Some(s) = schema {
                fix(s);
            }
        }
        for m in &mut self.models {
            if let ModelSpec::Saved { path } = m {
                fix(path);
            }
        }
    }

    pub fn required_models(&self) -> usize {
        match self.scenario {
            ScenarioSpec::Contrast { .. } | ScenarioSpec::WinePin { .. } => 2,
            _ => 1,
        }
    }

    /// Structural checks that need no data. Runs before anything is loaded or trained.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != SPEC_VERSION {
            return bad(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                self.version
            ));
        }
        let need = self.required_models();
        if self.models.len() != need {
            return bad(format!(
                "scenario needs {need} model section(s), found {}",
                self.models.len()
            ));
        }
        for m in &self.models {
            validate_model(m)?;
        }
        match &self.scenario {
            ScenarioSpec::FixedLabel { regularizer, .. } => validate_reg(regularizer)?,
            ScenarioSpec::Contrast { sigma, regularizer, .. } => {
                positive_opt("contrast sigma", *sigma)?;
                validate_reg(regularizer)?;
            }
            ScenarioSpec::Risky { r, regularizer, .. } => {
                if !(*r >= 1.0) {
                    return bad(format!("risky norm order must be >= 1, got {r}"));
                }
                validate_reg(regularizer)?;
            }
            ScenarioSpec::ParamSensitive {
                sigma_theta,
                members,
                sigma,
                regularizer,
                ..
            } => {
                if !(*sigma_theta >= 0.0) || *members == 0 {
                    return bad(format!(
                        "param-sensitive needs sigma_theta >= 0 and members >= 1, got {sigma_theta}, {members}"
                    ));
                }
                positive_opt("param-sensitive sigma", *sigma)?;
                validate_reg(regularizer)?;
            }
            ScenarioSpec::WinePin { weight, .. } => {
                if !(*weight > 0.0) {
                    return bad(format!("pin weight must be positive, got {weight}"));
                }
            }
            ScenarioSpec::Latent { .. } => {
                self.latent_map()?;
            }
        }
        let c = &self.chain;
        if !(c.tau > 0.0 && c.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", c.tau));
        }
        if !(c.step_size > 0.0 && c.step_size.is_finite()) {
            return bad(format!("step_size must be positive, got {}", c.step_size));
        }
        if c.burn_in.is_some_and(|b| b > c.n_steps) {
            return bad("burn_in exceeds n_steps".into());
        }
        if c.thinning == 0 || c.chains == 0 {
            return bad("thinning and chains must be at least 1".into());
        }
        for b in &c.bounds {
            if !(b.lo <= b.hi) {
                return bad(format!("bounds on `{}` are inverted", b.feature));
            }
        }
        if matches!(c.start, Some(StartSpec::Anchor)) && self.regularizer().is_none() {
            return bad("start = anchor needs a regularizer anchor".into());
        }
        if matches!(c.start, Some(StartSpec::Pinned)) && !matches!(self.scenario, ScenarioSpec::WinePin { .. }) {
            return bad("start = pinned is only meaningful for wine-pin".into());
        }
        if let Some(DriftMode::Smoothed { sigma, samples, .. }) = c.drift {
            if !(sigma > 0.0) || samples == 0 {
                return bad("smoothed drift needs sigma > 0 and samples >= 1".into());
            }
        }
        Ok(())
    }

    pub fn regularizer(&self) -> Option<&RegSpec> {
        match &self.scenario {
            ScenarioSpec::FixedLabel { regularizer, .. }
            | ScenarioSpec::Contrast { regularizer, .. }
            | ScenarioSpec::Risky { regularizer, .. }
            | ScenarioSpec::ParamSensitive { regularizer, .. } => regularizer.as_ref(),
            _ => None,
        }
    }

    pub fn latent_map(&self) -> Result<LatentMap> {
        let ScenarioSpec::Latent { latent_dim, layers, .. } = &self.scenario else {
            return Err(CliError::Config("not a latent scenario".into()));
        };
        if layers.is_empty() {
            return Err(CliError::Config("latent map needs at least one layer".into()));
        }
        let mut map = LatentMap::identity(*latent_dim);
        for layer in layers {
            map = match layer {
                LatentLayer::Affine { matrix, offset } => map
                    .then_affine(matrix.clone(), offset.clone())
                    .map_err(CliError::config)?,
                LatentLayer::Tanh => map.then_tanh(),
            };
        }
        Ok(map)
    }

    /// Fills every seed and scenario default that does not depend on trained models.
    /// Seeds derive from the master seed by slot: data 0, models 1.., ensemble 50, chains 99.
    pub fn resolve(&mut self) {
        let master = self.seed;
        match &mut self.data.source {
            DataSource::Circles { seed, .. }
            | DataSource::Credit { seed, .. }
            | DataSource::Wine { seed, .. }
            | DataSource::Housing { seed, .. }
            | DataSource::Xor { seed, .. }
            | DataSource::GaussianRegression { seed, .. } => {
                seed.get_or_insert(derive_seed(master, 0));
            }
            DataSource::Csv { .. } => {}
        }
        for (i, m) in self.models.iter_mut().enumerate() {
            if let ModelSpec::Mlp { seed, .. } | ModelSpec::Forest { seed, .. } = m {
                seed.get_or_insert(derive_seed(master, 1 + i as u64));
            }
        }
        match &mut self.scenario {
            ScenarioSpec::ParamSensitive { ensemble_seed, .. } => {
                ensemble_seed.get_or_insert(derive_seed(master, 50));
            }
            ScenarioSpec::Risky { output, alpha, .. } => {
                alpha.get_or_insert(match output {
                    RiskyOutputSpec::Decision => 0.0,
                    RiskyOutputSpec::Proba => 0.5,
                });
            }
            _ => {}
        }
        let has_reg = self.regularizer().is_some();
        let is_pin = matches!(self.scenario, ScenarioSpec::WinePin { .. });
        let c = &mut self.chain;
        c.seed.get_or_insert(derive_seed(master, 99));
        c.burn_in.get_or_insert(c.n_steps / 5);
        c.start.get_or_insert(if is_pin {
            StartSpec::Pinned
        } else if has_reg {
            StartSpec::Anchor
        } else {
            StartSpec::Mean
        });
    }
}

fn positive_opt(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(s) if !(s > 0.0) => Err(CliError::Config(format!("{name} must be positive, got {s}"))),
        _ => Ok(()),
    }
}

fn validate_reg(reg: &Option<RegSpec>) -> Result<()> {
    let Some(r) = reg else { return Ok(()) };
    if r.anchor_index.is_some() == r.anchor_point.is_some() {
        return Err(CliError::Config(
            "regularizer needs exactly one of anchor_index and anchor_point".into(),
        ));
    }
    if !(r.lambda >= 0.0) || !(r.r >= 1.0) {
        return Err(CliError::Config(format!(
            "regularizer needs lambda >= 0 and r >= 1, got {}, {}",
            r.lambda, r.r
        )));
    }
    Ok(())
}

fn validate_model(m: &ModelSpec) -> Result<()> {
    let ok = match m {
        ModelSpec::Logistic { l2, lr, .. } => *l2 >= 0.0 && *lr > 0.0,
        ModelSpec::Mlp {
            hidden,
            dropout,
            batch_size,
            lr,
            ..
        } => !hidden.is_empty() && !hidden.contains(&0) && (0.0..1.0).contains(dropout) && *batch_size > 0 && *lr > 0.0,
        ModelSpec::Svm { c, .. } => *c > 0.0,
        ModelSpec::Tree { max_depth } => *max_depth > 0,
        ModelSpec::Forest { n_trees, max_depth, .. } => *n_trees > 0 && *max_depth > 0,
        ModelSpec::Linear {} | ModelSpec::Saved { .. } => true,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("invalid model hyperparameters: {m:?}")))
    }
}

fn d_one() -> f64 {
    1.0
}
fn d_two() -> f64 {
    2.0
}
fn d_half() -> f64 {
    0.5
}
fn d_noise() -> f64 {
    0.1
}
fn d_l2() -> f64 {
    1e-3
}
fn d_lr() -> f64 {
    0.01
}
fn d_decay() -> f64 {
    0.9
}
fn d_lambda() -> f64 {
    0.1
}
fn d_pin_weight() -> f64 {
    5.0
}
fn d_one_usize() -> usize {
    1
}
fn d_class() -> usize {
    1
}
fn d_four() -> usize {
    4
}
fn d_four_depth() -> usize {
    4
}
fn d_60() -> usize {
    60
}
fn d_64() -> usize {
    64
}
fn d_100() -> usize {
    100
}
fn d_200() -> usize {
    200
}
fn d_400() -> usize {
    400
}
fn d_500() -> usize {
    500
}
fn d_1000() -> usize {
    1000
}
fn d_2000() -> usize {
    2000
}
fn d_3000() -> usize {
    3000
}
fn d_members() -> usize {
    50
}
fn d_hidden() -> Vec<usize> {
    vec![16]
}
fn d_samples() -> String {
    "samples.csv".into()
}
fn d_report() -> String {
    "report.json".into()
}
fn d_plot() -> String {
    "plot.csv".into()
}
fn d_manifest() -> String {
    "manifest.toml".into()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
seed = 3

[data.source]
kind = "circles"

[[model]]
kind = "svm"
kernel = { type = "rbf", gamma = 1.0 }

[scenario]
kind = "risky"

[chain]
tau = 0.1
step_size = 0.01
n_steps = 100
"#;

    #[test]
    fn minimal_spec_parses_and_validates() {
        let spec = ProbeSpec::from_toml_str(MINIMAL).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.output, OutputSpec::default());
    }

    #[test]
    fn resolved_spec_round_trips() {
        let mut spec = ProbeSpec::from_toml_str(MINIMAL).unwrap();
        spec.resolve();
        assert_eq!(spec.chain.burn_in, Some(20));
        assert_eq!(spec.chain.start, Some(StartSpec::Mean));
        let text = spec.to_toml_string().unwrap();
        let back = ProbeSpec::from_toml_str(&text).unwrap();
        assert_eq!(back, spec);
        let mut again = back.clone();
        again.resolve();
        assert_eq!(again, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("n_steps = 100", "n_steps = 100\nsteps = 5");
        assert!(matches!(ProbeSpec::from_toml_str(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_scenario_parameter_is_a_config_error() {
        let text = MINIMAL.replace("kind = \"risky\"", "kind = \"param-sensitive\"");
        let err = ProbeSpec::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("sigma_theta"), "{err}");
    }

    #[test]
    fn contrast_needs_two_models() {
        let text = MINIMAL.replace("kind = \"risky\"", "kind = \"contrast\"");
        let spec = ProbeSpec::from_toml_str(&text).unwrap();
        assert_eq!(spec.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn anchor_must_be_given_once() {
        let text = MINIMAL.replace("kind = \"risky\"", "kind = \"risky\"\nregularizer = { lambda = 0.1 }");
        let spec = ProbeSpec::from_toml_str(&text).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let spec = ProbeSpec::from_toml_str(&MINIMAL.replace("version = 1", "version = 2")).unwrap();
        assert!(spec.validate().is_err());
    }
}
