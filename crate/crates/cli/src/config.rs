//! TOML experiment configuration, defaults, and field-level validation.

use std::fmt;
use std::path::{Path, PathBuf};

use riskquant::dim::MarketConfig;
use riskquant::nn::InterpGrid;
use riskquant::optim::TrainConfig;
use riskquant::trainers::{Arch, FitConfig, TransformKind};
use riskquant::validation::NestedMcConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ToyVar,
    ToyEs,
    ToyJoint,
    Crossing,
    Rate,
    TwinValidate,
    ElicitCheck,
    Dim,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ToyVar => "toy_var",
            ExperimentKind::ToyEs => "toy_es",
            ExperimentKind::ToyJoint => "toy_joint",
            ExperimentKind::Crossing => "crossing",
            ExperimentKind::Rate => "rate",
            ExperimentKind::TwinValidate => "twin_validate",
            ExperimentKind::ElicitCheck => "elicit_check",
            ExperimentKind::Dim => "dim",
        }
    }

    fn default_methods(self) -> Vec<Method> {
        use Method::*;
        match self {
            ExperimentKind::ToyVar => vec![Single, Multi1, Multi2, Multi3],
            ExperimentKind::ToyEs => vec![EsFullnet, EsFrozenlr],
            ExperimentKind::ToyJoint => vec![EsFullnet, EsFrozenlr, Joint],
            ExperimentKind::Crossing => vec![Single, Multi1],
            ExperimentKind::Rate => vec![Single],
            ExperimentKind::TwinValidate | ExperimentKind::ElicitCheck => Vec::new(),
            ExperimentKind::Dim => vec![Single],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Single,
    Multi1,
    Multi2,
    Multi3,
    Joint,
    EsFullnet,
    EsFrozenlr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Multi1 => "multi1",
            Method::Multi2 => "multi2",
            Method::Multi3 => "multi3",
            Method::Joint => "joint",
            Method::EsFullnet => "es_fullnet",
            Method::EsFrozenlr => "es_frozenlr",
        }
    }
}

/// Which tail the configured levels refer to. `lower` levels are mapped
/// through `α ↦ 1 − α` when the config is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaConvention {
    #[default]
    Upper,
    Lower,
}

/// VaR candidate for the full-network ES regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsCandidate {
    /// Closed-form conditional quantile.
    #[default]
    Exact,
    /// Single-α VaR network trained on the same data.
    Learned,
}

/// Uniform interpolation grid for multi-α (III).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    /// Number of knots.
    pub knots: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lo: 0.85,
            hi: 0.999,
            knots: 21,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> riskquant::Result<InterpGrid> {
        InterpGrid::uniform(self.lo, self.hi, self.knots)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimConfig {
    pub market: MarketConfig,
    /// Training paths per run.
    pub n_paths: usize,
    /// Outer nodes of the nested benchmark.
    pub n_outer: usize,
    /// Times (years) at which the learned IM is compared with the benchmark.
    pub eval_times: Vec<f64>,
    pub warm_start: bool,
    /// Benchmark settings; its `alpha` is replaced by each entry of `alphas`.
    pub nested: NestedMcConfig,
    /// Also write each run's training paths (binary and CSV).
    pub export_paths: bool,
}

impl Default for DimConfig {
    fn default() -> Self {
        Self {
            market: MarketConfig::default(),
            n_paths: 1 << 15,
            n_outer: 256,
            eval_times: vec![2.5, 5.0, 7.5],
            warm_start: true,
            nested: NestedMcConfig {
                n_inner: 512,
                iterations: 128,
                gamma: 0.1,
                ..Default::default()
            },
            export_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub alpha_convention: AlphaConvention,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    /// Held-out rows for metrics.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Empty means the experiment's default list.
    #[serde(default)]
    pub methods: Vec<Method>,
    /// `[low, high]` for multi-α (I) and (II).
    #[serde(default = "default_alpha_range")]
    pub alpha_range: [f64; 2],
    #[serde(default)]
    pub grid: GridConfig,
    /// Crossing penalty weight for multi-α (I).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// `(high, low)` level pairs for crossing rates.
    #[serde(default = "default_pairs")]
    pub crossing_pairs: Vec<[f64; 2]>,
    /// VaR used by `es_fullnet` in `toy_es`; `toy_joint` always uses a learned one.
    #[serde(default)]
    pub es_candidate: EsCandidate,
    /// Truncation bound `B` of the ES target; absent means none.
    #[serde(default)]
    pub trunc: Option<f64>,
    /// Perturbed levels `α′` fed to the p-value estimator in `twin_validate`.
    #[serde(default)]
    pub perturbed_alphas: Vec<f64>,
    /// Gaussian sample size of `elicit_check`.
    #[serde(default = "default_elicit_sample")]
    pub elicit_sample_size: usize,
    #[serde(default)]
    pub arch: Arch,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub transform: TransformKind,
    #[serde(default)]
    pub dim: DimConfig,
}

fn default_runs() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_dims() -> Vec<usize> {
    vec![5]
}
fn default_sample_sizes() -> Vec<usize> {
    vec![1 << 14]
}
fn default_test_size() -> usize {
    10_000
}
fn default_alphas() -> Vec<f64> {
    vec![0.95]
}
fn default_alpha_range() -> [f64; 2] {
    [0.85, 0.9999]
}
fn default_lambda() -> f64 {
    10.0
}
fn default_pairs() -> Vec<[f64; 2]> {
    vec![[0.999, 0.995]]
}
fn default_elicit_sample() -> usize {
    1_000_000
}
fn default_train() -> TrainConfig {
    TrainConfig::default()
}

/// One invalid field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills experiment-dependent defaults, maps lower-tail levels to upper
    /// tail, and validates. The result is what gets echoed and executed.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.methods.is_empty() {
            self.methods = self.experiment.default_methods();
        }
        if self.alpha_convention == AlphaConvention::Lower {
            let flip = |a: &mut f64| *a = 1.0 - *a;
            self.alphas.iter_mut().for_each(flip);
            self.perturbed_alphas.iter_mut().for_each(flip);
            let [lo, hi] = self.alpha_range;
            self.alpha_range = [1.0 - hi, 1.0 - lo];
            let (lo, hi) = (self.grid.lo, self.grid.hi);
            self.grid.lo = 1.0 - hi;
            self.grid.hi = 1.0 - lo;
            for p in self.crossing_pairs.iter_mut() {
                *p = [1.0 - p[1], 1.0 - p[0]];
            }
            self.alpha_convention = AlphaConvention::Upper;
        }
        if self.experiment == ExperimentKind::Crossing {
            for p in &self.crossing_pairs {
                for a in p {
                    if !self.alphas.contains(a) {
                        self.alphas.push(*a);
                    }
                }
            }
        }
        let errors = self.field_errors();
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |field: String, message: String| errs.push(FieldError { field, message });
        let level_ok = |a: f64| a > 0.0 && a < 1.0;
        if self.runs == 0 {
            push("runs".into(), "must be at least 1".into());
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !level_ok(a) {
                push(format!("alphas[{i}]"), format!("{a} is outside (0, 1)"));
            }
        }
        if self.alphas.is_empty() && self.experiment != ExperimentKind::ElicitCheck {
            push("alphas".into(), "needs at least one level".into());
        }
        for (i, &a) in self.perturbed_alphas.iter().enumerate() {
            if !level_ok(a) {
                push(
                    format!("perturbed_alphas[{i}]"),
                    format!("{a} is outside (0, 1)"),
                );
            }
        }
        let [lo, hi] = self.alpha_range;
        if !(level_ok(lo) && level_ok(hi) && lo < hi) {
            push(
                "alpha_range".into(),
                format!("[{lo}, {hi}] must satisfy 0 < low < high < 1"),
            );
        }
        if let Err(e) = self.grid.build() {
            push("grid".into(), e.to_string());
        }
        for (i, p) in self.crossing_pairs.iter().enumerate() {
            if !(level_ok(p[0]) && level_ok(p[1]) && p[0] > p[1]) {
                push(
                    format!("crossing_pairs[{i}]"),
                    format!(
                        "[{}, {}] must be levels in (0, 1) with high > low",
                        p[0], p[1]
                    ),
                );
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            push(
                "lambda".into(),
                format!("{} must be finite and nonnegative", self.lambda),
            );
        }
        if let Some(b) = self.trunc {
            if !(b > 0.0) {
                push("trunc".into(), format!("{b} must be positive"));
            }
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            push("dims".into(), "needs positive dimensions".into());
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            push("sample_sizes".into(), "needs positive sizes".into());
        }
        if self.test_size < 2 {
            push("test_size".into(), "must be at least 2".into());
        }
        if self.elicit_sample_size < 1000 {
            push("elicit_sample_size".into(), "must be at least 1000".into());
        }
        if let Err(e) = self.train.validate() {
            push("train".into(), e.to_string());
        }
        if self.arch.hidden_layers == 0 && self.methods.contains(&Method::EsFrozenlr) {
            push(
                "arch.hidden_layers".into(),
                "es_frozenlr needs at least one hidden layer".into(),
            );
        }
        if let TransformKind::Tanh { scale } = self.transform {
            if !(scale > 0.0) {
                push(
                    "transform.scale".into(),
                    format!("{scale} must be positive"),
                );
            }
        }
        let multi_ok = |a: f64| a >= lo && a <= hi;
        let grid_ok = |a: f64| a >= self.grid.lo && a <= self.grid.hi;
        for (i, &a) in self.alphas.iter().enumerate() {
            if (self.methods.contains(&Method::Multi1) || self.methods.contains(&Method::Multi2))
                && !multi_ok(a)
            {
                push(
                    format!("alphas[{i}]"),
                    format!("{a} is outside alpha_range"),
                );
            }
            if self.methods.contains(&Method::Multi3) && !grid_ok(a) {
                push(format!("alphas[{i}]"), format!("{a} is outside the grid"));
            }
        }
        let allowed: &[Method] = match self.experiment {
            ExperimentKind::ToyVar | ExperimentKind::Crossing | ExperimentKind::Rate => &[
                Method::Single,
                Method::Multi1,
                Method::Multi2,
                Method::Multi3,
            ],
            ExperimentKind::ToyEs | ExperimentKind::ToyJoint => {
                &[Method::Joint, Method::EsFullnet, Method::EsFrozenlr]
            }
            ExperimentKind::Dim => &[
                Method::Single,
                Method::Multi1,
                Method::Multi2,
                Method::Multi3,
            ],
            ExperimentKind::TwinValidate | ExperimentKind::ElicitCheck => &[],
        };
        for (i, m) in self.methods.iter().enumerate() {
            if !allowed.contains(m) {
                push(
                    format!("methods[{i}]"),
                    format!(
                        "{} is not available for {}",
                        m.name(),
                        self.experiment.name()
                    ),
                );
            }
        }
        if self.experiment == ExperimentKind::Dim {
            let d = &self.dim;
            if let Err(e) = riskquant::dim::Market::new(d.market.clone()) {
                push("dim.market".into(), e.to_string());
            }
            if d.n_paths == 0 {
                push("dim.n_paths".into(), "must be positive".into());
            }
            if d.n_outer < 2 {
                push("dim.n_outer".into(), "must be at least 2".into());
            }
            if let Err(e) = d.nested.validate() {
                push("dim.nested".into(), e.to_string());
            }
            let horizon = d.market.horizon_years;
            let dt = d.market.dt();
            for (i, &t) in d.eval_times.iter().enumerate() {
                if ((t / dt).round() * dt - t).abs() > 1e-9 {
                    push(
                        format!("dim.eval_times[{i}]"),
                        format!("{t} is not on the {dt}-year grid"),
                    );
                }
                if !(t >= 0.0 && t + d.market.delta <= horizon + 1e-9) {
                    push(
                        format!("dim.eval_times[{i}]"),
                        format!("{t} leaves no margin window before the {horizon}-year horizon"),
                    );
                }
            }
        }
        if self.experiment == ExperimentKind::Rate && self.sample_sizes.len() < 2 {
            push(
                "sample_sizes".into(),
                "rate needs at least two sizes".into(),
            );
        }
        errs
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            arch: self.arch.clone(),
            train: TrainConfig {
                seed,
                ..self.train.clone()
            },
            transform: self.transform,
        }
    }
}
