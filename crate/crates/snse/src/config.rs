//! JSON configuration: the model section and per-command experiment settings.
//!
//! Numeric constants that may be estimated accept either a number or the
//! string `"auto"`. [`validate_config`] reports every problem at once.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spherical_spectral::Spectrum;
use crate::{Error, Result};

/// A constant given explicitly or left to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "Value", into = "Value")]
pub enum Setting {
    #[default]
    Auto,
    Value(f64),
}

impl Setting {
    pub fn value(self) -> Option<f64> {
        match self {
            Setting::Auto => None,
            Setting::Value(v) => Some(v),
        }
    }
}

impl TryFrom<Value> for Setting {
    type Error = String;
    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match v {
            Value::String(s) if s == "auto" => Ok(Setting::Auto),
            Value::Number(n) => n.as_f64().map(Setting::Value).ok_or_else(|| "not a finite number".into()),
            other => Err(format!("expected a number or \"auto\", got {other}")),
        }
    }
}

impl From<Setting> for Value {
    fn from(s: Setting) -> Value {
        match s {
            Setting::Auto => Value::String("auto".into()),
            Setting::Value(v) => serde_json::json!(v),
        }
    }
}

/// One forcing coefficient `f_{l,m}` (vorticity, `m ≥ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub l: usize,
    pub m: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Constants of the energy estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    /// Young constant multiplying `|f|²` and `α|z|²` in `p(t)`.
    pub c: Setting,
    /// Companion constant `c′` (recorded; `λ₁/8` when auto).
    pub c_prime: Setting,
    /// Mode bound `|⟨B(u,e_l),u⟩| ≤ δ|u|²`.
    pub delta: Setting,
    /// Trilinear constant.
    pub c_b: Setting,
}

/// Geometric grid searched by the α selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSearch {
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
    pub n_paths: usize,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch { min: 0.25, max: 1.0e4, ratio: 2f64.powf(0.25), n_paths: 20_000 }
    }
}

/// Physical and numerical model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub l_max: usize,
    pub l_min: usize,
    pub spectrum: Spectrum,
    /// ν, unit-sphere normalized.
    pub viscosity: f64,
    /// Ω.
    pub rotation: f64,
    /// Stability index β.
    pub beta: f64,
    /// Noise modes `(l, m)` with `m ≥ 0`.
    pub noise_modes: Vec<(usize, usize)>,
    /// σ_l per noise mode.
    pub sigma: Vec<f64>,
    pub forcing: Vec<ForcingMode>,
    pub dt: f64,
    pub dealias: bool,
    pub alpha: Setting,
    pub constants: ConstantsConfig,
    pub alpha_search: AlphaSearch,
    /// Random samples refined by power iteration when estimating δ.
    pub delta_samples: usize,
    /// Random triples used for the `c_B` estimate.
    pub c_b_samples: usize,
    /// H-norm above which a trajectory counts as blown up.
    pub blowup_threshold: f64,
    /// Base seed for every derived stream.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            l_max: 31,
            l_min: 2,
            spectrum: Spectrum::Stokes,
            viscosity: 1.0,
            rotation: 2.0,
            beta: 1.5,
            noise_modes: vec![(2, 0), (3, 0)],
            sigma: vec![0.5, 0.5],
            forcing: vec![
                ForcingMode { l: 4, m: 2, re: 5.0, im: 0.0 },
                ForcingMode { l: 5, m: 1, re: 3.0, im: 0.0 },
            ],
            dt: 1.0e-3,
            dealias: true,
            alpha: Setting::Auto,
            constants: ConstantsConfig::default(),
            alpha_search: AlphaSearch::default(),
            delta_samples: 8,
            c_b_samples: 32,
            blowup_threshold: 1.0e6,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Small truncation used by the measure experiments.
    pub fn small() -> Self {
        ModelConfig { l_max: 7, dt: 1.0e-2, ..ModelConfig::default() }
    }

    /// Same model without noise.
    pub fn noise_free(mut self) -> Self {
        self.sigma.iter_mut().for_each(|s| *s = 0.0);
        self
    }

    /// Same model without forcing.
    pub fn unforced(mut self) -> Self {
        self.forcing.clear();
        self
    }

    /// All semantic problems with this model section.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        let min_l = match self.spectrum {
            Spectrum::Stokes => 2,
            Spectrum::Laplacian => 1,
        };
        if self.l_min < min_l {
            e.push(format!("model.l_min = {} must be >= {min_l} for this spectrum", self.l_min));
        }
        if self.l_max < self.l_min {
            e.push(format!("model.l_max = {} must be >= model.l_min = {}", self.l_max, self.l_min));
        }
        if self.l_max > 512 {
            e.push(format!("model.l_max = {} exceeds the supported 512", self.l_max));
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            e.push(format!("model.viscosity = {} must be a finite number > 0", self.viscosity));
        }
        if !(self.rotation >= 0.0 && self.rotation.is_finite()) {
            e.push(format!("model.rotation = {} must be a finite number >= 0", self.rotation));
        }
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            e.push(format!("model.beta = {} must lie in (0, 2]", self.beta));
        }
        if self.noise_modes.is_empty() {
            e.push("model.noise_modes must list at least one mode".into());
        }
        if self.sigma.len() != self.noise_modes.len() {
            e.push(format!(
                "model.sigma has {} entries but model.noise_modes has {}",
                self.sigma.len(),
                self.noise_modes.len()
            ));
        }
        for (i, s) in self.sigma.iter().enumerate() {
            if !(*s >= 0.0 && s.is_finite()) {
                e.push(format!("model.sigma[{i}] = {s} must be a finite number >= 0"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, &(l, m)) in self.noise_modes.iter().enumerate() {
            if l < self.l_min || l > self.l_max || m > l {
                e.push(format!(
                    "model.noise_modes[{i}] = ({l}, {m}) is outside the retained modes l in [{}, {}], 0 <= m <= l",
                    self.l_min, self.l_max
                ));
            }
            if !seen.insert((l, m)) {
                e.push(format!("model.noise_modes[{i}] = ({l}, {m}) is listed twice"));
            }
        }
        for (i, f) in self.forcing.iter().enumerate() {
            if f.l < self.l_min || f.l > self.l_max || f.m > f.l {
                e.push(format!("model.forcing[{i}] = ({}, {}) is outside the retained modes", f.l, f.m));
            }
            if !(f.re.is_finite() && f.im.is_finite()) {
                e.push(format!("model.forcing[{i}] has a non-finite coefficient"));
            }
            if f.m == 0 && f.im != 0.0 {
                e.push(format!("model.forcing[{i}]: zonal coefficient must be real, im = {}", f.im));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            e.push(format!("model.dt = {} must be a finite number > 0", self.dt));
        }
        if let Setting::Value(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                e.push(format!("model.alpha = {a} must be >= 0"));
            }
        } else if self.beta <= 1.0 {
            e.push(format!("model.alpha = \"auto\" needs model.beta > 1 (got {})", self.beta));
        }
        let consts = [
            ("c", self.constants.c),
            ("c_prime", self.constants.c_prime),
            ("delta", self.constants.delta),
            ("c_b", self.constants.c_b),
        ];
        for (name, s) in consts {
            if let Setting::Value(v) = s {
                if !(v >= 0.0 && v.is_finite()) {
                    e.push(format!("model.constants.{name} = {v} must be >= 0"));
                }
            }
        }
        let s = &self.alpha_search;
        if !(s.min > 0.0 && s.max > s.min && s.ratio > 1.0 && s.n_paths >= 2) {
            e.push(format!(
                "model.alpha_search needs 0 < min < max, ratio > 1 and n_paths >= 2 (got {}, {}, {}, {})",
                s.min, s.max, s.ratio, s.n_paths
            ));
        }
        if self.delta_samples == 0 {
            e.push("model.delta_samples must be >= 1".into());
        }
        if self.c_b_samples == 0 {
            e.push("model.c_b_samples must be >= 1".into());
        }
        if !(self.blowup_threshold > 0.0) {
            e.push(format!("model.blowup_threshold = {} must be > 0", self.blowup_threshold));
        }
        e
    }

    /// Non-fatal remarks.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.dt > 0.0 {
            let n = (1.0 / self.dt).round();
            if n < 1.0 || (n * self.dt - 1.0).abs() > 1e-9 {
                w.push(format!(
                    "model.dt = {} does not divide 1.0; integer pullback times will not be grid-aligned",
                    self.dt
                ));
            }
        }
        if self.viscosity > 0.0 && self.viscosity <= 0.75 && self.constants.c == Setting::Auto {
            w.push(format!(
                "model.viscosity = {} <= 3/4 leaves no Young budget for the V estimate; c falls back to 1/lambda_1",
                self.viscosity
            ));
        }
        w
    }
}

/// Experiment subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Pullback,
    Attractor,
    OuStats,
    Verify,
    Measure,
    Cocycle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pullback => "pullback",
            Command::Attractor => "attractor",
            Command::OuStats => "ou-stats",
            Command::Verify => "verify",
            Command::Measure => "measure",
            Command::Cocycle => "cocycle",
        }
    }
}

/// Forward run from `t_start` to `t_end` with a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub t_start: f64,
    pub t_end: f64,
    /// H-norm of the random initial state (0 starts from rest).
    pub init_radius: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec { t_start: 0.0, t_end: 2.0, init_radius: 1.0, snapshot_times: vec![1.0, 2.0] }
    }
}

/// Pullback ensemble on one noise realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PullbackSpec {
    pub t0_schedule: Vec<f64>,
    pub ball_radius: f64,
    pub ball_samples: usize,
    /// Hausdorff tolerance for the Ω-limit certificate.
    pub tol: f64,
}

impl Default for PullbackSpec {
    fn default() -> Self {
        PullbackSpec {
            t0_schedule: vec![-1.0, -2.0, -4.0, -8.0, -16.0, -32.0],
            ball_radius: 2.0,
            ball_samples: 8,
            tol: 1.0e-2,
        }
    }
}

/// OU statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuStatsSpec {
    pub horizon: f64,
    /// Growth exponent κ; `None` uses `2/β`.
    pub kappa: Option<f64>,
    pub moment_paths: usize,
    /// Time step of the exported z trace (multiple of dt).
    pub trace_every: usize,
}

impl Default for OuStatsSpec {
    fn default() -> Self {
        OuStatsSpec { horizon: 100.0, kappa: None, moment_paths: 20_000, trace_every: 10 }
    }
}

/// Ledger verification ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub t_start: f64,
    pub members: usize,
    pub ball_radius: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { t_start: -8.0, members: 20, ball_radius: 2.0 }
    }
}

/// Invariant-measure experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSpec {
    pub t_big: f64,
    pub n_seeds: usize,
    pub ball_radius: f64,
    pub invariance_s: Vec<f64>,
    pub ck_t: f64,
    pub ck_s: f64,
    pub ck_lhs: usize,
    pub ck_outer: usize,
    pub ck_inner: usize,
    pub feller_t: f64,
    pub feller_eps: Vec<f64>,
    pub feller_samples: usize,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec {
            t_big: 4.0,
            n_seeds: 2000,
            ball_radius: 1.0,
            invariance_s: vec![0.25, 0.5],
            ck_t: 0.5,
            ck_s: 0.5,
            ck_lhs: 10_000,
            ck_outer: 100,
            ck_inner: 100,
            feller_t: 0.5,
            feller_eps: vec![1e-1, 1e-2, 1e-3],
            feller_samples: 200,
        }
    }
}

/// Cocycle residual probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CocycleSpec {
    pub t: f64,
    pub s: f64,
    pub pairs: usize,
    pub init_radius: f64,
    pub tolerance: f64,
}

impl Default for CocycleSpec {
    fn default() -> Self {
        CocycleSpec { t: 1.0, s: 1.0, pairs: 10, init_radius: 1.0, tolerance: 1e-10 }
    }
}

/// Experiment settings; only the section of the chosen command is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub simulate: SimulateSpec,
    pub pullback: PullbackSpec,
    pub ou_stats: OuStatsSpec,
    pub verify: VerifySpec,
    pub measure: MeasureSpec,
    pub cocycle: CocycleSpec,
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
}

/// A validated configuration plus warnings.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: Config,
    pub warnings: Vec<String>,
}

fn is_aligned(t: f64, dt: f64) -> bool {
    dt > 0.0 && ((t / dt).round() * dt - t).abs() <= 1e-9 * t.abs().max(1.0)
}

impl Config {
    /// All semantic problems, model and experiment.
    pub fn problems(&self) -> Vec<String> {
        let mut e = self.model.problems();
        let dt = self.model.dt;
        let x = &self.experiment;
        let s = &x.simulate;
        if !(s.t_end > s.t_start) {
            e.push(format!("experiment.simulate.t_end = {} must exceed t_start = {}", s.t_end, s.t_start));
        }
        for &t in &s.snapshot_times {
            if t < s.t_start || t > s.t_end {
                e.push(format!("experiment.simulate.snapshot_times entry {t} lies outside [t_start, t_end]"));
            }
        }
        if !(s.init_radius >= 0.0) {
            e.push("experiment.simulate.init_radius must be >= 0".into());
        }
        let p = &x.pullback;
        if p.t0_schedule.is_empty() {
            e.push("experiment.pullback.t0_schedule must not be empty".into());
        }
        for &t0 in &p.t0_schedule {
            if t0 > -1.0 {
                e.push(format!("experiment.pullback.t0_schedule entry {t0} must be <= -1"));
            } else if !is_aligned(t0, dt) {
                e.push(format!("experiment.pullback.t0_schedule entry {t0} is not a multiple of model.dt"));
            }
        }
        if !(p.ball_radius >= 0.0) || p.ball_samples == 0 {
            e.push("experiment.pullback needs ball_radius >= 0 and ball_samples >= 1".into());
        }
        if !(p.tol > 0.0) {
            e.push("experiment.pullback.tol must be > 0".into());
        }
        let o = &x.ou_stats;
        if !(o.horizon > 0.0) || o.moment_paths < 2 || o.trace_every == 0 {
            e.push("experiment.ou_stats needs horizon > 0, moment_paths >= 2, trace_every >= 1".into());
        }
        if let Some(k) = o.kappa {
            if !(k > 0.0) {
                e.push(format!("experiment.ou_stats.kappa = {k} must be > 0"));
            }
        }
        let v = &x.verify;
        if !(v.t_start <= -1.0) || !is_aligned(v.t_start, dt) {
            e.push(format!("experiment.verify.t_start = {} must be <= -1 and a multiple of model.dt", v.t_start));
        }
        if v.members == 0 {
            e.push("experiment.verify.members must be >= 1".into());
        }
        let m = &x.measure;
        if !(m.t_big > 0.0) || !is_aligned(m.t_big, dt) {
            e.push(format!("experiment.measure.t_big = {} must be > 0 and a multiple of model.dt", m.t_big));
        }
        if m.n_seeds < 2 || m.ck_lhs < 2 || m.ck_outer < 2 || m.ck_inner < 1 || m.feller_samples < 2 {
            e.push("experiment.measure sample counts are too small".into());
        }
        for &t in m.invariance_s.iter().chain([m.ck_t, m.ck_s, m.feller_t].iter()) {
            if !(t >= 0.0) || !is_aligned(t, dt) {
                e.push(format!("experiment.measure time {t} must be >= 0 and a multiple of model.dt"));
            }
        }
        let c = &x.cocycle;
        if !(c.t >= 0.0 && c.s >= 0.0) || !is_aligned(c.t, dt) || !is_aligned(c.s, dt) {
            e.push(format!("experiment.cocycle t = {}, s = {} must be >= 0 multiples of model.dt", c.t, c.s));
        }
        if c.pairs == 0 {
            e.push("experiment.cocycle.pairs must be >= 1".into());
        }
        e
    }
}

/// Parse and validate a JSON configuration, reporting every error at once.
pub fn validate_config(raw: &str) -> Result<Validated> {
    let value: Value = serde_json::from_str(raw).map_err(|e| Error::Config(vec![format!("invalid JSON: {e}")]))?;
    let config: Config =
        serde_json::from_value(value).map_err(|e| Error::Config(vec![format!("schema: {e}")]))?;
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let warnings = config.model.warnings();
    Ok(Validated { config, warnings })
}
