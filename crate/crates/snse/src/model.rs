//! Runtime model: a [`ModelConfig`] with every `"auto"` constant resolved,
//! the operator context, the OU generators and the exponential propagator.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{ModelConfig, Setting};
use crate::fluid_operators::{coriolis_rate, estimate_c_b, estimate_mode_bound_delta, ModeBound, OperatorContext};
use crate::ou_process::{alpha_certificate, select_alpha, AlphaCertificate, LedgerConstants, OuSpec};
use crate::seeding::{derive_seed, tag};
use crate::spherical_spectral::{SpectralField, Truncation, C64};
use crate::stable_noise::{make_two_sided_path, NoisePath};
use crate::{Error, Result};

/// Resolved constants with their provenance (`"given"` or `"estimated"`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub alpha: f64,
    pub delta: f64,
    pub c: f64,
    pub c_prime: f64,
    pub c_b: f64,
    pub lambda1: f64,
    pub sources: BTreeMap<String, String>,
}

/// `e^{xh}`, `φ₁(xh)` and `φ₂(xh)` with `x = -(νλ_l + i r_lm)` per coefficient.
#[derive(Debug, Clone)]
pub(crate) struct Propagator {
    pub dt: f64,
    pub e: Vec<C64>,
    pub p1: Vec<C64>,
    pub p2: Vec<C64>,
}

fn phi12(x: C64) -> (C64, C64) {
    if x.norm() < 0.5 {
        // Power series; the closed forms cancel catastrophically near 0.
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for k in 0..18 {
            p1 += term / fact(k + 1);
            p2 += term / fact(k + 2);
            term *= x;
        }
        (p1, p2)
    } else {
        let e = x.exp();
        ((e - 1.0) / x, (e - 1.0 - x) / (x * x))
    }
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Propagator {
    fn new(trunc: &Truncation, viscosity: f64, rotation: f64, dt: f64) -> Self {
        let n = trunc.len();
        let mut e = vec![C64::new(0.0, 0.0); n];
        let mut p1 = e.clone();
        let mut p2 = e.clone();
        for (l, m, i) in trunc.modes() {
            let x = -C64::new(viscosity * trunc.eig(l), coriolis_rate(l, m, rotation)) * dt;
            e[i] = if x.im == 0.0 { C64::new(x.re.exp(), 0.0) } else { x.exp() };
            let (a, b) = phi12(x);
            p1[i] = a;
            p2[i] = b;
        }
        Propagator { dt, e, p1, p2 }
    }
}

/// A fully resolved model.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    ctx: OperatorContext,
    forcing: SpectralField,
    ou: OuSpec,
    noise_slots: Vec<(usize, f64)>,
    constants: Constants,
    mode_bound: Option<ModeBound>,
    alpha_certificate: Option<AlphaCertificate>,
    warnings: Vec<String>,
    pub(crate) prop: Propagator,
}

/// Serializable summary of a resolved model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelReport<'a> {
    pub config: &'a ModelConfig,
    pub constants: &'a Constants,
    pub mode_bound: &'a Option<ModeBound>,
    pub alpha_certificate: &'a Option<AlphaCertificate>,
    pub grid: (usize, usize),
    pub forcing_norm: f64,
    pub warnings: &'a [String],
}

fn unit_coefficient(l: usize, m: usize) -> f64 {
    let ll = (l * (l + 1)) as f64;
    if m == 0 {
        ll.sqrt()
    } else {
        (ll / 2.0).sqrt()
    }
}

impl Model {
    /// Resolve `cfg`. Estimation order: δ, then α (which needs δ), then c
    /// (which needs α), then `c_B`. All estimators use seeds derived from
    /// `cfg.seed`.
    pub fn from_config(cfg: &ModelConfig) -> Result<Model> {
        let mut problems = cfg.problems();
        // ν = 0 is allowed programmatically for conservation checks.
        problems.retain(|p| !(p.starts_with("model.viscosity") && cfg.viscosity == 0.0));
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut warnings = cfg.warnings();
        let trunc = Truncation::new(cfg.l_max, cfg.l_min, cfg.spectrum)?;
        let ctx = OperatorContext::dealiased(trunc, cfg.rotation, cfg.viscosity)?;
        let mut forcing = SpectralField::zeros(trunc);
        for f in &cfg.forcing {
            let i = trunc.index(f.l, f.m);
            forcing.coeffs_mut()[i] += C64::new(f.re, f.im);
        }
        let lambda1 = trunc.lambda1();
        let mut sources = BTreeMap::new();
        let noise_fields: Vec<SpectralField> = cfg
            .noise_modes
            .iter()
            .map(|&(l, m)| SpectralField::unit_mode(trunc, l, m))
            .collect::<Result<_>>()?;
        let noise_slots = cfg.noise_modes.iter().map(|&(l, m)| (trunc.index(l, m), unit_coefficient(l, m))).collect();

        let (delta, mode_bound) = match cfg.constants.delta {
            Setting::Value(d) => {
                sources.insert("delta".into(), "given".into());
                (d, None)
            }
            Setting::Auto => {
                sources.insert("delta".into(), "estimated".into());
                let mb = estimate_mode_bound_delta(
                    &noise_fields,
                    &ctx,
                    cfg.delta_samples,
                    derive_seed(cfg.seed, tag::CONSTANT, 0),
                )?;
                (mb.delta, Some(mb))
            }
        };

        let ou0 = OuSpec::new(&trunc, cfg.viscosity, cfg.rotation, 0.0, &cfg.noise_modes, &cfg.sigma, cfg.beta);
        let moment_seed = derive_seed(cfg.seed, tag::MOMENT, 0);
        let (alpha, alpha_certificate) = match cfg.alpha {
            Setting::Value(a) => {
                sources.insert("alpha".into(), "given".into());
                let ou = OuSpec::new(&trunc, cfg.viscosity, cfg.rotation, a, &cfg.noise_modes, &cfg.sigma, cfg.beta)?;
                let cert = if cfg.beta > 1.0 && delta > 0.0 {
                    Some(alpha_certificate(&ou, delta, lambda1, cfg.dt, cfg.alpha_search.n_paths, moment_seed)?)
                } else {
                    None
                };
                (a, cert)
            }
            Setting::Auto => {
                sources.insert("alpha".into(), "estimated".into());
                let search = cfg.alpha_search;
                let template = match ou0 {
                    Ok(s) => s,
                    // ν = 0 leaves α = 0 non-dissipative; start the template at the grid floor.
                    Err(_) => OuSpec::new(
                        &trunc,
                        cfg.viscosity,
                        cfg.rotation,
                        search.min,
                        &cfg.noise_modes,
                        &cfg.sigma,
                        cfg.beta,
                    )?,
                };
                let cert = select_alpha(&template, delta.max(f64::MIN_POSITIVE), lambda1, &search, cfg.dt, moment_seed)?;
                (cert.alpha, Some(cert))
            }
        };
        let ou = OuSpec::new(&trunc, cfg.viscosity, cfg.rotation, alpha, &cfg.noise_modes, &cfg.sigma, cfg.beta)?;

        let f_sq = forcing.h_norm_sq();
        let c = match cfg.constants.c {
            Setting::Value(c) => {
                sources.insert("c".into(), "given".into());
                c
            }
            Setting::Auto => {
                let budget = lambda1 * (2.0 * cfg.viscosity - 1.5);
                if budget <= 0.0 {
                    sources.insert("c".into(), "fallback 1/lambda1".into());
                    warnings.push(format!("no Young budget at viscosity {}; c = 1/lambda1", cfg.viscosity));
                    1.0 / lambda1
                } else {
                    sources.insert("c".into(), "young budget".into());
                    auto_c(budget, f_sq > 0.0, alpha)
                }
            }
        };
        let c_prime = match cfg.constants.c_prime {
            Setting::Value(v) => {
                sources.insert("c_prime".into(), "given".into());
                v
            }
            Setting::Auto => {
                sources.insert("c_prime".into(), "lambda1/8".into());
                lambda1 / 8.0
            }
        };
        let c_b = match cfg.constants.c_b {
            Setting::Value(v) => {
                sources.insert("c_b".into(), "given".into());
                v
            }
            Setting::Auto => {
                sources.insert("c_b".into(), "estimated".into());
                estimate_c_b(&ctx, cfg.c_b_samples, derive_seed(cfg.seed, tag::CONSTANT, 1))?
            }
        };
        let prop = Propagator::new(&trunc, cfg.viscosity, cfg.rotation, cfg.dt);
        Ok(Model {
            config: cfg.clone(),
            ctx,
            forcing,
            ou,
            noise_slots,
            constants: Constants { alpha, delta, c, c_prime, c_b, lambda1, sources },
            mode_bound,
            alpha_certificate,
            warnings,
            prop,
        })
    }

    /// The same model with another time step (constants kept).
    pub fn with_dt(&self, dt: f64) -> Result<Model> {
        if !(dt > 0.0) {
            return Err(Error::param(format!("dt = {dt} must be > 0")));
        }
        let mut m = self.clone();
        m.config.dt = dt;
        m.prop = Propagator::new(self.ctx.trunc(), self.config.viscosity, self.config.rotation, dt);
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
    pub fn ctx(&self) -> &OperatorContext {
        &self.ctx
    }
    pub fn trunc(&self) -> &Truncation {
        self.ctx.trunc()
    }
    pub fn dt(&self) -> f64 {
        self.config.dt
    }
    pub fn forcing(&self) -> &SpectralField {
        &self.forcing
    }
    pub fn ou(&self) -> &OuSpec {
        &self.ou
    }
    pub fn constants(&self) -> &Constants {
        &self.constants
    }
    pub fn alpha(&self) -> f64 {
        self.constants.alpha
    }
    pub fn lambda1(&self) -> f64 {
        self.constants.lambda1
    }
    pub fn mode_bound(&self) -> Option<&ModeBound> {
        self.mode_bound.as_ref()
    }
    pub fn alpha_certificate(&self) -> Option<&AlphaCertificate> {
        self.alpha_certificate.as_ref()
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    pub fn n_noise_modes(&self) -> usize {
        self.noise_slots.len()
    }
    /// True when σ vanishes on every mode.
    pub fn is_noise_free(&self) -> bool {
        self.config.sigma.iter().all(|s| *s == 0.0)
    }

    pub fn report(&self) -> ModelReport<'_> {
        ModelReport {
            config: &self.config,
            constants: &self.constants,
            mode_bound: &self.mode_bound,
            alpha_certificate: &self.alpha_certificate,
            grid: (self.ctx.grid().n_lon(), self.ctx.grid().n_lat()),
            forcing_norm: self.forcing.h_norm(),
            warnings: &self.warnings,
        }
    }

    pub fn ledger_constants(&self) -> LedgerConstants {
        LedgerConstants {
            lambda1: self.constants.lambda1,
            delta: self.constants.delta,
            c: self.constants.c,
            alpha: self.constants.alpha,
            viscosity: self.config.viscosity,
            f_sq: self.forcing.h_norm_sq(),
        }
    }

    /// `Σ_l z_l e_l` as a spectral field.
    pub fn noise_field(&self, z: &[C64]) -> SpectralField {
        let mut f = SpectralField::zeros(*self.trunc());
        self.add_noise_field(&mut f, z, 1.0);
        f
    }

    /// `field += w Σ_l z_l e_l`.
    pub fn add_noise_field(&self, field: &mut SpectralField, z: &[C64], w: f64) {
        for (&(i, unit), &v) in self.noise_slots.iter().zip(z) {
            field.coeffs_mut()[i] += v * (unit * w);
        }
    }

    /// Burn-in length rounded up to whole steps.
    pub fn burn_steps(&self) -> i64 {
        (self.ou.burn_window() / self.dt()).ceil() as i64 + 1
    }

    /// Noise path for `seed` covering `[t_lo - burn-in, t_hi]`.
    pub fn make_path(&self, seed: u64, t_lo: f64, t_hi: f64) -> Result<NoisePath> {
        let dt = self.dt();
        let k_lo = crate::stable_noise::grid_index(t_lo, dt, "t_lo")? - self.burn_steps();
        let k_hi = crate::stable_noise::grid_index(t_hi, dt, "t_hi")?;
        make_two_sided_path(&self.ou.path_params(), dt, k_lo as f64 * dt, k_hi as f64 * dt, seed)
    }
}

/// Smallest `c` closing the Young splits `2|f||v| ≤ ε_f|v|² + |f|²/ε_f` and
/// `2α|z||v| ≤ ε_z|v|² + α²|z|²/ε_z` inside the budget `ε_f + ε_z ≤ budget`.
fn auto_c(budget: f64, forced: bool, alpha: f64) -> f64 {
    match (forced, alpha > 0.0) {
        (true, true) => 1.0f64.max(alpha) / budget,
        (true, false) => 1.0 / (2.0 * budget),
        (false, true) => alpha / (2.0 * budget),
        (false, false) => 0.0,
    }
}
