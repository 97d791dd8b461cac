//! Invariant-measure estimation: pullback clouds for `μ_ω` and `ρ = E μ_ω`,
//! Birkhoff time averages, Monte Carlo transition estimates `P_t f(x)`, and
//! Feller, Chapman–Kolmogorov and invariance probes.
//!
//! Every sample draws its own noise path from `(base seed, sample index)`, so
//! results do not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow_map::{phi, pullback, step_v};
use crate::model::Model;
use crate::ou_process::{ou_step, stationary_state, MomentEstimate};
use crate::seeding::{derive_seed, positioned_rng, tag};
use crate::spherical_spectral::SpectralField;
use crate::stable_noise::{csv_err, fmt_f64};
use crate::{Error, Result};

/// Scalar functionals of the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `exp(-|u|²)`.
    ExpEnergy,
    /// `exp(-|u|_V² / scale)`.
    ExpEnstrophy { scale: f64 },
    /// Logistic indicator of `|u_{l,m}| > level` with transition width `width`.
    ModeSigmoid { l: usize, m: usize, level: f64, width: f64 },
    /// `f ≡ 1`.
    One,
    /// `|u|^p`; unbounded, a diagnostic for `p < β` only.
    HNormPower { p: f64 },
    /// `|u_{l,m}|`; unbounded.
    ModeAmplitude { l: usize, m: usize },
}

impl Observable {
    /// The bounded test dictionary.
    pub fn dictionary() -> Vec<Observable> {
        vec![
            Observable::ExpEnergy,
            Observable::ExpEnstrophy { scale: 10.0 },
            Observable::ModeSigmoid { l: 2, m: 0, level: 0.1, width: 0.1 },
        ]
    }

    pub fn eval(&self, u: &SpectralField) -> f64 {
        match *self {
            Observable::ExpEnergy => (-u.h_norm_sq()).exp(),
            Observable::ExpEnstrophy { scale } => (-u.v_norm_sq() / scale).exp(),
            Observable::ModeSigmoid { l, m, level, width } => {
                let a = u.get(l, m as i64).norm();
                1.0 / (1.0 + (-(a - level) / width).exp())
            }
            Observable::One => 1.0,
            Observable::HNormPower { p } => u.h_norm().powf(p),
            Observable::ModeAmplitude { l, m } => u.get(l, m as i64).norm(),
        }
    }

    /// `(inf f, sup f)` for bounded observables.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Observable::ExpEnergy | Observable::ExpEnstrophy { .. } | Observable::ModeSigmoid { .. } => {
                Some((0.0, 1.0))
            }
            Observable::One => Some((1.0, 1.0)),
            _ => None,
        }
    }

    /// Lipschitz constant in H where one is known.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Observable::ExpEnergy => Some(2f64.sqrt() * (-0.5f64).exp()),
            Observable::ModeSigmoid { width, .. } => Some(0.25 / width),
            Observable::One => Some(0.0),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Observable::ExpEnergy => "exp_energy".into(),
            Observable::ExpEnstrophy { scale } => format!("exp_enstrophy_{scale}"),
            Observable::ModeSigmoid { l, m, .. } => format!("mode_sigmoid_{l}_{m}"),
            Observable::One => "one".into(),
            Observable::HNormPower { p } => format!("h_norm_pow_{p}"),
            Observable::ModeAmplitude { l, m } => format!("mode_amp_{l}_{m}"),
        }
    }
}

/// Uniformly weighted sample cloud.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    pub support: Vec<SpectralField>,
    /// Members lost to blow-up (excluded from the support).
    pub blow_ups: usize,
}

impl EmpiricalMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.support.len() as f64
    }

    /// `∫ f dμ̂` with its standard error.
    pub fn estimate(&self, f: &Observable) -> Result<MomentEstimate> {
        if self.support.is_empty() {
            return Err(Error::param("empty measure support"));
        }
        let xs: Vec<f64> = self.support.iter().map(|u| f.eval(u)).collect();
        Ok(MomentEstimate::from_samples(&xs))
    }

    /// CSV of support norms: `index,h_norm,v_norm`.
    pub fn write_norms_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "h_norm", "v_norm"]).map_err(csv_err)?;
        for (i, u) in self.support.iter().enumerate() {
            out.write_record([i.to_string(), fmt_f64(u.h_norm()), fmt_f64(u.v_norm())]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Initial-condition law for pullback samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSampler {
    /// Uniform direction on the H-sphere of the given radius.
    Sphere { radius: f64, seed: u64 },
    /// Random field with `|u_l| ~ l^{-slope}`, rescaled to H-norm `radius`.
    Spectral { radius: f64, slope: f64, seed: u64 },
    /// The zero state.
    Zero,
}

impl InitSampler {
    pub fn sample(&self, model: &Model, i: usize) -> SpectralField {
        let trunc = *model.trunc();
        match *self {
            InitSampler::Sphere { radius, seed } => {
                let mut rng = positioned_rng(derive_seed(seed, tag::INIT, i as u64), 0, 0);
                SpectralField::on_sphere(trunc, radius, &mut rng)
            }
            InitSampler::Spectral { radius, slope, seed } => {
                let mut rng = positioned_rng(derive_seed(seed, tag::INIT, i as u64), 1, 0);
                let u = SpectralField::random(trunc, slope, &mut rng);
                let n = u.h_norm();
                if n > 0.0 {
                    u.scaled(radius / n)
                } else {
                    u
                }
            }
            InitSampler::Zero => SpectralField::zeros(trunc),
        }
    }
}

fn collect_measure(results: Vec<Result<Option<SpectralField>>>) -> Result<EmpiricalMeasure> {
    let mut support = Vec::with_capacity(results.len());
    let mut blow_ups = 0;
    for r in results {
        match r? {
            Some(u) => support.push(u),
            None => blow_ups += 1,
        }
    }
    Ok(EmpiricalMeasure { support, blow_ups })
}

fn keep_blow_up(r: Result<SpectralField>) -> Result<Option<SpectralField>> {
    match r {
        Ok(u) => Ok(Some(u)),
        Err(Error::BlowUp { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One sample `φ(t_big, θ_{-t_big} ω_i) x_i` per path seed; estimates `ρ`.
pub fn pullback_measure(
    model: &Model,
    path_seeds: &[u64],
    t_big: f64,
    init: &InitSampler,
) -> Result<EmpiricalMeasure> {
    if path_seeds.is_empty() {
        return Err(Error::param("no path seeds"));
    }
    let results = path_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let path = model.make_path(seed, -t_big, 0.0)?;
            keep_blow_up(pullback(&path, model, -t_big, &init.sample(model, i)))
        })
        .collect();
    collect_measure(results)
}

/// `n_init` samples on the single path `path_seed`, varying only `x`; estimates `μ_ω`.
pub fn per_omega_measure(
    model: &Model,
    path_seed: u64,
    t_big: f64,
    init: &InitSampler,
    n_init: usize,
) -> Result<EmpiricalMeasure> {
    if n_init == 0 {
        return Err(Error::param("no initial conditions"));
    }
    let path = model.make_path(path_seed, -t_big, 0.0)?;
    let results =
        (0..n_init).into_par_iter().map(|i| keep_blow_up(pullback(&path, model, -t_big, &init.sample(model, i)))).collect();
    collect_measure(results)
}

/// Batch-means time averages along one forward run from rest.
///
/// The run spans `[0, t_burn + t_len]`; `u` is sampled every `every` steps
/// after the burn-in and the samples are split into `n_batches` contiguous
/// batches.
pub fn time_average(
    model: &Model,
    seed: u64,
    observables: &[Observable],
    t_burn: f64,
    t_len: f64,
    every: usize,
    n_batches: usize,
) -> Result<Vec<MomentEstimate>> {
    if n_batches < 2 || every == 0 {
        return Err(Error::param("time_average needs n_batches >= 2 and every >= 1"));
    }
    let path = model.make_path(seed, 0.0, t_burn + t_len)?;
    let h = model.dt();
    let k_burn = path.checked_index(t_burn)?;
    let k_end = path.checked_index(t_burn + t_len)?;
    let mut z = stationary_state(&path, model.ou(), 0.0)?;
    let mut v = SpectralField::zeros(*model.trunc());
    model.add_noise_field(&mut v, &z.values, -1.0);
    let mut inc = vec![0.0; model.n_noise_modes()];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); observables.len()];
    for k in 0..k_end {
        v = step_v(&v, &z, model)?;
        for (l, x) in inc.iter_mut().enumerate() {
            *x = path.increment(l, k);
        }
        z = ou_step(&z, model.ou(), h, &inc);
        let k1 = k + 1;
        if k1 > k_burn && (k1 - k_burn) % every as i64 == 0 {
            let mut u = v.clone();
            model.add_noise_field(&mut u, &z.values, 1.0);
            for (s, f) in samples.iter_mut().zip(observables) {
                s.push(f.eval(&u));
            }
        }
    }
    let n = samples.first().map_or(0, Vec::len);
    if n < n_batches {
        return Err(Error::param(format!("{n} samples cannot fill {n_batches} batches")));
    }
    let per = n / n_batches;
    Ok(samples
        .iter()
        .map(|s| {
            let means: Vec<f64> = s.chunks_exact(per).take(n_batches).map(|c| c.iter().sum::<f64>() / per as f64).collect();
            MomentEstimate::from_samples(&means)
        })
        .collect())
}

/// `f(φ(t, ω_i) x)` for `n` fresh paths derived from `seed`.
fn transition_samples(model: &Model, f: &Observable, t: f64, x: &SpectralField, n: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let path = model.make_path(derive_seed(seed, tag::PROBE, i as u64), 0.0, t)?;
            Ok(f.eval(&phi(t, &path, x, model)?))
        })
        .collect()
}

/// Monte Carlo `P_t f(x)`.
pub fn transition_estimate(
    model: &Model,
    f: &Observable,
    t: f64,
    x: &SpectralField,
    n_samples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if n_samples == 0 {
        return Err(Error::param("n_samples must be >= 1"));
    }
    Ok(MomentEstimate::from_samples(&transition_samples(model, f, t, x, n_samples, seed)?))
}

/// One ε of a Feller probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FellerRow {
    pub eps: f64,
    /// `P_t f(x + εd) - P_t f(x)` on common paths.
    pub diff: MomentEstimate,
    /// `E |f(φ(x + εd)) - f(φ(x))|`.
    pub abs_diff: f64,
}

/// Feller probe outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerReport {
    pub t: f64,
    pub rows: Vec<FellerRow>,
    /// `|diff|` never grows by more than 3 combined standard errors along the list.
    pub monotone: bool,
}

/// `|P_t f(x + εd) - P_t f(x)|` for each ε, with the same paths for both arguments.
#[allow(clippy::too_many_arguments)]
pub fn feller_probe(
    model: &Model,
    f: &Observable,
    t: f64,
    x: &SpectralField,
    direction: &SpectralField,
    eps_list: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<FellerReport> {
    let dn = direction.h_norm();
    if !(dn > 0.0) || n_samples < 2 {
        return Err(Error::param("feller_probe needs a nonzero direction and n_samples >= 2"));
    }
    if eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::param("eps_list must be decreasing"));
    }
    let per_path: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = model.make_path(derive_seed(seed, tag::PROBE, i as u64), 0.0, t)?;
            let base = f.eval(&phi(t, &path, x, model)?);
            eps_list
                .iter()
                .map(|&eps| {
                    let mut y = x.clone();
                    y.axpy(eps / dn, direction);
                    Ok(f.eval(&phi(t, &path, &y, model)?) - base)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<FellerRow> = eps_list
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let d: Vec<f64> = per_path.iter().map(|r| r[j]).collect();
            FellerRow {
                eps,
                diff: MomentEstimate::from_samples(&d),
                abs_diff: d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64,
            }
        })
        .collect();
    let monotone = rows.windows(2).all(|w| {
        let se = w[0].diff.stderr.hypot(w[1].diff.stderr);
        w[1].diff.mean.abs() <= w[0].diff.mean.abs() + 3.0 * se
    });
    Ok(FellerReport { t, rows, monotone })
}

/// Chapman–Kolmogorov comparison `P_{t+s} f(x)` vs `P_t(P_s f)(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CkReport {
    pub t: f64,
    pub s: f64,
    pub lhs: MomentEstimate,
    pub rhs: MomentEstimate,
    pub combined_stderr: f64,
    pub pass: bool,
}

/// Monte Carlo budgets of a Chapman–Kolmogorov check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CkBudget {
    pub lhs: usize,
    pub outer: usize,
    pub inner: usize,
}

/// `lhs` averages `f(φ(t+s)x)` over `budget.lhs` paths. `rhs` draws
/// `budget.outer` states `y_j = φ(s, ω_j)x` and averages `P_t f(y_j)`, each
/// estimated from `budget.inner` fresh paths; its standard error comes from the
/// spread of the outer means.
pub fn chapman_kolmogorov_check(
    model: &Model,
    f: &Observable,
    t: f64,
    s: f64,
    x: &SpectralField,
    budget: CkBudget,
    seed: u64,
) -> Result<CkReport> {
    if budget.lhs < 2 || budget.outer < 2 || budget.inner == 0 {
        return Err(Error::param("Chapman-Kolmogorov budgets are too small"));
    }
    let lhs = transition_estimate(model, f, t + s, x, budget.lhs, derive_seed(seed, tag::PROBE, 0))?;
    let outer_seed = derive_seed(seed, tag::PROBE, 1);
    let outer: Vec<f64> = (0..budget.outer)
        .into_par_iter()
        .map(|j| -> Result<f64> {
            let path = model.make_path(derive_seed(outer_seed, tag::PATH, j as u64), 0.0, s)?;
            let y = phi(s, &path, x, model)?;
            let inner = transition_samples(model, f, t, &y, budget.inner, derive_seed(outer_seed, tag::PROBE, j as u64))?;
            Ok(inner.iter().sum::<f64>() / inner.len() as f64)
        })
        .collect::<Result<_>>()?;
    let rhs = MomentEstimate::from_samples(&outer);
    let combined = lhs.stderr.hypot(rhs.stderr);
    Ok(CkReport { t, s, lhs, rhs, combined_stderr: combined, pass: (lhs.mean - rhs.mean).abs() <= 3.0 * combined })
}

/// Invariance row for one observable and one lag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceRow {
    pub observable: String,
    pub s: f64,
    /// `∫ f dμ̂`.
    pub base: MomentEstimate,
    /// `∫ P_s f dμ̂`, one fresh path per support point.
    pub pushed: MomentEstimate,
    /// Paired difference `pushed - base`.
    pub diff: MomentEstimate,
    pub pass: bool,
}

/// `|∫P_s f dμ̂ - ∫f dμ̂| ≤ 3 stderr` from paired differences over the support.
pub fn invariance_check(
    model: &Model,
    measure: &EmpiricalMeasure,
    observables: &[Observable],
    lags: &[f64],
    seed: u64,
) -> Result<Vec<InvarianceRow>> {
    if measure.support.is_empty() {
        return Err(Error::param("empty measure support"));
    }
    let mut rows = Vec::new();
    for (li, &s) in lags.iter().enumerate() {
        let lag_seed = derive_seed(seed, tag::PROBE, li as u64);
        let pushed: Vec<Option<SpectralField>> = measure
            .support
            .par_iter()
            .enumerate()
            .map(|(i, y)| {
                let path = model.make_path(derive_seed(lag_seed, tag::PATH, i as u64), 0.0, s)?;
                keep_blow_up(phi(s, &path, y, model))
            })
            .collect::<Result<_>>()?;
        for f in observables {
            let pairs: Vec<(f64, f64)> = measure
                .support
                .iter()
                .zip(&pushed)
                .filter_map(|(y, p)| p.as_ref().map(|p| (f.eval(y), f.eval(p))))
                .collect();
            if pairs.len() < 2 {
                return Err(Error::BlowUp { t: s, reason: "too few surviving support points".into() });
            }
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let d: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
            let diff = MomentEstimate::from_samples(&d);
            rows.push(InvarianceRow {
                observable: f.name(),
                s,
                base: MomentEstimate::from_samples(&a),
                pushed: MomentEstimate::from_samples(&b),
                diff,
                pass: diff.mean.abs() <= 3.0 * diff.stderr || diff.mean == 0.0,
            });
        }
    }
    Ok(rows)
}
