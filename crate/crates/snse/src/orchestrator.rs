//! Experiment pipelines behind the command line, with artifact and manifest
//! emission and the exit-code contract.
//!
//! Every command writes `report.json` plus its CSV/JSON artifacts into the
//! output directory, then `manifest.json`. Only the manifest carries wall-clock
//! fields; all other artifacts are bit-identical across reruns and thread
//! counts.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::Serialize;

use crate::attractor_lab::{
    absorbing_radii, check_absorption, fit_decay_rate, omega_limit_estimate, pullback_ensemble, sample_ball,
    AbsorbingRadii, AbsorptionCheck,
};
use crate::config::{Command, Config, Validated};
use crate::flow_map::{initial_v, run_with_ledger, verify_cocycle, BlowUp, VLedgerCheck};
use crate::invariant_measure::{
    chapman_kolmogorov_check, feller_probe, invariance_check, pullback_measure, CkBudget, CkReport, FellerReport,
    InitSampler, InvarianceRow, Observable,
};
use crate::io::{create, write_json_file, write_ou_trace_csv, write_snapshot, write_spectral_csv};
use crate::model::{Model, ModelReport};
use crate::ou_process::{
    alpha_certificate, check_growth, ergodic_abs_sum, estimate_abs_moment, gamma_p_q, ou_step, stationary_state,
    AlphaCertificate, GrowthReport, MomentEstimate,
};
use crate::seeding::{derive_seed, tag};
use crate::spherical_spectral::SpectralField;
use crate::stable_noise::{csv_err, fmt_f64};
use crate::{Error, Result};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O or internal failure.
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 3;
    /// More than half of an ensemble blew up.
    pub const BLOW_UP: i32 = 4;
    /// A Gronwall, absorption, cocycle or certificate check failed.
    pub const VERIFICATION: i32 = 5;
    /// The Hausdorff trace did not reach the tolerance.
    pub const NOT_CONVERGED: i32 = 6;
}

/// Command-line level options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub out: PathBuf,
    /// Overrides `model.seed`.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub artifacts: Vec<String>,
}

/// Seeds derived from the base seed, one per purpose.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub path: u64,
    pub init: u64,
    pub probe: u64,
    pub moment: u64,
}

impl Seeds {
    pub fn new(base: u64) -> Seeds {
        Seeds {
            base,
            path: derive_seed(base, tag::PATH, 0),
            init: derive_seed(base, tag::INIT, 0),
            probe: derive_seed(base, tag::PROBE, 0),
            moment: derive_seed(base, tag::MOMENT, 1),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    exit_code: i32,
    summary: &'a str,
    config: &'a Config,
    warnings: &'a [String],
    versions: Versions,
    seeds: Seeds,
    threads: usize,
    started_unix: f64,
    finished_unix: f64,
    elapsed_seconds: f64,
    artifacts: &'a [String],
}

#[derive(Serialize)]
struct Versions {
    snse: &'static str,
    snapshot_format: u32,
    path_format: u32,
}

struct Done {
    code: i32,
    summary: String,
}

/// Output directory plus the list of files written into it.
struct Sink {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Sink {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json_file(&p, value)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Map an error to its exit code.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::NoSolution(_) => exit::CONFIG,
        Error::BlowUp { .. } => exit::BLOW_UP,
        _ => exit::FAILURE,
    }
}

/// Parse, validate and run; every failure becomes an exit code.
pub fn run_from_str(raw: &str, opts: &RunOptions) -> RunOutcome {
    match crate::config::validate_config(raw) {
        Ok(v) => run(v, opts),
        Err(e) => RunOutcome { exit_code: exit_code_for(&e), summary: e.to_string(), artifacts: vec![] },
    }
}

/// Run a validated configuration.
pub fn run(validated: Validated, opts: &RunOptions) -> RunOutcome {
    let exec = || run_inner(validated, opts);
    let result = match opts.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(exec),
            Err(e) => Err((Error::param(format!("thread pool: {e}")), vec![])),
        },
        None => exec(),
    };
    result.unwrap_or_else(|(e, artifacts)| RunOutcome { exit_code: exit_code_for(&e), summary: e.to_string(), artifacts })
}

fn run_inner(validated: Validated, opts: &RunOptions) -> std::result::Result<RunOutcome, (Error, Vec<String>)> {
    let started = unix_now();
    let clock = Instant::now();
    let mut config = validated.config;
    if let Some(s) = opts.seed {
        config.model.seed = s;
    }
    config.experiment.command = Some(opts.command);
    std::fs::create_dir_all(&opts.out).map_err(|e| {
        (Error::Config(vec![format!("output directory {}: {e}", opts.out.display())]), vec![])
    })?;
    let mut sink = Sink { dir: opts.out.clone(), artifacts: vec![] };
    let seeds = Seeds::new(config.model.seed);
    info!("{}: resolving model (l_max = {})", opts.command.name(), config.model.l_max);
    let outcome = Model::from_config(&config.model).and_then(|model| {
        let mut warnings = validated.warnings.clone();
        for w in model.warnings() {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        let done = dispatch(opts.command, &config, &model, &seeds, &mut sink)?;
        Ok((done, warnings))
    });
    let (done, warnings) = match outcome {
        Ok(x) => x,
        Err(e) => (Done { code: exit_code_for(&e), summary: e.to_string() }, validated.warnings),
    };
    let mut artifacts = sink.artifacts.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        command: opts.command.name(),
        exit_code: done.code,
        summary: &done.summary,
        config: &config,
        warnings: &warnings,
        versions: Versions { snse: env!("CARGO_PKG_VERSION"), snapshot_format: 1, path_format: 1 },
        seeds,
        threads: rayon::current_num_threads(),
        started_unix: started,
        finished_unix: unix_now(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        artifacts: &artifacts,
    };
    write_json_file(&opts.out.join("manifest.json"), &manifest).map_err(|e| (e, artifacts.clone()))?;
    Ok(RunOutcome { exit_code: done.code, summary: done.summary, artifacts })
}

fn dispatch(cmd: Command, cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    match cmd {
        Command::Simulate => simulate(cfg, model, seeds, sink),
        Command::Pullback => pullback_cmd(cfg, model, seeds, sink, false),
        Command::Attractor => pullback_cmd(cfg, model, seeds, sink, true),
        Command::OuStats => ou_stats(cfg, model, seeds, sink),
        Command::Verify => verify(cfg, model, seeds, sink),
        Command::Measure => measure(cfg, model, seeds, sink),
        Command::Cocycle => cocycle(cfg, model, seeds, sink),
    }
}

fn blow_up_dominated(blown: usize, total: usize) -> bool {
    2 * blown > total
}

fn init_state(model: &Model, radius: f64, seed: u64, i: usize) -> SpectralField {
    if radius > 0.0 {
        InitSampler::Sphere { radius, seed }.sample(model, i)
    } else {
        SpectralField::zeros(*model.trunc())
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    model: ModelReport<'a>,
    t_start: f64,
    t_end: f64,
    steps: usize,
    violations: usize,
    v_ledger: Option<VLedgerCheck>,
    blow_up: Option<BlowUp>,
    final_energy: f64,
    final_enstrophy: f64,
    snapshots: Vec<f64>,
}

fn simulate(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    let s = &cfg.experiment.simulate;
    let path = model.make_path(seeds.path, s.t_start, s.t_end)?;
    let u0 = init_state(model, s.init_radius, seeds.init, 0);
    let v0 = initial_v(&path, model, s.t_start, &u0)?;
    let run = run_with_ledger(s.t_start, s.t_end, &path, &v0, model, &s.snapshot_times)?;
    run.ledger.write_csv(create(&sink.path("trajectory.csv"))?)?;
    for (k, (t, u)) in run.snapshots.iter().enumerate() {
        write_snapshot(create(&sink.path(&format!("snapshot_{k:03}.json")))?, u, *t, "simulate")?;
    }
    if let Some(u) = &run.u_end {
        write_spectral_csv(create(&sink.path("final_spectrum.csv"))?, u)?;
    }
    let last = run.ledger.rows.last().copied().expect("ledger has its first row");
    let v_ledger = match &run.blow_up {
        None => Some(run.ledger.v_ledger_check(s.t_start, s.t_end)?),
        Some(_) => None,
    };
    let report = SimulateReport {
        model: model.report(),
        t_start: s.t_start,
        t_end: s.t_end,
        steps: run.ledger.rows.len() - 1,
        violations: run.ledger.violations(),
        v_ledger,
        blow_up: run.blow_up.clone(),
        final_energy: last.energy,
        final_enstrophy: last.enstrophy,
        snapshots: run.snapshots.iter().map(|s| s.0).collect(),
    };
    sink.json("report.json", &report)?;
    let v_ok = v_ledger.is_none_or(|c| c.holds);
    let (code, summary) = if let Some(b) = &run.blow_up {
        (exit::BLOW_UP, format!("blow-up at t = {}: {}", b.t, b.reason))
    } else if report.violations > 0 || !v_ok {
        (exit::VERIFICATION, format!("{} ledger violations, V check holds: {v_ok}", report.violations))
    } else {
        (exit::OK, format!("simulated {} steps, 0 ledger violations, final energy {:.6e}", report.steps, last.energy))
    };
    Ok(Done { code, summary })
}

#[derive(Serialize)]
struct CloudSummary {
    t0: f64,
    members: usize,
    blow_ups: usize,
}

#[derive(Serialize)]
struct MemberAbsorption {
    member: usize,
    violations: usize,
    v_ledger_holds: bool,
    absorption: Option<AbsorptionCheck>,
    blow_up: Option<BlowUp>,
}

#[derive(Serialize)]
struct PullbackReport<'a> {
    model: ModelReport<'a>,
    schedule: Vec<f64>,
    ball_radius: f64,
    clouds: Vec<CloudSummary>,
    hausdorff_trace: Vec<f64>,
    fitted_rate: Option<f64>,
    omega_limit_t0: f64,
    final_trace: f64,
    tol: f64,
    converged: bool,
    radii: Option<AbsorbingRadii>,
    absorption: Vec<MemberAbsorption>,
}

fn pullback_cmd(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink, attractor: bool) -> Result<Done> {
    let p = &cfg.experiment.pullback;
    let t_first = p.t0_schedule.iter().cloned().fold(-1.0, f64::min);
    let path = model.make_path(seeds.path, t_first, 0.0)?;
    let ball = sample_ball(*model.trunc(), p.ball_radius, p.ball_samples, seeds.init);
    info!("pullback ensemble: {} start times x {} members", p.t0_schedule.len(), ball.len());
    let est = pullback_ensemble(&path, model, &p.t0_schedule, &ball)?;
    let lim = omega_limit_estimate(&est, p.tol * p.ball_radius.max(f64::MIN_POSITIVE));
    {
        let mut w = csv::Writer::from_writer(create(&sink.path("cloud_norms.csv"))?);
        w.write_record(["t0", "member", "h_norm", "v_norm"]).map_err(csv_err)?;
        for c in &est.clouds {
            for (i, u) in c.members.iter().enumerate() {
                w.write_record([fmt_f64(c.t0), i.to_string(), fmt_f64(u.h_norm()), fmt_f64(u.v_norm())])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    for (k, u) in lim.cloud.iter().enumerate() {
        write_snapshot(create(&sink.path(&format!("omega_limit_{k:03}.json")))?, u, 0.0, "omega-limit")?;
    }
    let mut radii = None;
    let mut absorption = Vec::new();
    if attractor {
        let r = absorbing_radii(&path, model, t_first)?;
        use rayon::prelude::*;
        absorption = ball
            .par_iter()
            .enumerate()
            .map(|(i, x)| -> Result<MemberAbsorption> {
                let v0 = initial_v(&path, model, t_first, x)?;
                let run = run_with_ledger(t_first, 0.0, &path, &v0, model, &[])?;
                let check = match &run.u_end {
                    Some(u) => Some(check_absorption(&r, run.v_sq_at(-1.0)?, u.v_norm_sq())),
                    None => None,
                };
                let v_ok = match run.blow_up {
                    None => run.ledger.v_ledger_check(-1.0, 0.0)?.holds,
                    Some(_) => true,
                };
                Ok(MemberAbsorption {
                    member: i,
                    violations: run.ledger.violations(),
                    v_ledger_holds: v_ok,
                    absorption: check,
                    blow_up: run.blow_up,
                })
            })
            .collect::<Result<_>>()?;
        radii = Some(r);
    }
    let report = PullbackReport {
        model: model.report(),
        schedule: est.schedule.clone(),
        ball_radius: p.ball_radius,
        clouds: est
            .clouds
            .iter()
            .map(|c| CloudSummary { t0: c.t0, members: c.members.len(), blow_ups: c.blow_ups })
            .collect(),
        hausdorff_trace: est.hausdorff_trace.clone(),
        fitted_rate: fit_decay_rate(&est.schedule, &est.hausdorff_trace),
        omega_limit_t0: lim.t0,
        final_trace: lim.final_trace,
        tol: p.tol,
        converged: lim.converged,
        radii,
        absorption,
    };
    sink.json("report.json", &report)?;
    let failed_checks = report
        .absorption
        .iter()
        .filter(|a| {
            a.violations > 0 || !a.v_ledger_holds || a.absorption.is_some_and(|c| !(c.in_h_ball && c.in_v_ball))
        })
        .count();
    let (code, summary) = if blow_up_dominated(est.blow_ups(), est.members()) {
        (exit::BLOW_UP, format!("{} of {} pullback members blew up", est.blow_ups(), est.members()))
    } else if failed_checks > 0 {
        (exit::VERIFICATION, format!("{failed_checks} members fail the ledger or absorption checks"))
    } else if !lim.converged {
        (exit::NOT_CONVERGED, format!("final Hausdorff trace {:.3e} above {:.3e}", lim.final_trace, p.tol * p.ball_radius))
    } else {
        (exit::OK, format!("Hausdorff trace converged to {:.3e}", lim.final_trace))
    };
    Ok(Done { code, summary })
}

#[derive(Serialize)]
struct OuStatsReport<'a> {
    model: ModelReport<'a>,
    horizon: f64,
    growth: GrowthReport,
    moments: Option<Vec<MomentEstimate>>,
    /// `4δ` times the time average of `Σ|z_l|`.
    ergodic_gamma_term: MomentEstimate,
    /// `4δ Σ_l Ê|z_l(0)|`.
    ensemble_gamma_term: Option<f64>,
    ensemble_gamma_stderr: Option<f64>,
    ergodic_agrees: Option<bool>,
    fresh_certificate: Option<AlphaCertificate>,
}

fn ou_stats(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    let o = &cfg.experiment.ou_stats;
    let spec = model.ou();
    let path = model.make_path(seeds.path, 0.0, o.horizon)?;
    let k = model.ledger_constants();
    let h = model.dt();
    let end = path.checked_index(o.horizon)?;
    let mut s = stationary_state(&path, spec, 0.0)?;
    let mut rows = vec![(s.clone(), gamma_p_q(&s.values, &k))];
    let mut inc = vec![0.0; spec.n_modes()];
    while s.index < end {
        for (l, x) in inc.iter_mut().enumerate() {
            *x = path.increment(l, s.index);
        }
        s = ou_step(&s, spec, h, &inc);
        if s.index % o.trace_every as i64 == 0 {
            rows.push((s.clone(), gamma_p_q(&s.values, &k)));
        }
    }
    let zonal: Vec<bool> = spec.modes().iter().map(|m| m.1 == 0).collect();
    write_ou_trace_csv(create(&sink.path("ou_trace.csv"))?, &zonal, &rows)?;
    let kappa = o.kappa.unwrap_or(2.0 / spec.beta());
    let growth = check_growth(&path, spec, kappa, o.horizon)?;
    let delta = model.constants().delta;
    let erg = ergodic_abs_sum(&path, spec, o.horizon, 20)?;
    let ergodic = MomentEstimate { mean: 4.0 * delta * erg.mean, stderr: 4.0 * delta * erg.stderr, n: erg.n };
    let moments = (0..spec.n_modes())
        .map(|l| estimate_abs_moment(spec, l, h, o.moment_paths, seeds.moment))
        .collect::<Result<Vec<_>>>();
    let moments = match moments {
        Ok(m) => Some(m),
        Err(Error::MomentInfinite(_)) => None,
        Err(e) => return Err(e),
    };
    let ens = moments.as_ref().map(|m| 4.0 * delta * m.iter().map(|x| x.mean).sum::<f64>());
    let ens_se = moments.as_ref().map(|m| 4.0 * delta * m.iter().map(|x| x.stderr * x.stderr).sum::<f64>().sqrt());
    let agrees = ens.zip(ens_se).map(|(e, se)| (ergodic.mean - e).abs() <= 3.0 * se.hypot(ergodic.stderr));
    let fresh = match (model.alpha_certificate(), moments.is_some()) {
        (Some(c), true) => Some(alpha_certificate(
            spec,
            c.delta,
            c.lambda1,
            h,
            cfg.model.alpha_search.n_paths,
            derive_seed(seeds.moment, tag::MOMENT, 2),
        )?),
        _ => None,
    };
    let report = OuStatsReport {
        model: model.report(),
        horizon: o.horizon,
        growth,
        moments,
        ergodic_gamma_term: ergodic,
        ensemble_gamma_term: ens,
        ensemble_gamma_stderr: ens_se,
        ergodic_agrees: agrees,
        fresh_certificate: fresh.clone(),
    };
    sink.json("report.json", &report)?;
    let (code, summary) = if fresh.as_ref().is_some_and(|c| !c.holds()) {
        (exit::VERIFICATION, "alpha certificate fails on a fresh seed".to_string())
    } else {
        (
            exit::OK,
            format!(
                "sup |z|_X/(1+t^{kappa:.3}) = {:.4e}, 4 delta <sum |z_l|> = {:.4e} +- {:.1e}",
                growth.sup_ratio, ergodic.mean, ergodic.stderr
            ),
        )
    };
    Ok(Done { code, summary })
}

#[derive(Serialize)]
struct VerifyMember {
    member: usize,
    path_seed: u64,
    violations: usize,
    v_ledger: Option<VLedgerCheck>,
    radii: AbsorbingRadii,
    absorption: Option<AbsorptionCheck>,
    blow_up: Option<BlowUp>,
}

impl VerifyMember {
    fn ok(&self) -> bool {
        self.blow_up.is_some()
            || (self.violations == 0
                && self.v_ledger.is_some_and(|c| c.holds)
                && self.absorption.is_some_and(|a| a.in_h_ball && a.in_v_ball))
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    model: ModelReport<'a>,
    t_start: f64,
    members: Vec<VerifyMember>,
    total_violations: usize,
    failed_members: usize,
    blow_ups: usize,
}

/// Ledger and absorption checks for one member on its own noise path.
fn verify_member(model: &Model, t_start: f64, radius: f64, seeds: &Seeds, i: usize) -> Result<VerifyMember> {
    let path_seed = derive_seed(seeds.base, tag::PATH, i as u64);
    let path = model.make_path(path_seed, t_start, 0.0)?;
    let x = init_state(model, radius, seeds.init, i);
    let v0 = initial_v(&path, model, t_start, &x)?;
    let run = run_with_ledger(t_start, 0.0, &path, &v0, model, &[])?;
    let radii = absorbing_radii(&path, model, t_start)?;
    let (v_ledger, absorption) = match &run.u_end {
        Some(u) => (
            Some(run.ledger.v_ledger_check(-1.0, 0.0)?),
            Some(check_absorption(&radii, run.v_sq_at(-1.0)?, u.v_norm_sq())),
        ),
        None => (None, None),
    };
    Ok(VerifyMember {
        member: i,
        path_seed,
        violations: run.ledger.violations(),
        v_ledger,
        radii,
        absorption,
        blow_up: run.blow_up,
    })
}

fn verify(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    use rayon::prelude::*;
    let v = &cfg.experiment.verify;
    info!("verify: {} members over [{}, 0]", v.members, v.t_start);
    let members: Vec<VerifyMember> = (0..v.members)
        .into_par_iter()
        .map(|i| verify_member(model, v.t_start, v.ball_radius, seeds, i))
        .collect::<Result<_>>()?;
    {
        let mut w = csv::Writer::from_writer(create(&sink.path("verify_members.csv"))?);
        w.write_record([
            "member", "path_seed", "violations", "v_m1_sq", "r1_sq", "u0_v_sq", "ln_r2_sq", "in_h_ball", "in_v_ball",
            "v_ledger_holds", "blow_up",
        ])
        .map_err(csv_err)?;
        for m in &members {
            let a = m.absorption;
            let num = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
            let flag = |x: Option<bool>| x.map(|b| (b as u8).to_string()).unwrap_or_default();
            w.write_record([
                m.member.to_string(),
                m.path_seed.to_string(),
                m.violations.to_string(),
                num(a.map(|a| a.v_m1_sq)),
                fmt_f64(m.radii.r1_sq),
                num(a.map(|a| a.u0_v_sq)),
                fmt_f64(m.radii.ln_r2_sq),
                flag(a.map(|a| a.in_h_ball)),
                flag(a.map(|a| a.in_v_ball)),
                flag(m.v_ledger.map(|c| c.holds)),
                ((m.blow_up.is_some()) as u8).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    let report = VerifyReport {
        model: model.report(),
        t_start: v.t_start,
        total_violations: members.iter().map(|m| m.violations).sum(),
        failed_members: members.iter().filter(|m| !m.ok()).count(),
        blow_ups: members.iter().filter(|m| m.blow_up.is_some()).count(),
        members,
    };
    sink.json("report.json", &report)?;
    let (code, summary) = if blow_up_dominated(report.blow_ups, v.members) {
        (exit::BLOW_UP, format!("{} of {} members blew up", report.blow_ups, v.members))
    } else if report.failed_members > 0 {
        (
            exit::VERIFICATION,
            format!("{} members fail ({} violated ledger rows)", report.failed_members, report.total_violations),
        )
    } else {
        (exit::OK, format!("{} members, 0 violations, all absorbed", v.members))
    };
    Ok(Done { code, summary })
}

#[derive(Serialize)]
struct ObservableRow {
    observable: String,
    definition: Observable,
    estimate: MomentEstimate,
}

#[derive(Serialize)]
struct MeasureReport<'a> {
    model: ModelReport<'a>,
    t_big: f64,
    samples: usize,
    blow_ups: usize,
    observables: Vec<ObservableRow>,
    invariance: Vec<InvarianceRow>,
    chapman_kolmogorov: CkReport,
    feller: FellerReport,
}

fn measure(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    let m = &cfg.experiment.measure;
    let init = InitSampler::Sphere { radius: m.ball_radius, seed: seeds.init };
    let path_seeds: Vec<u64> = (0..m.n_seeds as u64).map(|i| derive_seed(seeds.base, tag::PATH, i)).collect();
    info!("measure: {} pullback samples at t = {}", m.n_seeds, m.t_big);
    let mu = pullback_measure(model, &path_seeds, m.t_big, &init)?;
    if blow_up_dominated(mu.blow_ups, m.n_seeds) || mu.support.len() < 2 {
        return Ok(Done { code: exit::BLOW_UP, summary: format!("{} of {} samples blew up", mu.blow_ups, m.n_seeds) });
    }
    mu.write_norms_csv(create(&sink.path("measure_support.csv"))?)?;
    let dict = Observable::dictionary();
    let observables = dict
        .iter()
        .map(|f| Ok(ObservableRow { observable: f.name(), definition: *f, estimate: mu.estimate(f)? }))
        .collect::<Result<Vec<_>>>()?;
    let invariance = invariance_check(model, &mu, &dict, &m.invariance_s, derive_seed(seeds.probe, tag::PROBE, 1))?;
    let x = init.sample(model, 0);
    let f = Observable::ExpEnergy;
    let ck = chapman_kolmogorov_check(
        model,
        &f,
        m.ck_t,
        m.ck_s,
        &x,
        CkBudget { lhs: m.ck_lhs, outer: m.ck_outer, inner: m.ck_inner },
        derive_seed(seeds.probe, tag::PROBE, 2),
    )?;
    let direction = InitSampler::Sphere { radius: 1.0, seed: seeds.probe }.sample(model, 0);
    let feller = feller_probe(
        model,
        &f,
        m.feller_t,
        &x,
        &direction,
        &m.feller_eps,
        m.feller_samples,
        derive_seed(seeds.probe, tag::PROBE, 3),
    )?;
    let inv_ok = invariance.iter().all(|r| r.pass);
    let summary = format!(
        "invariance {}, Chapman-Kolmogorov {}, Feller monotone {}",
        if inv_ok { "passes" } else { "fails" },
        if ck.pass { "passes" } else { "fails" },
        feller.monotone
    );
    let report = MeasureReport {
        model: model.report(),
        t_big: m.t_big,
        samples: mu.support.len(),
        blow_ups: mu.blow_ups,
        observables,
        invariance,
        chapman_kolmogorov: ck,
        feller,
    };
    sink.json("report.json", &report)?;
    Ok(Done { code: exit::OK, summary })
}

#[derive(Serialize)]
struct CocycleReport<'a> {
    model: ModelReport<'a>,
    t: f64,
    s: f64,
    residuals: Vec<f64>,
    max_residual: f64,
    tolerance: f64,
}

fn cocycle(cfg: &Config, model: &Model, seeds: &Seeds, sink: &mut Sink) -> Result<Done> {
    use rayon::prelude::*;
    let c = &cfg.experiment.cocycle;
    let residuals: Vec<f64> = (0..c.pairs)
        .into_par_iter()
        .map(|i| {
            let path = model.make_path(derive_seed(seeds.base, tag::PATH, i as u64), 0.0, c.t + c.s)?;
            let x = init_state(model, c.init_radius, seeds.init, i);
            verify_cocycle(c.t, c.s, &path, &x, model)
        })
        .collect::<Result<_>>()?;
    {
        let mut w = csv::Writer::from_writer(create(&sink.path("cocycle.csv"))?);
        w.write_record(["pair", "residual"]).map_err(csv_err)?;
        for (i, r) in residuals.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(*r)]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    sink.json(
        "report.json",
        &CocycleReport { model: model.report(), t: c.t, s: c.s, residuals, max_residual: max, tolerance: c.tolerance },
    )?;
    let code = if max <= c.tolerance { exit::OK } else { exit::VERIFICATION };
    Ok(Done { code, summary: format!("max cocycle residual {max:.3e} (tolerance {:.1e})", c.tolerance) })
}

/// Default configuration as pretty JSON, for `--print-config` style use.
pub fn default_config_json() -> String {
    serde_json::to_string_pretty(&Config::default()).expect("config serializes")
}

/// True if `dir` holds a manifest with exit code 0.
pub fn manifest_ok(dir: &Path) -> Result<bool> {
    let raw = std::fs::read_to_string(dir.join("manifest.json"))?;
    let v: serde_json::Value = serde_json::from_str(&raw).map_err(|e| Error::Format(e.to_string()))?;
    Ok(v.get("exit_code").and_then(|c| c.as_i64()) == Some(0))
}
