//! Acceptance criteria, one `PASS`/`FAIL` line each.
//!
//! Built without the libtest harness so the lines always reach the log.
//! Positional arguments filter criteria by name. The process fails when a
//! criterion outside [`KNOWN_FAILING`] fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use snse::attractor_lab::{fit_decay_rate, pullback_ensemble, sample_ball};
use snse::config::{Command, Config, ModelConfig};
use snse::fluid_operators::{apply_C, trilinear_b, OperatorContext};
use snse::flow_map::{run_with_ledger, verify_cocycle};
use snse::model::Model;
use snse::orchestrator::{exit, run_from_str, RunOptions, Seeds};
use snse::ou_process::{
    alpha_certificate, ergodic_abs_sum, estimate_abs_moment, ou_ibp_reconstruct, ou_propagate, stationary_state, OUState,
};
use snse::seeding::{derive_seed, positioned_rng, tag};
use snse::spherical_spectral::{SpectralField, Spectrum, Truncation};
use snse::stable_noise::{make_two_sided_path, sample_stable, StableParams};

/// Criteria whose failure is expected and documented in the README.
const KNOWN_FAILING: &[u32] = &[1];

type Res<T> = Result<T, Box<dyn std::error::Error>>;

struct Verdict {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget_s: f64,
    run: fn() -> Res<Verdict>,
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { id: 1, name: "stable_law_sampling", budget_s: 60.0, run: stable_law_sampling },
        Criterion { id: 2, name: "operator_identities", budget_s: 60.0, run: operator_identities },
        Criterion { id: 3, name: "inviscid_conservation", budget_s: 300.0, run: inviscid_conservation },
        Criterion { id: 4, name: "ou_process_suite", budget_s: 300.0, run: ou_process_suite },
        Criterion { id: 5, name: "cocycle_property", budget_s: 600.0, run: cocycle_property },
        Criterion { id: 6, name: "gronwall_and_absorption", budget_s: 1800.0, run: gronwall_and_absorption },
        Criterion { id: 7, name: "pullback_attractor", budget_s: 1800.0, run: pullback_attractor },
        Criterion { id: 8, name: "invariant_measure_suite", budget_s: 1800.0, run: invariant_measure_suite },
        Criterion { id: 9, name: "reproducibility", budget_s: 1800.0, run: reproducibility },
    ];
    let mut unexpected = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let clock = Instant::now();
        let outcome = (c.run)();
        let secs = clock.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && secs <= c.budget_s, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let known = !pass && KNOWN_FAILING.contains(&c.id);
        println!(
            "{} [{}] {} ({secs:.1} s of {:.0} s){}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.budget_s,
            if known { " [known]" } else { "" },
        );
        if !pass && !known {
            unexpected += 1;
        }
    }
    println!("acceptance: {ran} criteria run, {unexpected} unexpected failures");
    if unexpected > 0 {
        std::process::exit(1);
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn stokes(l_max: usize) -> Truncation {
    Truncation::new(l_max, 2, Spectrum::Stokes).expect("valid truncation")
}

fn median_abs(xs: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    a[a.len() / 2]
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn stable_law_sampling() -> Res<Verdict> {
    let n = 1_000_000;
    let g = sample_stable(&StableParams::symmetric(2.0, 1.0), n, 11)?;
    let mean = g.iter().sum::<f64>() / n as f64;
    let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let var_ok = (var / 2.0 - 1.0).abs() <= 0.02;

    let beta = 1.5;
    let x = sample_stable(&StableParams::symmetric(beta, 1.0), n, 12)?;
    let cf_err = [0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&th: &f64| {
            let emp = x.iter().map(|v| (th * v).cos()).sum::<f64>() / n as f64;
            (emp - (-th.powf(beta) / 2.0).exp()).abs()
        })
        .fold(0.0, f64::max);
    let cf_ok = cf_err <= 5e-3;

    let hs = [1e-3, 1e-2, 1e-1, 1.0];
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (i, &h) in hs.iter().enumerate() {
        let p = make_two_sided_path(&[StableParams::symmetric(beta, 1.0)], h, 0.0, 100_000.0 * h, 20 + i as u64)?;
        lx.push(h.ln());
        ly.push(median_abs(p.increments(0)).ln());
    }
    let slope = least_squares_slope(&lx, &ly);
    let exp_ok = (slope * beta - 1.0).abs() <= 0.03;
    Ok(Verdict {
        pass: var_ok && cf_ok && exp_ok,
        detail: format!(
            "variance at beta=2 {var:.4} vs 2 sigma^2 = 2 [{}]; max CF error {cf_err:.2e} [{}]; \
             increment scale exponent {slope:.4} vs 1/beta = {:.4} [{}]",
            mark(var_ok),
            mark(cf_ok),
            1.0 / beta,
            mark(exp_ok)
        ),
    })
}

fn operator_identities() -> Res<Verdict> {
    let t = stokes(31);
    let ctx = OperatorContext::dealiased(t, 2.0, 1.0)?;
    let (mut c_max, mut b_max, mut poincare) = (0.0f64, 0.0f64, true);
    for i in 0..100 {
        let u = SpectralField::random(t, 1.0, &mut positioned_rng(7, 1, i));
        let v = SpectralField::random(t, 1.0, &mut positioned_rng(7, 2, i));
        c_max = c_max.max(apply_C(&u, &ctx).h_inner(&u).abs() / u.h_norm_sq());
        b_max = b_max.max(trilinear_b(&u, &v, &v, &ctx)?.abs() / (u.v_norm() * v.v_norm_sq()));
        poincare &= u.v_norm_sq() >= t.lambda1() * u.h_norm_sq() && v.v_norm_sq() >= t.lambda1() * v.h_norm_sq();
    }
    let (c_ok, b_ok) = (c_max <= 1e-12, b_max <= 1e-10);
    Ok(Verdict {
        pass: c_ok && b_ok && poincare,
        detail: format!(
            "100 fields at l_max 31: max |(Cu,u)|/|u|^2 {c_max:.2e} [{}]; max |b(u,v,v)|/(|u|_V |v|_V^2) {b_max:.2e} [{}]; \
             Poincare [{}]",
            mark(c_ok),
            mark(b_ok),
            mark(poincare)
        ),
    })
}

fn inviscid_conservation() -> Res<Verdict> {
    let cfg = ModelConfig { viscosity: 0.0, ..ModelConfig::default().noise_free().unforced() };
    let model = Model::from_config(&cfg)?;
    let steps = 500;
    let t1 = steps as f64 * model.dt();
    let path = model.make_path(1, 0.0, t1)?;
    let mut u0 = SpectralField::random(*model.trunc(), 2.0, &mut positioned_rng(3, 0, 0));
    u0.scale_mut(1.0 / u0.h_norm());
    let run = run_with_ledger(0.0, t1, &path, &u0, &model, &[])?;
    let rows = &run.ledger.rows;
    let (e0, z0) = (rows[0].energy, rows[0].enstrophy);
    let de = rows.iter().map(|r| (r.energy / e0 - 1.0).abs()).fold(0.0, f64::max);
    let dz = rows.iter().map(|r| (r.enstrophy / z0 - 1.0).abs()).fold(0.0, f64::max);
    let ok = rows.len() == steps + 1 && run.blow_up.is_none() && de <= 1e-6 && dz <= 1e-6;
    Ok(Verdict {
        pass: ok,
        detail: format!("{steps} steps, nu = f = sigma = 0: relative energy drift {de:.2e}, enstrophy drift {dz:.2e}"),
    })
}

fn ou_process_suite() -> Res<Verdict> {
    let model = Model::from_config(&ModelConfig::default())?;
    let spec = model.ou();

    // Order of the integration-by-parts reconstruction against the exact step.
    let factors = [4usize, 8, 16];
    let mut errs = vec![0.0; factors.len()];
    for seed in 0..16 {
        let fine = make_two_sided_path(&spec.path_params(), 2.5e-4, 0.0, 1.0, 100 + seed)?;
        for (e, &f) in errs.iter_mut().zip(&factors) {
            let p = fine.coarsen(f)?;
            let step = ou_propagate(&OUState::zero(spec.n_modes(), 0, p.h()), spec, &p, 1.0)?;
            let ibp = ou_ibp_reconstruct(&p, spec, 0.0, 1.0)?;
            *e += step.values.iter().zip(&ibp).map(|(a, b)| (a - b).norm()).sum::<f64>();
        }
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let order_ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));

    // Shift equivariance of the stationary process.
    let path = model.make_path(derive_seed(5, tag::PATH, 0), -4.0, 4.0)?;
    let mut shift_res = 0.0f64;
    for s in [0.25, 1.0, 2.5] {
        let shifted = path.shift(s)?;
        for t in [-1.0, 0.0, 0.5, 1.0] {
            let a = stationary_state(&shifted, spec, t)?;
            let b = stationary_state(&path, spec, t + s)?;
            let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            shift_res = shift_res.max(d);
        }
    }
    let shift_ok = shift_res <= 1e-12;

    // Time average against the ensemble moment.
    let delta = model.constants().delta;
    let horizon = 200.0;
    let long = model.make_path(derive_seed(6, tag::PATH, 0), 0.0, horizon)?;
    let erg = ergodic_abs_sum(&long, spec, horizon, 20)?;
    let moments = (0..spec.n_modes())
        .map(|l| estimate_abs_moment(spec, l, model.dt(), 20_000, derive_seed(6, tag::MOMENT, l as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let ens: f64 = moments.iter().map(|m| m.mean).sum();
    let ens_se = moments.iter().map(|m| m.stderr * m.stderr).sum::<f64>().sqrt();
    let gap = 4.0 * delta * (erg.mean - ens).abs();
    let se = 4.0 * delta * ens_se.hypot(erg.stderr);
    let erg_ok = gap <= 3.0 * se;

    // The selected alpha holds on a fresh seed.
    let cert = model.alpha_certificate().ok_or("default model has no alpha certificate")?;
    let fresh = alpha_certificate(spec, cert.delta, cert.lambda1, model.dt(), 20_000, derive_seed(99, tag::MOMENT, 0))?;
    let cert_ok = fresh.holds();

    Ok(Verdict {
        pass: order_ok && shift_ok && erg_ok && cert_ok,
        detail: format!(
            "h-halving error ratios {:?} [{}]; shift residual {shift_res:.1e} [{}]; ergodic vs ensemble gap {gap:.3e} \
             vs 3 se = {:.3e} [{}]; alpha = {} certificate on fresh seed {:.4} <= {:.4} [{}]",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            mark(order_ok),
            mark(shift_ok),
            3.0 * se,
            mark(erg_ok),
            fresh.alpha,
            fresh.lhs,
            fresh.rhs,
            mark(cert_ok)
        ),
    })
}

fn cocycle_property() -> Res<Verdict> {
    let model = Model::from_config(&ModelConfig::default())?;
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let path = model.make_path(derive_seed(8, tag::PATH, i), 0.0, 2.0)?;
        let x = SpectralField::on_sphere(*model.trunc(), 1.0, &mut positioned_rng(derive_seed(8, tag::INIT, i), 0, 0));
        worst = worst.max(verify_cocycle(1.0, 1.0, &path, &x, &model)?);
    }
    Ok(Verdict { pass: worst <= 1e-10, detail: format!("10 pairs, t = s = 1: max residual {worst:.2e}") })
}

fn scratch(name: &str) -> Res<PathBuf> {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    Ok(dir)
}

fn run_command(cfg: &Config, command: Command, out: &Path, threads: Option<usize>) -> Res<(i32, String)> {
    let raw = serde_json::to_string(cfg)?;
    let opts = RunOptions { command, out: out.to_path_buf(), seed: None, threads };
    let o = run_from_str(&raw, &opts);
    Ok((o.exit_code, o.summary))
}

fn report(dir: &Path) -> Res<Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?)
}

fn gronwall_and_absorption() -> Res<Verdict> {
    let dir = scratch("verify")?;
    let (code, summary) = run_command(&Config::default(), Command::Verify, &dir, None)?;
    let r = report(&dir)?;
    let members = r["members"].as_array().map_or(0, |m| m.len());
    let ok = code == exit::OK
        && members == 20
        && r["total_violations"] == 0
        && r["failed_members"] == 0
        && r["blow_ups"] == 0;
    Ok(Verdict { pass: ok, detail: format!("exit {code}: {summary}") })
}

fn pullback_attractor() -> Res<Verdict> {
    let schedule = [-1.0, -2.0, -4.0, -8.0, -16.0, -32.0];
    let radius = 2.0;

    let quiet = Model::from_config(&ModelConfig::default().noise_free().unforced())?;
    let seeds = Seeds::new(quiet.config().seed);
    let path = quiet.make_path(seeds.path, -32.0, 0.0)?;
    let ball = sample_ball(*quiet.trunc(), radius, 8, seeds.init);
    let est = pullback_ensemble(&path, &quiet, &schedule, &ball)?;
    let target = quiet.config().viscosity * quiet.lambda1();
    let rate = fit_decay_rate(&est.schedule, &est.hausdorff_trace).unwrap_or(f64::NAN);
    let rate_ok = (rate / target - 1.0).abs() <= 0.1;

    let model = Model::from_config(&ModelConfig::default())?;
    let path = model.make_path(seeds.path, -32.0, 0.0)?;
    let ball = sample_ball(*model.trunc(), radius, 8, seeds.init);
    let est = pullback_ensemble(&path, &model, &schedule, &ball)?;
    let norm_max = est.clouds.iter().flat_map(|c| c.members.iter().map(|u| u.h_norm())).fold(radius, f64::max);
    let floor = 1e-12 * (1.0 + norm_max);
    let tr = &est.hausdorff_trace;
    let monotone = tr.iter().all(|x| x.is_finite()) && tr.windows(2).all(|w| w[1] <= 1.05 * w[0] + floor);
    let last = tr.last().copied().unwrap_or(f64::NAN);
    let final_ok = last <= 1e-2 * radius;
    let blow_ok = est.blow_ups() == 0;
    Ok(Verdict {
        pass: rate_ok && monotone && final_ok && blow_ok,
        detail: format!(
            "noise-free rate {rate:.4} vs nu lambda1 = {target} [{}]; stochastic trace {:?} monotone [{}], \
             final {last:.2e} <= {:.0e} [{}], blow-ups {}",
            mark(rate_ok),
            tr.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>(),
            mark(monotone),
            1e-2 * radius,
            mark(final_ok),
            est.blow_ups()
        ),
    })
}

fn invariant_measure_suite() -> Res<Verdict> {
    let dir = scratch("measure")?;
    let cfg = Config { model: ModelConfig::small(), ..Config::default() };
    let (code, summary) = run_command(&cfg, Command::Measure, &dir, None)?;
    let r = report(&dir)?;
    let inv = r["invariance"].as_array().ok_or("no invariance rows")?;
    let inv_ok = !inv.is_empty() && inv.iter().all(|row| row["pass"] == true);
    let ck = &r["chapman_kolmogorov"];
    let ck_ok = ck["pass"] == true;
    let feller_ok = r["feller"]["monotone"] == true;
    let diffs: Vec<String> = r["feller"]["rows"]
        .as_array()
        .map(|rows| rows.iter().map(|x| format!("{:.2e}", x["abs_diff"].as_f64().unwrap_or(f64::NAN))).collect())
        .unwrap_or_default();
    Ok(Verdict {
        pass: code == exit::OK && inv_ok && ck_ok && feller_ok,
        detail: format!(
            "exit {code}; invariance {} rows [{}]; CK |lhs - rhs| {:.2e} vs budget {:.2e} [{}]; Feller |D| {diffs:?} [{}]; \
             {summary}",
            inv.len(),
            mark(inv_ok),
            (ck["lhs"]["mean"].as_f64().unwrap_or(f64::NAN) - ck["rhs"]["mean"].as_f64().unwrap_or(f64::NAN)).abs(),
            3.0 * ck["combined_stderr"].as_f64().unwrap_or(f64::NAN),
            mark(ck_ok),
            mark(feller_ok)
        ),
    })
}

/// Small configuration exercising every command in a few seconds.
fn quick_config() -> Config {
    let mut c = Config { model: ModelConfig::small(), ..Config::default() };
    c.model.alpha_search.n_paths = 2000;
    let x = &mut c.experiment;
    x.pullback.t0_schedule = vec![-1.0, -2.0, -4.0];
    x.pullback.ball_samples = 4;
    x.ou_stats.horizon = 20.0;
    x.ou_stats.moment_paths = 2000;
    x.verify.t_start = -4.0;
    x.verify.members = 4;
    x.measure.n_seeds = 64;
    x.measure.ck_lhs = 400;
    x.measure.ck_outer = 20;
    x.measure.ck_inner = 20;
    x.measure.feller_samples = 40;
    x.cocycle.pairs = 3;
    c
}

fn read_artifacts(dir: &Path) -> Res<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir)? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name != "manifest.json" {
            out.insert(name, std::fs::read(e.path())?);
        }
    }
    Ok(out)
}

fn reproducibility() -> Res<Verdict> {
    let cfg = quick_config();
    let commands = [
        Command::Simulate,
        Command::Pullback,
        Command::Attractor,
        Command::OuStats,
        Command::Verify,
        Command::Measure,
        Command::Cocycle,
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for cmd in commands {
        let mut runs = Vec::new();
        for (k, threads) in [Some(1), Some(2), Some(2)].into_iter().enumerate() {
            let dir = scratch(&format!("repro_{}_{k}", cmd.name()))?;
            run_command(&cfg, cmd, &dir, threads)?;
            runs.push(read_artifacts(&dir)?);
        }
        files += runs[0].len();
        if runs[0].is_empty() || runs[1..].iter().any(|r| r != &runs[0]) {
            mismatches.push(cmd.name());
        }
    }
    Ok(Verdict {
        pass: mismatches.is_empty(),
        detail: format!(
            "7 commands x (1 thread, 2 threads, 2 threads again), {files} artifacts per run; mismatching: {mismatches:?}"
        ),
    })
}
