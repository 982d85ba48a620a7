use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use tube_core::analysis::weighted_linear_fit;
use tube_core::dynamics::WallSide;
use tube_core::experiments::{
    BiInfiniteExperiment, ContinuousWindow, HeatExperiment, HeatLltExperiment, HeatSetup, JointWindow, LltResult,
    LocalTimeExperiment, MeanderWindow, ProfileExperiment, SemiInfiniteExperiment, Source, MIN_HITS, MIN_SURVIVORS,
};
use tube_core::geometry::{check_finite_horizon, validate_configuration};
use tube_core::reference::{
    boundary_layer, derive_constants, gaussian_density, killed_bm_density, meander_cdf, meander_density,
    profile_integral, profile_limit, MeanderLaw,
};
use tube_core::{InjectionMeasure, Tube, TubeKind};

use crate::args::*;
use crate::run::{num, CliError, CliResult, Ctx, Finished};

/// Certification seed; fixed so that results depend on `--seed` only
/// through the particles.
const CERTIFY_SEED: u64 = 0;

pub fn dispatch(cmd: Command) -> CliResult<Finished<()>> {
    match cmd {
        Command::Validate(a) => validate(a),
        Command::Transport(a) => transport(a),
        Command::Survival(a) => survival(a),
        Command::Meander(a) => meander(a),
        Command::Profile(a) => profile(a),
        Command::Heat(a) => heat(a),
        Command::Localtime(a) => local_time(a),
        Command::Llt(a) => llt(a),
        Command::Reference(a) => reference(a),
    }
}

fn context<A: Serialize>(args: &A, common: &Common, name: &'static str) -> CliResult<Ctx> {
    let params = serde_json::to_value(args).map_err(|e| CliError::Config(e.to_string()))?;
    Ctx::new(common.clone(), name, params)
}

fn tube(ctx: &Ctx, kind: TubeKind) -> CliResult<Tube> {
    match ctx.config.tube(kind, CERTIFY_SEED) {
        Ok((t, _)) => Ok(t),
        Err(e @ tube_core::Error::CorridorFound(_)) => Err(CliError::ValidationFailed(e.to_string(), None)),
        Err(e @ tube_core::Error::InvalidConfiguration(_)) => Err(CliError::ValidationFailed(e.to_string(), None)),
        Err(e) => Err(e.into()),
    }
}

fn injection(name: &str) -> CliResult<InjectionMeasure> {
    InjectionMeasure::parse(name).map_err(|e| CliError::Config(e.to_string()))
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("--{name} must be positive, got {v}")))
    }
}

macro_rules! finish {
    ($e:expr) => {
        match $e {
            Finished::Done(v) => v,
            Finished::Stopped(p) => return Ok(Finished::Stopped(p)),
        }
    };
}

fn validate(a: ValidateArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "validate")?;
    let cfg = ctx.config.tube_config(TubeKind::SemiInfinite);
    let report = validate_configuration(&cfg)?;
    if !report.passed() {
        ctx.write_json("validate", &json!({ "validation": report }))?;
        return Err(CliError::ValidationFailed(report.violations.join("; "), None));
    }
    let horizon = check_finite_horizon(&cfg, &ctx.config.horizon, ctx.seed())?;
    ctx.write_json("validate", &json!({ "validation": report, "horizon": horizon }))?;
    if horizon.corridor_found {
        let d = horizon.worst_direction.expect("corridor has a direction");
        let msg = format!("open corridor in direction ({}, {})", d.p, d.q);
        return Err(CliError::ValidationFailed(msg, Some(Box::new(horizon))));
    }
    println!("finite horizon: free flight in [{}, {}]", horizon.empirical_kappa_min, horizon.empirical_kappa_max);
    Ok(Finished::Done(()))
}

fn transport(a: TransportArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "transport")?;
    if a.steps < 4 {
        return Err(CliError::Config("--steps must be at least 4".into()));
    }
    let n = ctx.particles(10_000);
    let exp = BiInfiniteExperiment::new(&tube(&ctx, TubeKind::BiInfinite)?, &[a.steps / 4, a.steps], n)?;
    let out = finish!(ctx.execute(&exp, n)?).transport;
    let mut rows = vec![
        vec!["sigma2".into(), num(out.sigma2), num(out.sigma2_se)],
        vec!["kappa_bar".into(), num(out.kappa_bar), num(out.kappa_bar_se)],
        vec!["sigma_hat2".into(), num(out.sigma_hat2), num(out.sigma_hat2_se)],
        vec!["Sigma11".into(), num(out.sigma[0][0]), num(out.sigma_se[0][0])],
        vec!["Sigma12".into(), num(out.sigma[0][1]), num(out.sigma_se[0][1])],
        vec!["Sigma22".into(), num(out.sigma[1][1]), num(out.sigma_se[1][1])],
    ];
    for s in &out.snapshots {
        rows.push(vec![format!("var_ratio_{}", s.n), num(s.var_ratio), num(s.var_ratio_se)]);
        rows.push(vec![format!("kappa_{}", s.n), num(s.kappa), num(s.kappa_se)]);
    }
    ctx.write_csv("transport", &["quantity", "value", "stderr"], rows, json!({ "exact_kappa_bar": ctx.config.tube_config(TubeKind::BiInfinite).mean_free_path() }))?;
    Ok(Finished::Done(()))
}

fn default_times(t_cap: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..).map(|k| 10f64.powf(1.0 + k as f64 / 4.0)).take_while(|&t| t < t_cap).collect();
    t.push(t_cap);
    t
}

fn survival(a: SurvivalArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "survival")?;
    let t_cap = positive("t-cap", a.t_cap)?;
    let times = if a.times.is_empty() { default_times(t_cap) } else { a.times.clone() };
    if times.iter().any(|&t| !(0.0..=t_cap).contains(&t)) {
        return Err(CliError::Config("survival times must lie in [0, t_cap]".into()));
    }
    let n = ctx.particles(100_000);
    let mut exp = SemiInfiniteExperiment::new(&tube(&ctx, TubeKind::SemiInfinite)?, injection(&a.injection)?, t_cap)?;
    exp.survival_times = times;
    let out = finish!(ctx.execute(&exp, n)?).survival;
    let rows = out.rows.iter().map(|r| vec![num(r.0), num(r.1), num(r.2)]).collect();
    let summary = json!({ "fit": out.fit, "c1_hat": out.c1_hat, "c1_hat_se": out.c1_hat_se });
    ctx.write_csv("survival", &["N", "p_hat", "stderr"], rows, summary)?;
    Ok(Finished::Done(()))
}

fn meander(a: MeanderArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "meander")?;
    let time = positive("time", a.time)?;
    let n = ctx.particles(100_000);
    let mut exp = SemiInfiniteExperiment::new(&tube(&ctx, TubeKind::SemiInfinite)?, injection(&a.injection)?, time)?;
    exp.meander_time = Some(time);
    let out = finish!(ctx.execute(&exp, n)?);
    let m = out.meander.expect("meander time set");
    let rows = m.endpoints.iter().zip(&m.maxima).map(|(e, x)| vec![num(*e), num(*x)]).collect();
    ctx.write_csv("meander", &["endpoint", "maximum"], rows, json!({ "survivors": m.survivors, "sigma_hat": out.sigma_hat }))?;
    if m.survivors < MIN_SURVIVORS {
        return Err(tube_core::Error::TooFewSurvivors { got: m.survivors, need: MIN_SURVIVORS }.into());
    }
    Ok(Finished::Done(()))
}

fn mirrored(m: &InjectionMeasure) -> InjectionMeasure {
    match m {
        InjectionMeasure::WallInflow { .. } => InjectionMeasure::WallInflow { side: WallSide::Right },
        other => other.clone(),
    }
}

fn profile(a: ProfileArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "profile")?;
    if a.length == 0 {
        return Err(CliError::Config("--L must be positive".into()));
    }
    if !(a.rate >= 0.0) {
        return Err(CliError::Config("--rate must be nonnegative".into()));
    }
    let l = a.length as f64;
    let t_cap = positive("t-cap", a.t_cap.unwrap_or(100.0 * l * l))?;
    let measure = injection(&a.injection)?;
    let kind = match a.mode {
        ProfileMode::Semi => TubeKind::SemiInfinite,
        ProfileMode::Finite => TubeKind::Finite { length: a.length },
    };
    let mut sources = vec![Source { measure: measure.clone(), side: WallSide::Left, rate: a.rate }];
    if a.both_ends {
        if a.mode == ProfileMode::Semi {
            return Err(CliError::Config("--both-ends needs --mode finite".into()));
        }
        sources.push(Source { measure: mirrored(&measure), side: WallSide::Right, rate: a.rate });
    }
    let n = ctx.particles(100_000);
    let exp = ProfileExperiment::new(&tube(&ctx, kind)?, sources, t_cap, a.length as usize)?;
    let p = finish!(ctx.execute(&exp, n)?);
    let rows = p.cells.iter().map(|c| vec![c.cell.to_string(), num(c.estimate), num(c.stderr), c.visits.to_string()]).collect();
    let fit = if a.mode == ProfileMode::Finite {
        let pts: Vec<(f64, f64, f64)> = p
            .cells
            .iter()
            .map(|c| ((c.cell as f64 + 0.5) / l, c.estimate, c.stderr))
            .filter(|q| (0.2..=0.8).contains(&q.0) && q.2 > 0.0)
            .collect();
        weighted_linear_fit(&pts).ok()
    } else {
        None
    };
    let summary = json!({ "tail_bias": p.tail_bias, "capped_fraction": p.capped_fraction, "fit": fit, "t_cap": t_cap });
    ctx.write_csv("profile", &["cell", "estimate", "stderr", "n"], rows, summary)?;
    Ok(Finished::Done(()))
}

fn heat(a: HeatArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "heat")?;
    let c = positive("boundary-constant", a.boundary_constant)?;
    if !(a.f0 >= 0.0 && a.f1 >= 0.0) {
        return Err(CliError::Config("--f0 and --f1 must be nonnegative".into()));
    }
    let (f0, f1, amp) = (a.f0, a.f1, a.amplitude);
    let f: tube_core::experiments::Profile = match a.profile {
        InitialProfile::Flat => Arc::new(move |_| f0),
        InitialProfile::Linear => Arc::new(move |x| f0 + (f1 - f0) * x),
        InitialProfile::Sine => Arc::new(move |x| f0 + (f1 - f0) * x + amp * (std::f64::consts::PI * x).sin()),
    };
    let setup = HeatSetup {
        length: a.length,
        f,
        lambda0: f0 / c,
        lambda1: f1 / c,
        measure: injection(&a.injection)?,
        times: a.times.clone(),
        scale: positive("scale", a.scale)?,
    };
    let exp = HeatExperiment::new(&tube(&ctx, TubeKind::Finite { length: a.length })?, setup, ctx.seed())?;
    let n = exp.n_particles();
    if n == 0 {
        return Err(CliError::Config("the initial data and sources produce no particles".into()));
    }
    let field = finish!(ctx.execute(&exp, n)?);
    let mut rows = Vec::new();
    for (j, t) in field.times.iter().enumerate() {
        for k in 0..field.length {
            rows.push(vec![num(*t), k.to_string(), num(field.u_hat[j][k]), num(field.stderr[j][k])]);
        }
    }
    let summary = json!({ "particles": n, "fluctuation": field.fluctuation });
    ctx.write_csv("occupancy", &["t", "cell", "u_hat", "stderr"], rows, summary)?;
    Ok(Finished::Done(()))
}

fn local_time(a: LocalTimeArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "localtime")?;
    if a.length == 0 || a.max_collisions == 0 {
        return Err(CliError::Config("--L and --max-collisions must be positive".into()));
    }
    let n = ctx.particles(5_000);
    let exp = LocalTimeExperiment::new(&tube(&ctx, TubeKind::SemiInfinite)?, a.length, a.max_collisions)?;
    let e = finish!(ctx.execute(&exp, n)?);
    let rows = vec![vec![
        e.length.to_string(),
        num(e.discrete),
        num(e.discrete_se),
        num(e.continuous),
        num(e.continuous_se),
        num(e.capped_fraction),
        e.min_visits.to_string(),
    ]];
    let header = ["L", "discrete", "discrete_se", "continuous", "continuous_se", "capped_fraction", "min_visits"];
    ctx.write_csv("localtime", &header, rows, Value::Null)?;
    Ok(Finished::Done(()))
}

fn llt(a: LltArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "llt")?;
    let n = ctx.particles(100_000);
    let r: LltResult = match a.mode {
        LltMode::Continuous => {
            let t = positive("time", a.time.unwrap_or(400.0))?;
            let tb = tube(&ctx, TubeKind::BiInfinite)?;
            let snap = (t / tb.config().mean_free_path()).ceil().max(1.0) as u64;
            let exp = BiInfiniteExperiment::new(&tb, &[snap], n)?.with_continuous(ContinuousWindow { t, x: a.x, cells: a.cells });
            finish!(ctx.execute(&exp, n)?).continuous.expect("window set")
        }
        LltMode::Joint => {
            if a.n == 0 {
                return Err(CliError::Config("--n must be positive".into()));
            }
            let tb = tube(&ctx, TubeKind::BiInfinite)?;
            let delta = a.delta.unwrap_or_else(|| tb.config().mean_free_path());
            let w = JointWindow { n: a.n, x: a.x, y: a.y, delta: positive("delta", delta)?, cells: a.cells, slots: a.slots };
            let exp = BiInfiniteExperiment::new(&tb, &[a.n.div_ceil(4), a.n], n)?.with_joint(w);
            finish!(ctx.execute(&exp, n)?).joint.expect("window set")
        }
        LltMode::Meander => {
            let t = positive("time", a.time.unwrap_or(1e4))?;
            let mut exp = SemiInfiniteExperiment::new(&tube(&ctx, TubeKind::SemiInfinite)?, InjectionMeasure::Mu0Cell0, t)?;
            let lo = 1e2_f64.min(t / 8.0);
            exp.survival_times = (0..=8).map(|k| lo * (t / lo).powf(k as f64 / 8.0)).collect();
            exp.fit_range = (lo, t);
            exp.meander_time = Some(t);
            exp.meander_window = Some(MeanderWindow { x: a.x, y: a.y, cells: a.cells });
            exp.sigma_hat = a.sigma_hat;
            finish!(ctx.execute(&exp, n)?).meander_llt.expect("window set")
        }
        LltMode::Heat => {
            let t = positive("time", a.time.unwrap_or(0.1))?;
            let s = a.sigma_hat.ok_or_else(|| CliError::Config("heat mode needs --sigma-hat".into()))?;
            let tb = tube(&ctx, TubeKind::Finite { length: a.length })?;
            let exp = HeatLltExperiment::new(&tb, a.length, t, a.x, a.y, a.cells, positive("sigma-hat", s)?)?;
            finish!(ctx.execute(&exp, n)?)
        }
    };
    let rows = vec![vec![r.mode.clone(), r.params.to_string(), num(r.empirical), num(r.reference), num(r.z)]];
    ctx.write_csv("llt", &["mode", "param_json", "empirical", "reference", "z"], rows, json!({ "hits": r.hits }))?;
    r.require_hits(MIN_HITS)?;
    Ok(Finished::Done(()))
}

fn reference(a: ReferenceArgs) -> CliResult<Finished<()>> {
    let ctx = context(&a, &a.common, "reference")?;
    let k = derive_constants(a.c_bar, a.kappa_bar, a.sigma)?;
    if a.law == Law::Constants {
        let rows = [
            ("c_bar", k.c_bar),
            ("kappa_bar", k.kappa_bar),
            ("sigma", k.sigma),
            ("c", k.c),
            ("c1", k.c1),
            ("c1_hat", k.c1_hat),
            ("c_b", k.c_b),
            ("sigma_hat", k.sigma_hat),
        ]
        .iter()
        .map(|(n, v)| vec![n.to_string(), num(*v)])
        .collect();
        ctx.write_csv("reference", &["name", "value"], rows, Value::Null)?;
        return Ok(Finished::Done(()));
    }
    let (value, tail) = match a.law {
        Law::Gaussian => (gaussian_density(a.rho, a.x)?, 0.0),
        Law::MeanderCdf => {
            let s = meander_cdf(&MeanderLaw::new(a.rho)?, a.x, a.y)?;
            (s.value, s.tail_bound)
        }
        Law::MeanderDensity => {
            let s = meander_density(&MeanderLaw::new(a.rho)?, a.x, a.y)?;
            (s.value, s.tail_bound)
        }
        Law::Killed => {
            let s = killed_bm_density(a.rho, a.t, a.x, a.y)?;
            (s.value, s.tail_bound)
        }
        Law::ProfileLimit => (profile_limit(&k, a.x)?, 0.0),
        Law::ProfileIntegral => (profile_integral(&k, a.x, a.delta)?, 0.0),
        Law::BoundaryLayer => {
            let s = boundary_layer(&k, a.f0, a.t, a.x)?;
            (s.value, s.tail_bound)
        }
        Law::Constants => unreachable!("handled above"),
    };
    println!("{value}");
    let law = serde_json::to_value(a.law).expect("enum serializes");
    let rows = vec![vec![law.as_str().unwrap_or_default().to_string(), num(a.x), num(a.y), num(a.t), num(a.rho), num(value), num(tail)]];
    ctx.write_csv("reference", &["law", "x", "y", "t", "rho", "value", "tail_bound"], rows, Value::Null)?;
    Ok(Finished::Done(()))
}
