use std::fmt::Write as _;

use doeblin::coupling::{
    choose_k, compare_prefix_dists, hellinger_success_bound, kesten_diagnostic, prefix_dist, run_coupled_chains,
    simulate_y_chain, BlockSchedule, CouplingOptions, CouplingTrace, LevelStats, YChainParams, DEFAULT_K_MAX,
    KESTEN_MIN_SAMPLES,
};
use doeblin::doeblin_fn::{
    variation, variation_exact_by_symbol, variation_profile, Observable, VariationMode, VariationOptions,
    VariationProfile,
};
use doeblin::nonmixing::{
    apply_involution, correlation_sequence, phase_locked_state, verify_symmetries, CorrelationMethod,
    CorrelationOptions, CylinderEvent, Involution,
};
use doeblin::replicas::run_replicas;
use doeblin::sequence::{agreement_length, Alphabet, State};
use doeblin::transfer::{stationary_local, stationary_local_at_depth};
use doeblin::Error;
use serde_json::{json, Value};

use crate::config::{BuiltG, EventConfig, KChoice, MethodKind};
use crate::error::CliError;
use crate::run::{Run, Stage};

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] table")))
}

fn build_g(run: &mut Run) -> Result<BuiltG, CliError> {
    run.stage = Stage::Build;
    let choice = run.config().g.clone().ok_or_else(|| CliError::Config("missing [g] table".into()))?;
    choice.build(&run.config_dir())
}

fn parse_state(alphabet: &Alphabet, text: Option<&String>, default: usize) -> Result<State, CliError> {
    match text {
        Some(t) => Ok(State::parse(alphabet, t)?),
        None => Ok(State::constant(alphabet, default as _)?),
    }
}

/// Certified profile: the envelope's own, else exact enumeration.
fn profile(run: &Run, built: &BuiltG) -> Result<VariationProfile, CliError> {
    if let Some(cert) = &built.envelope {
        return Ok(cert.profile.clone());
    }
    let opts = VariationOptions { budget: run.config().budget.enumeration, ..Default::default() };
    Ok(variation_profile(&built.g, VariationMode::Exact, &opts)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn couple(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().couple, "couple")?.clone();
    let built = build_g(run)?;
    let g = &built.g;
    let r = profile(run, &built)?;
    let k = match &cfg.k {
        KChoice::Fixed(k) => *k,
        KChoice::Named(s) if s == "auto" => choose_k(&r, cfg.n, DEFAULT_K_MAX)?,
        KChoice::Named(s) => return Err(CliError::Config(format!("k = {s:?}: expected an integer or \"auto\""))),
    };
    let schedule = BlockSchedule::new(cfg.n, k)?;
    let size = g.alphabet().size();
    let x0 = parse_state(g.alphabet(), cfg.x0.as_ref(), 0)?;
    let xt = parse_state(g.alphabet(), cfg.x0_tilde.as_ref(), size - 1)?;
    if cfg.replicas == 0 {
        return Err(CliError::Config("replicas must be ≥ 1".into()));
    }
    let opts = CouplingOptions {
        budget: run.config().budget.prefix,
        profile: Some(r),
        thinning: cfg.thinning.clone(),
        record_steps: cfg.record_steps,
    };
    run.stage = Stage::Run;
    let key = run.key();
    run.streams("couple", cfg.replicas as u64);
    let traces = run_replicas(run.workers, cfg.replicas, |i| {
        let mut rng = key.stream("couple", i as u64);
        run_coupled_chains(g, &x0, &xt, schedule, cfg.steps, &opts, &mut rng)
    })?;
    run.stage = Stage::Write;
    for (i, t) in traces.iter().enumerate() {
        if cfg.record_steps {
            let name = if cfg.replicas == 1 { "trace.jsonl".to_string() } else { format!("trace-{i:03}.jsonl") };
            run.write(&name, &t.to_jsonl()?)?;
        }
    }
    let levels = merge_levels(&traces);
    run.write("levels.csv", &levels_csv(&levels, k))?;
    let below: Vec<u32> = levels
        .iter()
        .filter(|l| match (l.bound, l.empirical_success()) {
            (Some(b), Some(p)) => p < b - 3.0 * stderr(p, l.attempts),
            _ => false,
        })
        .map(|l| l.level)
        .collect();
    Ok(json!({
        "N": cfg.n,
        "K": k,
        "replicas": cfg.replicas,
        "steps_run": traces.iter().map(|t| t.steps_run).collect::<Vec<_>>(),
        "excursions": traces.iter().map(|t| t.excursions.len()).collect::<Vec<_>>(),
        "max_y_ratio": traces.iter().map(|t| t.max_y_ratio).fold(0.0, f64::max),
        "truncated": traces.iter().filter_map(|t| t.truncated.clone()).collect::<Vec<_>>(),
        "invariant_violations": 0,
        "levels_below_bound_3sigma": below,
    }))
}

fn stderr(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn merge_levels(traces: &[CouplingTrace]) -> Vec<LevelStats> {
    let mut out: Vec<LevelStats> = Vec::new();
    for t in traces {
        for l in &t.levels {
            match out.iter_mut().find(|o| o.level == l.level) {
                Some(o) => {
                    o.attempts += l.attempts;
                    o.successes += l.successes;
                }
                None => out.push(l.clone()),
            }
        }
    }
    out.sort_by_key(|l| l.level);
    out
}

fn levels_csv(levels: &[LevelStats], k: u64) -> String {
    let mut out = String::from("level,B,K,b,bound,empirical_success,stderr,attempts,successes\n");
    for l in levels {
        let p = l.empirical_success();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            l.level,
            l.breaking_state,
            k,
            l.b,
            fmt_opt(l.bound),
            fmt_opt(p),
            fmt_opt(p.map(|p| stderr(p, l.attempts))),
            l.attempts,
            l.successes
        );
    }
    out
}

pub fn ychain(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().ychain, "ychain")?.clone();
    run.stage = Stage::Build;
    let schedule = BlockSchedule::new(cfg.n, cfg.k)?;
    let params = YChainParams::new(schedule, cfg.p.clone())?;
    run.stage = Stage::Run;
    run.streams("ychain", 1);
    let mut rng = run.key().stream("ychain", 0);
    let sim = simulate_y_chain(&params, cfg.excursions, cfg.record_steps, &mut rng)?;
    for e in &sim.excursions {
        let expected = schedule.checked_breaking_state(e.level + 1)?;
        if e.m != expected {
            return Err(Error::InvariantViolation { step: e.t, kappa: e.m, y: expected as i64 }.into());
        }
    }
    run.stage = Stage::Write;
    let mut csv = String::from("k,T_k,M_k,L_k\n");
    for e in &sim.excursions {
        let _ = writeln!(csv, "{},{},{},{}", e.k, e.t, e.m, e.level);
    }
    run.write("renewals.csv", &csv)?;
    if let Some(steps) = &sim.steps {
        let mut lines = String::new();
        for s in steps {
            lines.push_str(&serde_json::to_string(s).map_err(|e| CliError::Config(e.to_string()))?);
            lines.push('\n');
        }
        run.write("steps.jsonl", &lines)?;
    }
    let n = sim.excursions.len() as f64;
    let top = sim.excursions.iter().map(|e| e.level).max().unwrap_or(0);
    let mut csv = String::from("level,empirical,stderr,expected\n");
    let mut reach = 1.0;
    for l in 0..=top {
        let f = sim.excursions.iter().filter(|e| e.level == l).count() as f64 / n;
        let expected = reach * (1.0 - params.p(l));
        reach *= params.p(l);
        let _ = writeln!(csv, "{l},{f},{},{expected}", (f * (1.0 - f) / n).sqrt());
    }
    run.write("levels.csv", &csv)?;
    let ms: Vec<u64> = sim.excursions.iter().map(|e| e.m).collect();
    let kesten = if ms.len() >= KESTEN_MIN_SAMPLES {
        let report = kesten_diagnostic(&ms, &schedule)?;
        run.write("kesten.json", &(serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))? + "\n"))?;
        json!({
            "verdict": report.verdict,
            "tail_index": report.tail_index,
            "tail_index_stderr": report.tail_index_stderr,
            "mean_level": report.mean_level,
        })
    } else {
        json!({ "skipped": format!("{} excursions, at least {KESTEN_MIN_SAMPLES} needed", ms.len()) })
    };
    Ok(json!({ "excursions": ms.len(), "renewal_time": sim.excursions.last().map(|e| e.t), "kesten": kesten }))
}

fn event(choice: &EventConfig, alphabet: &Alphabet) -> Result<CylinderEvent, CliError> {
    Ok(match choice {
        EventConfig::SpinUp => CylinderEvent::spin_up(alphabet)?,
        EventConfig::Words { words } => {
            let words = words.iter().map(|w| alphabet.parse_word(w)).collect::<Result<Vec<_>, _>>()?;
            CylinderEvent::words(alphabet, &words)?
        }
        EventConfig::Signature { len, alternating } => CylinderEvent::signature(*len, *alternating)?,
    })
}

pub fn mixing(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().mixing, "mixing")?.clone();
    let built = build_g(run)?;
    let g = &built.g;
    let a = event(&cfg.a, g.alphabet())?;
    let b = match &cfg.b {
        Some(choice) => event(choice, g.alphabet())?,
        None => a.clone(),
    };
    let opts = CorrelationOptions {
        budget: run.config().budget.enumeration,
        length: cfg.length,
        burn_in: cfg.burn_in,
        replicas: cfg.replicas,
        workers: run.workers,
        ..Default::default()
    };
    let method = match cfg.method {
        MethodKind::Exact => CorrelationMethod::ExactLocal,
        MethodKind::Simulated => {
            let x0 = match (cfg.phase_lock, &cfg.x0) {
                (Some(_), Some(_)) => return Err(CliError::Config("give either x0 or phase_lock, not both".into())),
                (Some(sign), None) => {
                    let locked = phase_locked_state(sign)?;
                    if built.conjugated {
                        apply_involution(Involution::F, &locked)?
                    } else {
                        locked
                    }
                }
                (None, x0) => parse_state(g.alphabet(), x0.as_ref(), 0)?,
            };
            run.streams("correlation", cfg.replicas as u64);
            CorrelationMethod::Simulated { x0, key: run.key() }
        }
    };
    run.stage = Stage::Run;
    let report = correlation_sequence(g, &a, &b, cfg.n_max, &method, &opts)?;
    run.stage = Stage::Write;
    run.write("correlation.csv", &report.to_csv())?;
    let [lo, hi] = cfg.tail.unwrap_or([(cfg.n_max / 8).max(1), cfg.n_max]);
    let tail = report.cesaro_tail(lo, hi)?;
    let (even, odd) = report.parity_means(lo, hi)?;
    let conditioning = (cfg.phase_lock.is_some()).then_some(
        "phase-locked start: estimates are conditional on the phase persisting over the simulated horizon",
    );
    Ok(json!({
        "method": report.method,
        "mu_a": report.mu_a,
        "mu_b": report.mu_b,
        "tail_lags": [lo, hi],
        "cesaro_tail": tail,
        "even_lag_mean": even,
        "odd_lag_mean": odd,
        "conditioning": conditioning,
    }))
}

pub fn varprofile(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().varprofile, "varprofile")?.clone();
    let built = build_g(run)?;
    let g = &built.g;
    let seed = run.key().seed();
    run.streams("variation", 1);
    let opts = VariationOptions {
        budget: run.config().budget.enumeration,
        samples: cfg.samples,
        seed,
        observable: Observable::LogG,
    };
    run.stage = Stage::Run;
    let labels = g.alphabet().labels().to_vec();
    let mut csv = String::from("n,value,mode");
    for c in &labels {
        let _ = write!(csv, ",a={c}");
    }
    csv.push('\n');
    let mut values = Vec::new();
    for n in 0..=cfg.n_max {
        let v = variation(g, n, cfg.mode, &opts)?;
        let per_symbol = match cfg.mode {
            VariationMode::Exact => variation_exact_by_symbol(g, n, opts.budget, opts.observable).ok(),
            _ => None,
        };
        let mode = serde_json::to_value(v.mode).map_err(|e| CliError::Config(e.to_string()))?;
        let _ = write!(csv, "{n},{},{}", v.value, mode.as_str().unwrap_or_default());
        for i in 0..labels.len() {
            let _ = write!(csv, ",{}", fmt_opt(per_symbol.as_ref().map(|p| p[i])));
        }
        csv.push('\n');
        values.push(v.value);
    }
    run.stage = Stage::Write;
    run.write("varprofile.csv", &csv)?;
    Ok(json!({ "values": values, "mode": cfg.mode }))
}

pub fn tvprofile(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().tvprofile, "tvprofile")?.clone();
    let built = build_g(run)?;
    let g = &built.g;
    let r = profile(run, &built).ok();
    run.stage = Stage::Run;
    let mut csv = String::from("pair,b,kappa,d_tv,hellinger,one_minus_dtv,cauchy_schwarz_bound,half_h2,certified_bound\n");
    let mut worst: f64 = 1.0;
    for (i, [x, xt]) in cfg.pairs.iter().enumerate() {
        let (x, xt) = (State::parse(g.alphabet(), x)?, State::parse(g.alphabet(), xt)?);
        let kappa = agreement_length(&x, &xt, 1 << 16).value as u64;
        for b in 1..=cfg.b_max {
            let budget = run.config().budget.prefix;
            let c = compare_prefix_dists(&prefix_dist(g, &x, b, budget)?, &prefix_dist(g, &xt, b, budget)?)?;
            let certified = r.as_ref().and_then(|r| hellinger_success_bound(r, kappa, b as u64).ok());
            worst = worst.min(1.0 - c.d_tv);
            let _ = writeln!(
                csv,
                "{i},{b},{kappa},{},{},{},{},{},{}",
                c.d_tv,
                c.hellinger,
                1.0 - c.d_tv,
                c.cauchy_schwarz_bound(),
                c.hellinger * c.hellinger / 2.0,
                fmt_opt(certified)
            );
        }
    }
    run.stage = Stage::Write;
    run.write("tvprofile.csv", &csv)?;
    Ok(json!({ "pairs": cfg.pairs.len(), "b_max": cfg.b_max, "min_one_minus_dtv": worst }))
}

pub fn stationary(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().stationary, "stationary")?.clone();
    let built = build_g(run)?;
    run.stage = Stage::Run;
    let pi = match cfg.depth {
        Some(d) => stationary_local_at_depth(&built.g, d, cfg.tol, cfg.max_iters)?,
        None => stationary_local(&built.g, cfg.tol, cfg.max_iters)?,
    };
    run.stage = Stage::Write;
    run.write("stationary.csv", &pi.to_csv()?)?;
    let first = pi.marginal(1.min(pi.depth()))?;
    Ok(json!({ "depth": pi.depth(), "first_symbol": first.probs() }))
}

pub fn symmetry(run: &mut Run) -> Result<Value, CliError> {
    let cfg = section(&run.config().symmetry, "symmetry")?.clone();
    let built = build_g(run)?;
    run.stage = Stage::Run;
    run.streams("symmetry", 1);
    let mut rng = run.key().stream("symmetry", 0);
    let report = verify_symmetries(&built.g, cfg.samples, cfg.horizon, &mut rng)?;
    run.stage = Stage::Write;
    let mut csv = String::from("identity,max_deviation,samples\n");
    for c in &report.checks {
        let _ = writeln!(csv, "{},{},{}", c.name, c.max_deviation, c.samples);
    }
    run.write("symmetry.csv", &csv)?;
    Ok(json!({ "horizon": report.horizon, "all_exact": report.passes(0.0), "checks": report.checks }))
}
