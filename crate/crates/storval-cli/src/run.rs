use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};

use serde::Serialize;
use storval::analytic::{
    lambda_from_process, phi_storage, phi_swing, phi_table, time_value_from_triggers, time_value_storage,
    time_value_swing, write_phi_table, AnalyticInputs, TriggerSet,
};
use storval::curves::ForwardCurve;
use storval::intrinsic::{
    cycle_variable, dp_grid_bound, solve_dp, solve_trigger, solve_with_cycle, validate_touch_conditions,
    write_solution_csv, IntrinsicSolution, StorageSpec, Terminal,
};
use storval::process::{PriceProcessSpec, ProcessKind};
use storval::rolling::{
    drift_estimate, hedge_identity_check, simulate as run_simulation, stochastic_trigger_check, write_ledger_csv,
    HedgeIdentityReport, TimeValueEstimate, TriggerCheck,
};

use crate::config::{RunConfig, SolverChoice};
use crate::CliError;

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: T,
}

fn header(cfg: &RunConfig, command: &str) -> Result<String, CliError> {
    let body = toml::to_string(cfg).map_err(|e| CliError::Config(format!("cannot render config: {e}")))?;
    let mut h = format!("# storval {command} seed={}\n", cfg.simulation.seed);
    for line in body.lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            let _ = writeln!(h, "# {line}");
        }
    }
    Ok(h)
}

fn write_report<T: Serialize>(cfg: &RunConfig, command: &str, result: T) -> Result<(), CliError> {
    let r = Report { command, seed: cfg.simulation.seed, config: cfg, result };
    let text = toml::to_string(&r).map_err(|e| CliError::Config(format!("cannot render report: {e}")))?;
    std::fs::write(cfg.out.join("report.toml"), text)?;
    Ok(())
}

fn write_csv(
    cfg: &RunConfig,
    command: &str,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let path = cfg.out.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(header(cfg, command)?.as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SegmentRow {
    t_start: f64,
    t_end: f64,
    trigger: f64,
    trigger_end: f64,
    plateau: bool,
}

#[derive(Serialize)]
struct DpComparison {
    dp_value: f64,
    dp_levels: usize,
    grid_bound: f64,
    value_gap: f64,
}

#[derive(Serialize)]
struct IntrinsicResult {
    solver: SolverChoice,
    value: f64,
    trigger_times: Vec<f64>,
    touches: usize,
    touches_satisfied: bool,
    intake: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_max: Option<f64>,
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_solver: Option<DpComparison>,
    segments: Vec<SegmentRow>,
}

fn solve_with(curve: &ForwardCurve, spec: &StorageSpec) -> storval::Result<IntrinsicSolution> {
    if spec.c_max.is_some() {
        solve_with_cycle(curve, spec)
    } else {
        solve_trigger(curve, spec)
    }
}

fn dp(cfg: &RunConfig, curve: &ForwardCurve, spec: &StorageSpec) -> Result<IntrinsicSolution, CliError> {
    if spec.c_max.is_some() {
        return Err(storval::Error::Unsupported("the lattice solver does not take a cycle cap".into()).into());
    }
    Ok(solve_dp(curve, spec, cfg.solver.dp_levels)?)
}

pub fn intrinsic(cfg: &RunConfig) -> Result<String, CliError> {
    let curve = cfg.forward_curve()?;
    let spec = cfg.storage()?;
    let (sol, other) = match cfg.solver.kind {
        SolverChoice::Trigger => (solve_with(&curve, spec)?, None),
        SolverChoice::Dp => (dp(cfg, &curve, spec)?, None),
        SolverChoice::Both => (solve_with(&curve, spec)?, Some(dp(cfg, &curve, spec)?)),
    };
    let touches = validate_touch_conditions(&sol, &curve, spec)?;
    let cross_solver = match &other {
        Some(d) => Some(DpComparison {
            dp_value: d.value,
            dp_levels: cfg.solver.dp_levels,
            grid_bound: dp_grid_bound(&curve, spec, cfg.solver.dp_levels)?,
            value_gap: sol.value - d.value,
        }),
        None => None,
    };
    let result = IntrinsicResult {
        solver: cfg.solver.kind,
        value: sol.value,
        trigger_times: sol.trigger_times.clone(),
        touches: touches.touches.len(),
        touches_satisfied: touches.all_satisfied(),
        intake: cycle_variable(&sol.trajectory).last().copied().unwrap_or(0.0),
        c_max: spec.c_max,
        lambda: sol.lambda,
        cross_solver,
        segments: sol
            .segments
            .iter()
            .map(|s| SegmentRow {
                t_start: s.t_start,
                t_end: s.t_end,
                trigger: s.trigger,
                trigger_end: s.trigger_end,
                plateau: s.plateau,
            })
            .collect(),
    };
    write_csv(cfg, "intrinsic", "solution.csv", |w| write_solution_csv(&sol, w))?;
    if let Some(d) = &other {
        write_csv(cfg, "intrinsic", "solution_dp.csv", |w| write_solution_csv(d, w))?;
    }
    let mut summary = format!("value {:.6}", sol.value);
    if let Some(c) = &result.cross_solver {
        let _ = write!(summary, ", dp {:.6} (gap {:.3e})", c.dp_value, c.value_gap);
    }
    if let Some(s) = sol.segments.first() {
        let _ = write!(summary, ", trigger {:.6}", s.trigger);
    }
    write_report(cfg, "intrinsic", result)?;
    Ok(summary)
}

#[derive(Serialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Product {
    Storage,
    Swing,
}

/// Closed-form inputs when the config matches one of the sinusoid examples.
fn analytic_inputs(cfg: &RunConfig, process: &PriceProcessSpec) -> Option<(Product, AnalyticInputs)> {
    let s = cfg.curve.sinusoid?;
    let spec = cfg.storage.as_ref()?;
    let dr = spec.r_max - spec.r_min;
    let product = match (spec.terminal, process.kind) {
        (Terminal::Fixed { .. }, ProcessKind::Lognormal1f) if s.f_c > s.d_f => Product::Storage,
        (Terminal::Free { .. }, ProcessKind::Normal1f) => Product::Swing,
        _ => return None,
    };
    let inp = AnalyticInputs {
        dr,
        f_c: s.f_c,
        d_f: s.d_f,
        sigma0: process.sigma0,
        kappa0: process.kappa0,
        alpha: process.alpha,
        t_e: cfg.curve.t_end,
    };
    inp.validate().ok()?;
    Some((product, inp))
}

fn closed_form(product: Product, inp: &AnalyticInputs) -> storval::Result<(f64, f64)> {
    let x = inp.alpha * inp.t_e;
    match product {
        Product::Storage => Ok((if x > 0.0 { phi_storage(x)? } else { 0.0 }, time_value_storage(inp)?)),
        Product::Swing => Ok((phi_swing(x)?, time_value_swing(inp)?)),
    }
}

#[derive(Serialize)]
struct AnalyticComparison {
    product: Product,
    phi: f64,
    time_value: f64,
    mc_over_analytic: f64,
}

#[derive(Serialize)]
struct SimulateResult {
    p0: f64,
    rolling: TimeValueEstimate,
    static_hedge: TimeValueEstimate,
    hedge_identity: HedgeIdentityReport,
    trigger_check: TriggerCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticComparison>,
}

pub fn simulate(cfg: &RunConfig) -> Result<String, CliError> {
    let curve = cfg.forward_curve()?;
    let spec = cfg.storage()?;
    let process = cfg.process()?;
    let sim_cfg = cfg.simulation_config()?;
    let sim = run_simulation(&sim_cfg, &curve, spec, process)?;
    let ledgers = sim.ledgers();
    let n = cfg.curve.n_steps;
    let steps: Vec<usize> = [n / 4, n / 2, 3 * n / 4].into_iter().filter(|&k| k > 0).collect();
    let hedge_identity = hedge_identity_check(&ledgers);
    let trigger_check = stochastic_trigger_check(&ledgers, &sim.initial.trigger_path, &curve.prices, &steps);
    let drift = drift_estimate(&ledgers, sim_cfg.grid.dt());
    let analytic = match analytic_inputs(cfg, process) {
        Some((product, inp)) => {
            let (phi, v) = closed_form(product, &inp)?;
            Some(AnalyticComparison { product, phi, time_value: v, mc_over_analytic: sim.rolling.mean / v })
        }
        None => None,
    };
    write_csv(cfg, "simulate", "paths.csv", |w| {
        writeln!(w, "path,p0,p_terminal,p_static,min_dp,injected,released")?;
        for o in &sim.outcomes {
            writeln!(w, "{},{},{},{},{},{},{}", o.path_index, o.p0, o.p_terminal, o.p_static, o.min_dp, o.injected, o.released)?;
        }
        Ok(())
    })?;
    write_csv(cfg, "simulate", "drift.csv", |w| {
        writeln!(w, "t,mu,mu_stderr,sigma2")?;
        for i in 0..drift.t.len() {
            writeln!(w, "{},{},{},{}", drift.t[i], drift.mu[i], drift.mu_stderr[i], drift.sigma2[i])?;
        }
        Ok(())
    })?;
    if cfg.simulation.record_ledger {
        let tagged: Vec<(u64, &storval::rolling::SimulationLedger)> =
            sim.outcomes.iter().filter_map(|o| o.ledger.as_ref().map(|l| (o.path_index, l))).collect();
        write_csv(cfg, "simulate", "ledgers.csv", |w| write_ledger_csv(&tagged, w))?;
    }
    let mut summary = format!("time value {:.6} +- {:.6} over {} paths", sim.rolling.mean, sim.rolling.stderr, sim.rolling.n_paths);
    if let Some(a) = &analytic {
        let _ = write!(summary, ", analytic {:.6} (ratio {:.3})", a.time_value, a.mc_over_analytic);
    }
    let result = SimulateResult {
        p0: sim.initial.value,
        rolling: sim.rolling.clone(),
        static_hedge: sim.static_hedge.clone(),
        hedge_identity,
        trigger_check,
        analytic,
    };
    write_report(cfg, "simulate", result)?;
    Ok(summary)
}

#[derive(Serialize)]
struct AnalyticResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    product: Option<Product>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_value: Option<f64>,
    /// Time value from the trigger sums on the example trigger set.
    #[serde(skip_serializing_if = "Option::is_none")]
    trigger_sum_time_value: Option<f64>,
    table_points: usize,
}

pub fn analytic(cfg: &RunConfig) -> Result<String, CliError> {
    let a = &cfg.analytic;
    let rows = phi_table(a.x_min, a.x_max, a.points)?;
    write_csv(cfg, "analytic", "phi_table.csv", |w| write_phi_table(&rows, w))?;
    let mut result =
        AnalyticResult { product: None, phi: None, time_value: None, trigger_sum_time_value: None, table_points: rows.len() };
    let mut summary = format!("phi table with {} points", rows.len());
    if let Some(process) = &cfg.process {
        if let Some((product, inp)) = analytic_inputs(cfg, process) {
            let (phi, v) = closed_form(product, &inp)?;
            let s = cfg.curve.sinusoid.expect("analytic inputs need a sinusoid");
            let ts = TriggerSet::from_sinusoid(&s, inp.t_e, inp.dr)?;
            let lam = lambda_from_process(process, |t| s.value(inp.t_e, t));
            let sum = time_value_from_triggers(&ts, &lam, inp.t_e, product == Product::Swing);
            let _ = write!(summary, ", time value {v:.6} (trigger sums {sum:.6})");
            result.product = Some(product);
            result.phi = Some(phi);
            result.time_value = Some(v);
            result.trigger_sum_time_value = Some(sum);
        }
    }
    write_report(cfg, "analytic", result)?;
    Ok(summary)
}

#[derive(Serialize)]
struct CompareRow {
    alpha_t_e: f64,
    phi: f64,
    analytic: f64,
    mc: f64,
    stderr: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CompareResult {
    product: Product,
    rows: Vec<CompareRow>,
}

pub fn compare(cfg: &RunConfig) -> Result<String, CliError> {
    let sweep = cfg.compare.as_ref().ok_or_else(|| CliError::Config("missing section `compare`".into()))?;
    if sweep.alpha_t_e.is_empty() || sweep.alpha_t_e.iter().any(|x| !(*x >= 0.0)) {
        return Err(CliError::Config("compare.alpha_t_e needs nonnegative entries".into()));
    }
    let curve = cfg.forward_curve()?;
    let spec = cfg.storage()?;
    let base = cfg.process()?;
    let t_e = cfg.curve.t_end;
    let mut rows = Vec::new();
    let mut product = None;
    for (i, &x) in sweep.alpha_t_e.iter().enumerate() {
        let mut process = base.clone();
        process.alpha = x / t_e;
        let (p, inp) = analytic_inputs(cfg, &process).ok_or_else(|| {
            CliError::Config(
                "compare needs a sinusoid curve with a fixed-end storage on a lognormal-1f process or a free-end swing on a normal-1f process"
                    .into(),
            )
        })?;
        product = Some(p);
        let (phi, v) = closed_form(p, &inp)?;
        let mut sim_cfg = cfg.simulation_config()?;
        sim_cfg.record_ledger = false;
        sim_cfg.seed = cfg.simulation.seed.wrapping_add(i as u64);
        let est = storval::rolling::estimate_time_value(&sim_cfg, &curve, spec, &process)?;
        rows.push(CompareRow { alpha_t_e: x, phi, analytic: v, mc: est.mean, stderr: est.stderr, ratio: est.mean / v });
    }
    write_csv(cfg, "compare", "compare.csv", |w| {
        writeln!(w, "alpha_t_e,phi,analytic,mc,stderr,ratio")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{}", r.alpha_t_e, r.phi, r.analytic, r.mc, r.stderr, r.ratio)?;
        }
        Ok(())
    })?;
    let mut summary = String::new();
    for r in &rows {
        let _ = writeln!(summary, "alpha T_e {:>6}: analytic {:.6} mc {:.6} +- {:.6} ratio {:.3}", r.alpha_t_e, r.analytic, r.mc, r.stderr, r.ratio);
    }
    write_report(cfg, "compare", CompareResult { product: product.expect("nonempty sweep"), rows })?;
    Ok(summary.trim_end().to_string())
}
