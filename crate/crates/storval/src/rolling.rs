//! Rolling-intrinsic Monte Carlo.
//!
//! Each step executes the prompt bucket of the current intrinsic solution,
//! evolves the curve, re-solves the remaining buckets from the new volume and
//! books the cash of moving the hedge onto the new solution. The hedge held
//! at step `k` is the solution's rate profile over buckets `k..n`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{ForwardCurve, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::intrinsic::{solve_problem, IntrinsicSolution, Problem, StorageSpec, Terminal, Trajectory};
use crate::process::{Evolver, PathRng, PathState, PriceProcessSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    #[serde(default)]
    pub record_ledger: bool,
    /// Pair paths `2i`, `2i+1` on mirrored normals.
    #[serde(default)]
    pub antithetic: bool,
}

impl SimulationConfig {
    pub fn new(n_paths: usize, seed: u64, grid: TimeGrid) -> Self {
        SimulationConfig { n_paths, seed, grid, record_ledger: false, antithetic: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be at least 1"));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(invalid("antithetic sampling needs an even number of paths"));
        }
        Ok(())
    }
}

/// One step of the ledger. Hedge values use `H = Σ r F dt` over open buckets,
/// so that a purchase raises `H` and lowers the cash balance `P` by the same amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerStep {
    pub t: f64,
    /// Volume at the start of the step.
    pub q: f64,
    /// Prompt exercise rate executed during the step.
    pub exercise: f64,
    /// Prompt price the exercise is assigned to.
    pub spot: f64,
    /// Trigger price of the prompt bucket. When the re-solved trigger is
    /// set-valued the previous trigger is kept if it still lies in the set.
    pub trigger: f64,
    /// Value increment booked after re-solving, operating costs included.
    pub dp: f64,
    /// Cash from the rebalancing trades only, `-Σ δr (F + δF) dt`.
    pub dp_trade: f64,
    /// Cumulative profit after the step.
    pub p: f64,
    /// Hedge value at the start of the step, prompt bucket included.
    pub hedge: f64,
    /// Change of the hedge value over the step excluding the prompt roll-off.
    pub dh_rebalance: f64,
    /// Mark-to-market of the held hedge, `Σ r δF dt`.
    pub hedge_pnl: f64,
}

pub type SimulationLedger = Vec<LedgerStep>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub path_index: u64,
    pub p0: f64,
    pub p_terminal: f64,
    /// Terminal cash when the initial hedge is never rebalanced and the
    /// prompt deviation is settled at the spot price.
    pub p_static: f64,
    pub min_dp: f64,
    pub injected: f64,
    pub released: f64,
    pub ledger: Option<SimulationLedger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub p0: f64,
    pub terminal_mean: f64,
    pub terminal_std: f64,
    /// Terminal P at the 5, 25, 50, 75 and 95 percent levels.
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub rolling: TimeValueEstimate,
    pub static_hedge: TimeValueEstimate,
    pub initial: IntrinsicSolution,
    pub outcomes: Vec<PathOutcome>,
}

impl Simulation {
    pub fn ledgers(&self) -> Vec<&SimulationLedger> {
        self.outcomes.iter().filter_map(|o| o.ledger.as_ref()).collect()
    }
}

fn check_supported(spec: &StorageSpec) -> Result<()> {
    if spec.c_max.is_some() {
        return Err(Error::Unsupported("cycle constraint in the rolling simulation".into()));
    }
    if spec.rate_fn.is_some() {
        return Err(Error::Unsupported("volume-dependent rates in the rolling simulation".into()));
    }
    Ok(())
}

fn tail_value(p: &Problem, offset: usize, traj: &Trajectory) -> f64 {
    p.value(offset, traj)
}

/// Advance one step: execute `prev`'s prompt bucket, evolve the curve, re-solve.
/// Returns the new solution (`None` after the last bucket) and the ledger row.
pub fn step(
    state: &mut PathState,
    prev: &IntrinsicSolution,
    spec: &StorageSpec,
    evolver: &Evolver,
) -> Result<(Option<IntrinsicSolution>, LedgerStep)> {
    step_with(state, prev, spec, evolver.dt(), |s| evolver.step(s))
}

pub(crate) fn step_with(
    state: &mut PathState,
    prev: &IntrinsicSolution,
    spec: &StorageSpec,
    dt: f64,
    evolve: impl FnOnce(&mut PathState),
) -> Result<(Option<IntrinsicSolution>, LedgerStep)> {
    let k = prev.offset;
    let old = &prev.trajectory;
    let exercise = old.rates[0];
    let q_next = old.volumes[1];
    let before = state.curve.prices.clone();
    let hedge: f64 = old.rates.iter().enumerate().map(|(i, r)| r * before[k + i] * dt).sum();

    evolve(state);

    let n = state.curve.len() - 1;
    let mut row = LedgerStep {
        t: state.t - dt,
        q: old.volumes[0],
        exercise,
        spot: before[k],
        trigger: prev.trigger_path[0],
        dp: 0.0,
        dp_trade: 0.0,
        p: 0.0,
        hedge,
        dh_rebalance: 0.0,
        hedge_pnl: 0.0,
    };
    if k + 1 >= n {
        return Ok((None, row));
    }
    let p = Problem::new(&state.curve, spec)?;
    let new = solve_problem(&p, k + 1, q_next, 0.0)?;
    let old_tail = Trajectory {
        times: old.times[1..].to_vec(),
        volumes: old.volumes[1..].to_vec(),
        rates: old.rates[1..].to_vec(),
    };
    row.dp = new.value - tail_value(&p, k + 1, &old_tail);
    let after = &state.curve.prices;
    for (i, (&rn, &ro)) in new.trajectory.rates.iter().zip(&old_tail.rates).enumerate() {
        let j = k + 1 + i;
        row.dp_trade -= (rn - ro) * after[j] * dt;
        row.dh_rebalance += (rn * after[j] - ro * before[j]) * dt;
        row.hedge_pnl += ro * (after[j] - before[j]) * dt;
    }
    Ok((Some(new), row))
}

struct Context<'a> {
    config: &'a SimulationConfig,
    curve0: &'a ForwardCurve,
    spec: &'a StorageSpec,
    evolver: Evolver,
    initial: IntrinsicSolution,
    carry: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(config: &'a SimulationConfig, curve0: &'a ForwardCurve, spec: &'a StorageSpec, pspec: &PriceProcessSpec) -> Result<Self> {
        config.validate()?;
        check_supported(spec)?;
        if curve0.len() != config.grid.n_steps + 1 {
            return Err(invalid(format!(
                "curve has {} deliveries, grid needs {}",
                curve0.len(),
                config.grid.n_steps + 1
            )));
        }
        let dt = curve0.uniform_step()?;
        let evolver = Evolver::new(pspec, dt, config.grid.n_steps)?;
        let p = Problem::new(curve0, spec)?;
        let initial = solve_problem(&p, 0, spec.q_start, 0.0)?;
        let carry = p.carry.clone();
        Ok(Context { config, curve0, spec, evolver, initial, carry })
    }

    fn run(&self, path_index: u64) -> Result<PathOutcome> {
        let cfg = self.config;
        let dt = self.evolver.dt();
        let rng = PathRng::new(cfg.seed, path_index, cfg.antithetic);
        let mut state = PathState::new(self.curve0.clone(), rng);
        let init = &self.initial;
        let p0 = init.value;
        let mut p = p0;
        let mut min_dp = f64::INFINITY;
        let mut ledger = cfg.record_ledger.then(|| Vec::with_capacity(cfg.grid.n_steps));
        let (mut injected, mut released) = (0.0, 0.0);
        // static hedge: settle deviations from the initial profile at spot
        let mut p_static = p0;
        let mut sol = init.clone();
        let mut trigger = init.trigger_path[0];
        loop {
            let k = sol.offset;
            let r = sol.trajectory.rates[0];
            let q = sol.trajectory.volumes[0];
            let (r0, q0) = (init.trajectory.rates[k], init.trajectory.volumes[k]);
            p_static -= ((r - r0) * state.curve.prices[k]
                + self.spec.op_cost(r)
                - self.spec.op_cost(r0)
                + self.carry[k] * (q - q0))
                * dt;
            if r > 0.0 {
                injected += r * dt;
            } else {
                released -= r * dt;
            }
            let (next, mut row) = step(&mut state, &sol, self.spec, &self.evolver)?;
            row.trigger = trigger;
            p += row.dp;
            row.p = p;
            min_dp = min_dp.min(row.dp);
            if let Some(l) = ledger.as_mut() {
                l.push(row);
            }
            match next {
                Some(s) => {
                    trigger = sticky_trigger(trigger + self.carry[k + 1] * dt, &s);
                    sol = s;
                }
                None => {
                    if let Terminal::Free { f_e } = self.spec.terminal {
                        let q_end = sol.trajectory.volumes[1];
                        p_static += (q_end - *init.trajectory.volumes.last().unwrap()) * f_e;
                    }
                    break;
                }
            }
        }
        Ok(PathOutcome { path_index, p0, p_terminal: p, p_static, min_dp, injected, released, ledger })
    }
}

/// The element of the prompt segment's admissible trigger range closest to `prev`.
pub fn sticky_trigger(prev: f64, sol: &IntrinsicSolution) -> f64 {
    match sol.segments.first() {
        Some(seg) if seg.bracket.0 <= seg.bracket.1 => prev.clamp(seg.bracket.0, seg.bracket.1),
        _ => sol.trigger_path[0],
    }
}

/// Simulate one path; `P(T_e)` is the cumulative cash of all trades.
pub fn run_path(
    config: &SimulationConfig,
    curve0: &ForwardCurve,
    spec: &StorageSpec,
    pspec: &PriceProcessSpec,
    path_index: u64,
) -> Result<PathOutcome> {
    Context::new(config, curve0, spec, pspec)?.run(path_index)
}

/// Run all paths on the current rayon pool and aggregate in path order.
pub fn simulate(config: &SimulationConfig, curve0: &ForwardCurve, spec: &StorageSpec, pspec: &PriceProcessSpec) -> Result<Simulation> {
    let ctx = Context::new(config, curve0, spec, pspec)?;
    let outcomes = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| ctx.run(i))
        .collect::<Result<Vec<_>>>()?;
    let p0 = ctx.initial.value;
    let rolling: Vec<f64> = outcomes.iter().map(|o| o.p_terminal).collect();
    let fixed: Vec<f64> = outcomes.iter().map(|o| o.p_static).collect();
    Ok(Simulation {
        rolling: summarize(&rolling, p0, config.antithetic),
        static_hedge: summarize(&fixed, p0, config.antithetic),
        initial: ctx.initial.clone(),
        outcomes,
    })
}

pub fn estimate_time_value(
    config: &SimulationConfig,
    curve0: &ForwardCurve,
    spec: &StorageSpec,
    pspec: &PriceProcessSpec,
) -> Result<TimeValueEstimate> {
    Ok(simulate(config, curve0, spec, pspec)?.rolling)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(terminal: &[f64], p0: f64, antithetic: bool) -> TimeValueEstimate {
    let gains: Vec<f64> = terminal.iter().map(|p| p - p0).collect();
    let (mean, std) = mean_std(&gains);
    let stderr = if antithetic {
        let pairs: Vec<f64> = gains.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        mean_std(&pairs).1 / (pairs.len() as f64).sqrt()
    } else {
        std / (terminal.len() as f64).sqrt()
    };
    let mut sorted = terminal.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&sorted, q));
    TimeValueEstimate {
        mean,
        stderr,
        n_paths: terminal.len(),
        p0,
        terminal_mean: p0 + mean,
        terminal_std: std,
        quantiles,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeIdentityReport {
    pub n_samples: usize,
    /// Sample mean of `ΔH_rebalance + ΔP_trade` per path-step.
    pub mean: f64,
    pub stderr: f64,
    pub mean_ok: bool,
    /// Largest pathwise `|ΔH_rebalance + ΔP_trade - Σ r δF dt|`; zero when
    /// each rebalance is paired with the cash it generated.
    pub max_pairing_residual: f64,
    pub pairing_ok: bool,
    pub pass: bool,
}

/// Checks `<ΔH_rebalance> = -<ΔP>` over all recorded path-steps. A mispaired
/// ledger leaves the sample mean unchanged, so the pathwise decomposition
/// `ΔH_rebalance = Σ r δF dt - ΔP_trade` is checked as well.
pub fn hedge_identity_check(ledgers: &[&SimulationLedger]) -> HedgeIdentityReport {
    let mut xs = Vec::new();
    let mut resid: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for l in ledgers {
        for row in l.iter() {
            let x = row.dh_rebalance + row.dp_trade;
            xs.push(x);
            resid = resid.max((x - row.hedge_pnl).abs());
            scale = scale.max(row.hedge.abs()).max(row.dh_rebalance.abs());
        }
    }
    if xs.is_empty() {
        return HedgeIdentityReport {
            n_samples: 0,
            mean: 0.0,
            stderr: 0.0,
            mean_ok: true,
            max_pairing_residual: 0.0,
            pairing_ok: true,
            pass: true,
        };
    }
    let (mean, std) = mean_std(&xs);
    let stderr = std / (xs.len() as f64).sqrt();
    let mean_ok = mean.abs() <= 3.0 * stderr || mean.abs() <= 1e-12 * (1.0 + scale);
    let pairing_ok = resid <= 1e-9 * (1.0 + scale);
    HedgeIdentityReport {
        n_samples: xs.len(),
        mean,
        stderr,
        mean_ok,
        max_pairing_residual: resid,
        pairing_ok,
        pass: mean_ok && pairing_ok,
    }
}

/// Negative control for [`hedge_identity_check`]: pairs each step's rebalance
/// with the cash booked `shift` steps later on the same path.
pub fn shuffled_pairing(ledgers: &[&SimulationLedger], shift: usize) -> Vec<SimulationLedger> {
    ledgers
        .iter()
        .map(|l| {
            let m = l.len();
            (0..m)
                .map(|k| {
                    let mut row = l[k];
                    let other = l[(k + shift) % m];
                    row.dp = other.dp;
                    row.dp_trade = other.dp_trade;
                    row
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub t: Vec<f64>,
    /// Cross-path mean of `δP / dt`.
    pub mu: Vec<f64>,
    pub mu_stderr: Vec<f64>,
    /// Cross-path variance of `δP`, divided by `dt`.
    pub sigma2: Vec<f64>,
}

impl DriftEstimate {
    /// `Σ μ dt`, the drift-based time value estimate.
    pub fn integral(&self, dt: f64) -> f64 {
        self.mu.iter().sum::<f64>() * dt
    }
}

pub fn drift_estimate(ledgers: &[&SimulationLedger], dt: f64) -> DriftEstimate {
    let m = ledgers.iter().map(|l| l.len()).min().unwrap_or(0);
    let mut out = DriftEstimate { t: Vec::new(), mu: Vec::new(), mu_stderr: Vec::new(), sigma2: Vec::new() };
    for k in 0..m {
        let xs: Vec<f64> = ledgers.iter().map(|l| l[k].dp).collect();
        let (mean, std) = mean_std(&xs);
        out.t.push(ledgers[0][k].t);
        out.mu.push(mean / dt);
        out.mu_stderr.push(std / (xs.len() as f64).sqrt() / dt);
        out.sigma2.push(std * std / dt);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerSample {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub initial: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerCheck {
    pub samples: Vec<TriggerSample>,
    /// `sqrt(<(s(T_e) - s0(T_e))^2>) / s0(T_e)` over the recorded spot prices.
    pub variation_ratio: f64,
    pub pass: bool,
}

/// Compares the cross-path mean of the re-solved trigger with the initial
/// intrinsic trigger path `c0` (one entry per bucket) at the given steps.
pub fn stochastic_trigger_check(ledgers: &[&SimulationLedger], c0: &[f64], s0: &[f64], steps: &[usize]) -> TriggerCheck {
    let mut samples = Vec::new();
    for &k in steps {
        let xs: Vec<f64> = ledgers.iter().filter_map(|l| l.get(k)).map(|r| r.trigger).collect();
        if xs.is_empty() || k >= c0.len() {
            continue;
        }
        let (mean, std) = mean_std(&xs);
        let stderr = std / (xs.len() as f64).sqrt();
        let initial = c0[k];
        let pass = (mean - initial).abs() <= (2.0 * stderr).max(0.05 * initial.abs());
        samples.push(TriggerSample { t: ledgers[0][k].t, mean, stderr, initial, pass });
    }
    let last: Vec<&LedgerStep> = ledgers.iter().filter_map(|l| l.last()).collect();
    let variation_ratio = match ledgers.first() {
        Some(l) if !l.is_empty() && !s0.is_empty() => {
            let base = s0[(l.len() - 1).min(s0.len() - 1)];
            let ms = last.iter().map(|x| (x.spot - base).powi(2)).sum::<f64>() / last.len() as f64;
            ms.sqrt() / base.abs()
        }
        _ => 0.0,
    };
    let pass = samples.iter().all(|s| s.pass);
    TriggerCheck { samples, variation_ratio, pass }
}

/// Small-variation ratio `sqrt(e^{σ0² T_e} - 1)` of a lognormal spot when `α T_e ≪ 1`.
pub fn variation_ratio_lognormal(sigma0: f64, t_e: f64) -> f64 {
    (sigma0 * sigma0 * t_e).exp_m1().sqrt()
}

pub fn write_ledger_csv(ledgers: &[(u64, &SimulationLedger)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "path,t,q,exercise,spot,trigger,dp,dp_trade,p,hedge,dh_rebalance,hedge_pnl")?;
    for (idx, l) in ledgers {
        for r in l.iter() {
            writeln!(
                w,
                "{idx},{},{},{},{},{},{},{},{},{},{},{}",
                r.t, r.q, r.exercise, r.spot, r.trigger, r.dp, r.dp_trade, r.p, r.hedge, r.dh_rebalance, r.hedge_pnl
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
