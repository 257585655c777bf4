//! Deterministic storage optimization under a frozen forward curve.
//!
//! Two independent solvers: [`solve_dp`] (backward induction on a volume
//! lattice) and [`solve_trigger`] (bang-bang rule with per-segment trigger
//! prices). They are cross-checked against each other in the test suite.

mod cycle;
mod dp;
mod touch;
mod trigger;

use serde::{Deserialize, Serialize};

use crate::curves::ForwardCurve;
use crate::error::{invalid, Error, Result};

pub use cycle::solve_with_cycle;
pub use dp::{dp_grid_bound, solve_dp, solve_dp_detailed, DpSolution};
pub use touch::{reconstruct_trigger_curve, trigger_crossings, validate_touch_conditions, Boundary, Side, Touch, TouchReport};
pub use trigger::{solve_trigger, solve_trigger_tail};
pub(crate) use trigger::solve_problem;

/// A value that is either constant in time or given per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Const(f64),
    Steps(Vec<f64>),
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Const(0.0)
    }
}

impl Profile {
    /// Expand to `len` values. A step profile of length `len + 1` is truncated
    /// so that node-based tables can be reused for per-bucket quantities.
    pub fn resolve(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Profile::Const(v) => Ok(vec![*v; len]),
            Profile::Steps(v) if v.len() == len => Ok(v.clone()),
            Profile::Steps(v) if v.len() == len + 1 => Ok(v[..len].to_vec()),
            Profile::Steps(v) => Err(invalid(format!("{what} has {} entries, expected {len}", v.len()))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Const(v) => *v == 0.0,
            Profile::Steps(v) => v.iter().all(|&x| x == 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Terminal {
    Fixed { q_end: f64 },
    /// Free end volume valued at `f_e` per unit (`f_e = 0` for swing contracts).
    Free { f_e: f64 },
}

/// Volume-dependent rate limits, piecewise linear in volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub volumes: Vec<f64>,
    pub r_min: Vec<f64>,
    pub r_max: Vec<f64>,
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        let n = self.volumes.len();
        if n < 2 || self.r_min.len() != n || self.r_max.len() != n {
            return Err(invalid("rate table needs at least 2 rows of equal length"));
        }
        if self.volumes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("rate table volumes must be strictly increasing"));
        }
        if self.r_min.iter().zip(&self.r_max).any(|(a, b)| a > b) {
            return Err(invalid("rate table has r_min > r_max"));
        }
        Ok(())
    }

    pub fn bounds(&self, q: f64) -> (f64, f64) {
        (
            crate::curves::interpolate(&self.volumes, &self.r_min, q),
            crate::curves::interpolate(&self.volumes, &self.r_max, q),
        )
    }

    /// Derivatives d r_min/dq and d r_max/dq (zero outside the table).
    pub fn slopes(&self, q: f64) -> (f64, f64) {
        let v = &self.volumes;
        let n = v.len();
        if q < v[0] || q > v[n - 1] {
            return (0.0, 0.0);
        }
        let i = v.partition_point(|&x| x <= q).clamp(1, n - 1);
        let h = v[i] - v[i - 1];
        ((self.r_min[i] - self.r_min[i - 1]) / h, (self.r_max[i] - self.r_max[i - 1]) / h)
    }
}

fn zero() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSpec {
    pub q_min: Profile,
    pub q_max: Profile,
    pub r_min: f64,
    pub r_max: f64,
    pub q_start: f64,
    pub terminal: Terminal,
    #[serde(default = "zero")]
    pub gamma_inj: f64,
    #[serde(default = "zero")]
    pub gamma_rel: f64,
    #[serde(default)]
    pub gamma_carry: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_fn: Option<RateTable>,
}

impl StorageSpec {
    /// Constant-bound storage with zero costs.
    pub fn simple(q_min: f64, q_max: f64, r_min: f64, r_max: f64, q_start: f64, terminal: Terminal) -> Self {
        StorageSpec {
            q_min: Profile::Const(q_min),
            q_max: Profile::Const(q_max),
            r_min,
            r_max,
            q_start,
            terminal,
            gamma_inj: 0.0,
            gamma_rel: 0.0,
            gamma_carry: Profile::Const(0.0),
            c_max: None,
            rate_fn: None,
        }
    }

    pub fn rate_bounds(&self, q: f64) -> (f64, f64) {
        match &self.rate_fn {
            Some(t) => t.bounds(q),
            None => (self.r_min, self.r_max),
        }
    }

    /// Operating cost γ(r) per unit time.
    pub fn op_cost(&self, r: f64) -> f64 {
        if r > 0.0 {
            self.gamma_inj * r
        } else {
            -self.gamma_rel * r
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite")))
            }
        };
        finite(self.r_min, "r_min")?;
        finite(self.r_max, "r_max")?;
        finite(self.q_start, "q_start")?;
        if self.r_min > self.r_max {
            return Err(invalid(format!("r_min {} exceeds r_max {}", self.r_min, self.r_max)));
        }
        if !(self.gamma_inj >= 0.0 && self.gamma_rel >= 0.0) {
            return Err(invalid("operating costs must be nonnegative"));
        }
        if let Terminal::Fixed { q_end } = self.terminal {
            finite(q_end, "q_end")?;
        }
        if let Terminal::Free { f_e } = self.terminal {
            finite(f_e, "f_e")?;
        }
        if let Some(c) = self.c_max {
            if !(c >= 0.0) {
                return Err(invalid("c_max must be nonnegative"));
            }
        }
        if let Some(t) = &self.rate_fn {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Node times, one more than the number of rates.
    pub times: Vec<f64>,
    pub volumes: Vec<f64>,
    pub rates: Vec<f64>,
}

impl Trajectory {
    pub fn from_rates(times: Vec<f64>, q0: f64, rates: Vec<f64>, dt: f64) -> Self {
        let mut volumes = Vec::with_capacity(rates.len() + 1);
        let mut q = q0;
        volumes.push(q);
        for &r in &rates {
            q += r * dt;
            volumes.push(q);
        }
        Trajectory { times, volumes, rates }
    }

    pub fn zero(times: Vec<f64>, q0: f64) -> Self {
        let n = times.len() - 1;
        let dt = if n > 0 { times[1] - times[0] } else { 0.0 };
        Trajectory::from_rates(times, q0, vec![0.0; n], dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// First bucket of the segment.
    pub start: usize,
    /// One past the last bucket.
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Trigger price at the segment start.
    pub trigger: f64,
    /// Trigger price at the segment end node (differs from `trigger` only with carry cost).
    pub trigger_end: f64,
    pub dead_zone: (f64, f64),
    /// Trigger values at the segment start that reproduce the segment's
    /// decisions. A single point unless the requirement is met on a breakpoint.
    pub bracket: (f64, f64),
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicSolution {
    /// Index of the first bucket covered; nonzero for tail re-solves.
    pub offset: usize,
    pub trajectory: Trajectory,
    pub value: f64,
    pub segments: Vec<Segment>,
    /// Trigger price per bucket.
    pub trigger_path: Vec<f64>,
    pub trigger_times: Vec<f64>,
    pub lambda: f64,
    pub plateau: bool,
}

impl IntrinsicSolution {
    pub fn segment_at(&self, bucket: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.start <= bucket && bucket < s.end)
    }
}

/// The bang-bang rule for a single bucket. Prices exactly on a dead-zone edge do nothing.
pub fn exercise_rule(f: f64, c: f64, spec: &StorageSpec) -> f64 {
    let idle = 0.0_f64.clamp(spec.r_min, spec.r_max);
    if f > c + spec.gamma_rel {
        spec.r_min
    } else if f < c - spec.gamma_inj {
        spec.r_max
    } else {
        idle
    }
}

/// Cumulative injected volume c(T_k) at every node.
pub fn cycle_variable(traj: &Trajectory) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.volumes.len());
    let mut c = 0.0;
    out.push(c);
    for (k, &r) in traj.rates.iter().enumerate() {
        if r > 0.0 {
            c += traj.volumes[k + 1] - traj.volumes[k];
        }
        out.push(c);
    }
    out
}

/// Grid-resolved problem data shared by the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub spec: &'a StorageSpec,
    pub n: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub carry: Vec<f64>,
    /// `carry_tail[j] = sum_{k>j} carry[k] * dt`; zero at the last bucket and the end node.
    pub carry_tail: Vec<f64>,
    pub vol_scale: f64,
    pub price_scale: f64,
}

impl<'a> Problem<'a> {
    pub fn new(curve: &ForwardCurve, spec: &'a StorageSpec) -> Result<Self> {
        spec.validate()?;
        let dt = curve.uniform_step()?;
        let n = curve.len() - 1;
        let q_min = spec.q_min.resolve(n + 1, "q_min")?;
        let q_max = spec.q_max.resolve(n + 1, "q_max")?;
        let carry = spec.gamma_carry.resolve(n, "gamma_carry")?;
        for k in 0..=n {
            if q_min[k] > q_max[k] || q_min[k].is_nan() || q_max[k].is_nan() {
                return Err(invalid(format!("q_min > q_max at node {k}")));
            }
        }
        if carry.iter().any(|c| !c.is_finite()) {
            return Err(invalid("carry cost must be finite"));
        }
        for k in 0..n {
            for (name, b) in [("q_min", &q_min), ("q_max", &q_max)] {
                if b[k].is_finite() && b[k + 1].is_finite() {
                    let speed = (b[k + 1] - b[k]) / dt;
                    let tol = 1e-9 * (1.0 + speed.abs());
                    if speed < spec.r_min - tol || speed > spec.r_max + tol {
                        return Err(Error::Unsupported(format!(
                            "{name} moves at rate {speed} near node {k}, outside the rate limits; no trajectory can follow it"
                        )));
                    }
                }
            }
        }
        if spec.q_start < q_min[0] || spec.q_start > q_max[0] {
            return Err(invalid(format!("q_start {} outside the volume bounds", spec.q_start)));
        }
        let mut carry_tail = vec![0.0; n + 1];
        for j in (0..n.saturating_sub(1)).rev() {
            carry_tail[j] = carry_tail[j + 1] + carry[j + 1] * dt;
        }
        let vol_scale = q_min
            .iter()
            .chain(&q_max)
            .filter(|v| v.is_finite())
            .fold(spec.q_start.abs().max(1.0), |a, &b| a.max(b.abs()));
        let price_scale = curve.prices.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
        Ok(Problem {
            spec,
            n,
            dt,
            times: curve.deliveries.clone(),
            prices: curve.prices.clone(),
            q_min,
            q_max,
            carry,
            carry_tail,
            vol_scale,
            price_scale,
        })
    }

    pub fn vol_tol(&self) -> f64 {
        1e-9 * self.vol_scale
    }

    /// Effective price of bucket `j` once future carry is folded in.
    pub fn eff_price(&self, j: usize) -> f64 {
        self.prices[j] + self.carry_tail[j]
    }

    pub fn value(&self, offset: usize, traj: &Trajectory) -> f64 {
        let spec = self.spec;
        let mut v = 0.0;
        for (i, &r) in traj.rates.iter().enumerate() {
            let k = offset + i;
            v -= (r * self.prices[k] + spec.op_cost(r) + self.carry[k] * traj.volumes[i]) * self.dt;
        }
        if let Terminal::Free { f_e } = spec.terminal {
            v += traj.volumes[traj.volumes.len() - 1] * f_e;
        }
        v
    }

    pub fn check(&self, offset: usize, q0: Option<f64>, traj: &Trajectory) -> Result<()> {
        let m = self.n - offset;
        if traj.rates.len() != m || traj.volumes.len() != m + 1 {
            return Err(invalid(format!(
                "trajectory has {} rates, expected {m}",
                traj.rates.len()
            )));
        }
        let tol = self.vol_tol();
        if let Some(q0) = q0 {
            if (traj.volumes[0] - q0).abs() > tol {
                return Err(Error::Constraint { step: offset, msg: format!("start volume {} != {q0}", traj.volumes[0]) });
            }
        }
        for i in 0..=m {
            let k = offset + i;
            let q = traj.volumes[i];
            if q < self.q_min[k] - tol || q > self.q_max[k] + tol {
                return Err(Error::Constraint { step: k, msg: format!("volume {q} outside [{}, {}]", self.q_min[k], self.q_max[k]) });
            }
            if i < m {
                let r = traj.rates[i];
                let (lo, hi) = self.spec.rate_bounds(q);
                let rtol = 1e-9 * (1.0 + r.abs());
                if r < lo - rtol || r > hi + rtol {
                    return Err(Error::Constraint { step: k, msg: format!("rate {r} outside [{lo}, {hi}]") });
                }
                if (traj.volumes[i + 1] - q - r * self.dt).abs() > tol {
                    return Err(Error::Constraint { step: k, msg: "volume does not follow the rate".into() });
                }
            }
        }
        if let Terminal::Fixed { q_end } = self.spec.terminal {
            if (traj.volumes[m] - q_end).abs() > tol {
                return Err(Error::Constraint { step: self.n, msg: format!("end volume {} != {q_end}", traj.volumes[m]) });
            }
        }
        Ok(())
    }
}

/// Cash-flow value of a trajectory. Tail trajectories (fewer rates than buckets)
/// are valued over the buckets they cover.
pub fn value_of(traj: &Trajectory, curve: &ForwardCurve, spec: &StorageSpec) -> Result<f64> {
    let p = Problem::new(curve, spec)?;
    if traj.rates.len() > p.n {
        return Err(invalid("trajectory longer than the curve"));
    }
    let offset = p.n - traj.rates.len();
    p.check(offset, (offset == 0).then_some(spec.q_start), traj)?;
    Ok(p.value(offset, traj))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub value: f64,
    /// The derivative is set-valued (plateau in the trigger price); `value` is the plateau midpoint.
    pub set_valued: bool,
}

/// dS/dq_end: `-C` of the final segment, or `F_e - C` for a free end.
pub fn sensitivity_qend(sol: &IntrinsicSolution, spec: &StorageSpec) -> Sensitivity {
    let last = sol.segments.last().expect("solution has segments");
    let value = match spec.terminal {
        Terminal::Fixed { .. } => -last.trigger_end,
        Terminal::Free { f_e } => f_e - last.trigger_end,
    };
    Sensitivity { value, set_valued: last.plateau }
}

/// dS/dq_start: the first segment's trigger net of the carry paid over the first bucket.
pub fn sensitivity_qstart(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec) -> Result<Sensitivity> {
    let p = Problem::new(curve, spec)?;
    let first = &sol.segments[0];
    let k = sol.offset;
    Ok(Sensitivity { value: first.trigger - p.carry[k] * p.dt, set_valued: first.plateau })
}

/// Per-bucket trigger bracket from the exercised rate, in effective-price terms.
pub(crate) fn rate_bracket(r: f64, p_eff: f64, spec: &StorageSpec) -> (f64, f64) {
    let (r_min, r_max) = (spec.r_min, spec.r_max);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let eps = 1e-9 * (1.0 + r_max.abs().max(r_min.abs()));
    let neg_top = r_max.min(0.0);
    if r_min < neg_top {
        let p = p_eff - spec.gamma_rel;
        if r >= neg_top - eps {
            lo = lo.max(p);
        } else if r <= r_min + eps {
            hi = hi.min(p);
        } else {
            return (f64::NAN, f64::NAN);
        }
    }
    let pos_bot = r_min.max(0.0);
    if pos_bot < r_max {
        let p = p_eff + spec.gamma_inj;
        if r >= r_max - eps {
            lo = lo.max(p);
        } else if r <= pos_bot + eps {
            hi = hi.min(p);
        } else {
            return (f64::NAN, f64::NAN);
        }
    }
    (lo, hi)
}

pub(crate) fn pick_in_bracket(lo: f64, hi: f64, fallback: f64) -> (f64, bool) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (0.5 * (lo + hi), false),
        (true, false) => (lo + 1e-6 * (1.0 + lo.abs()), true),
        (false, true) => (hi - 1e-6 * (1.0 + hi.abs()), true),
        (false, false) => (fallback, true),
    }
}

/// Build segments and triggers for an arbitrary feasible trajectory by splitting
/// at interior boundary touches and intersecting the per-bucket trigger brackets.
pub(crate) fn analyze(p: &Problem, offset: usize, traj: Trajectory, lambda: f64) -> Result<IntrinsicSolution> {
    let q0 = if offset == 0 { Some(p.spec.q_start) } else { None };
    p.check(offset, q0, &traj)?;
    let m = p.n - offset;
    let tol = p.vol_tol();
    let on_bound = |i: usize| {
        let k = offset + i;
        let q = traj.volumes[i];
        (q - p.q_min[k]).abs() <= tol || (q - p.q_max[k]).abs() <= tol
    };
    let mut cuts = vec![0];
    for i in 1..m {
        if on_bound(i) {
            cuts.push(i);
        }
    }
    cuts.push(m);
    let mut segments = Vec::new();
    let mut trigger_path = vec![0.0; m];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut max_move: f64 = 0.0;
        let mut mean = 0.0;
        for i in a..b {
            let k = offset + i;
            let pe = p.eff_price(k);
            mean += pe / (b - a) as f64;
            max_move = max_move.max((p.prices[k + 1] - p.prices[k]).abs());
            let (l, h) = rate_bracket(traj.rates[i], pe, p.spec);
            if l.is_nan() {
                continue;
            }
            lo = lo.max(l);
            hi = hi.min(h);
        }
        let (c_eff, mut plateau) = if lo <= hi {
            pick_in_bracket(lo, hi, mean)
        } else {
            (0.5 * (lo + hi), false)
        };
        let bracket = if lo <= hi { (lo, hi) } else { (c_eff, c_eff) };
        if lo.is_finite() && hi.is_finite() && hi - lo > max_move + 1e-12 * p.price_scale {
            plateau = true;
        }
        for i in a..b {
            trigger_path[i] = c_eff - p.carry_tail[offset + i];
        }
        segments.push(make_segment(p, offset + a, offset + b, c_eff, plateau, bracket));
    }
    finish(p, offset, traj, segments, trigger_path, lambda)
}

pub(crate) fn make_segment(p: &Problem, start: usize, end: usize, c_eff: f64, plateau: bool, bracket: (f64, f64)) -> Segment {
    let g = p.carry_tail[start];
    let trigger = c_eff - g;
    Segment {
        start,
        end,
        t_start: p.times[start],
        t_end: p.times[end],
        trigger,
        trigger_end: c_eff - p.carry_tail[end],
        dead_zone: (trigger - p.spec.gamma_inj, trigger + p.spec.gamma_rel),
        bracket: (bracket.0 - g, bracket.1 - g),
        plateau,
    }
}

pub(crate) fn finish(
    p: &Problem,
    offset: usize,
    traj: Trajectory,
    segments: Vec<Segment>,
    trigger_path: Vec<f64>,
    lambda: f64,
) -> Result<IntrinsicSolution> {
    let value = p.value(offset, &traj);
    let trigger_times = touch::crossings_for(p, offset, &trigger_path);
    let plateau = segments.iter().any(|s| s.plateau);
    Ok(IntrinsicSolution { offset, trajectory: traj, value, segments, trigger_path, trigger_times, lambda, plateau })
}

/// Segment and trigger analysis of a user-supplied trajectory (full horizon or tail).
pub fn analyze_trajectory(traj: &Trajectory, curve: &ForwardCurve, spec: &StorageSpec) -> Result<IntrinsicSolution> {
    let p = Problem::new(curve, spec)?;
    if traj.rates.len() > p.n {
        return Err(invalid("trajectory longer than the curve"));
    }
    let offset = p.n - traj.rates.len();
    analyze(&p, offset, traj.clone(), 0.0)
}

/// Exercise decisions of the bang-bang rule with a per-bucket trigger, replayed from `q0`.
pub fn replay_rule(curve: &ForwardCurve, spec: &StorageSpec, trigger: &[f64], offset: usize) -> Vec<f64> {
    trigger
        .iter()
        .enumerate()
        .map(|(i, &c)| exercise_rule(curve.prices[offset + i], c, spec))
        .collect()
}

/// Write a solution as delimited text: time, volume, rate, trigger.
pub fn write_solution_csv(sol: &IntrinsicSolution, mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "t,volume,rate,trigger")?;
    let tr = &sol.trajectory;
    for i in 0..tr.volumes.len() {
        let rate = tr.rates.get(i).copied();
        let trig = sol.trigger_path.get(i).copied().or_else(|| sol.segments.last().map(|s| s.trigger_end));
        match rate {
            Some(r) => writeln!(w, "{},{},{},{}", tr.times[i], tr.volumes[i], r, trig.unwrap_or(f64::NAN))?,
            None => writeln!(w, "{},{},,{}", tr.times[i], tr.volumes[i], trig.unwrap_or(f64::NAN))?,
        }
    }
    Ok(())
}
