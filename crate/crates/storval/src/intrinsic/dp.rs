//! Backward induction on a uniform volume lattice.
//!
//! Reference solver: it knows nothing about trigger prices. Actions are all
//! lattice moves reachable within the (possibly volume-dependent) rate limits.
//! When `r*dt`, the start/end volumes and the bounds sit on the lattice, the
//! lattice optimum equals the continuous one.

use super::{analyze, IntrinsicSolution, Problem, Terminal, Trajectory};
use crate::curves::ForwardCurve;
use crate::error::{invalid, Error, Result};
use crate::intrinsic::StorageSpec;

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub solution: IntrinsicSolution,
    pub levels: Vec<f64>,
    /// Value function per node on the lattice (`-inf` where unreachable).
    pub values: Vec<Vec<f64>>,
    /// dV/dq at the next node along the optimal path: the price that separates
    /// injecting from releasing in each bucket.
    pub slope: Vec<f64>,
}

pub fn solve_dp(curve: &ForwardCurve, spec: &StorageSpec, n_volume_levels: usize) -> Result<IntrinsicSolution> {
    Ok(solve_dp_detailed(curve, spec, n_volume_levels)?.solution)
}

fn on_grid(q: f64, q_lo: f64, h: f64, n_levels: usize, what: &str) -> Result<usize> {
    let x = (q - q_lo) / h;
    let i = x.round();
    if (x - i).abs() > 1e-7 || i < 0.0 || i as usize >= n_levels {
        return Err(invalid(format!("{what} {q} is not on the volume lattice (pitch {h})")));
    }
    Ok(i as usize)
}

pub fn solve_dp_detailed(curve: &ForwardCurve, spec: &StorageSpec, n_volume_levels: usize) -> Result<DpSolution> {
    if n_volume_levels < 2 {
        return Err(invalid("need at least 2 volume levels"));
    }
    let p = Problem::new(curve, spec)?;
    let n = p.n;
    let dt = p.dt;
    let q_lo = p.q_min.iter().copied().fold(f64::INFINITY, f64::min);
    let q_hi = p.q_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !q_lo.is_finite() || !q_hi.is_finite() {
        return Err(invalid("the lattice solver needs finite volume bounds"));
    }
    let n_levels = n_volume_levels;
    let h = if q_hi > q_lo { (q_hi - q_lo) / (n_levels - 1) as f64 } else { 1.0 };
    let n_levels = if q_hi > q_lo { n_levels } else { 1 };
    let levels: Vec<f64> = (0..n_levels).map(|i| q_lo + i as f64 * h).collect();
    let i0 = on_grid(spec.q_start, q_lo, h, n_levels, "q_start")?;

    let htol = 1e-9 * h;
    let allowed = |k: usize, i: usize| levels[i] >= p.q_min[k] - htol && levels[i] <= p.q_max[k] + htol;

    let mut values = vec![vec![f64::NEG_INFINITY; n_levels]; n + 1];
    match spec.terminal {
        Terminal::Fixed { q_end } => {
            let ie = on_grid(q_end, q_lo, h, n_levels, "q_end")?;
            if allowed(n, ie) {
                values[n][ie] = 0.0;
            }
        }
        Terminal::Free { f_e } => {
            for i in 0..n_levels {
                if allowed(n, i) {
                    values[n][i] = levels[i] * f_e;
                }
            }
        }
    }

    let tie = 1e-12 * p.price_scale * p.vol_scale;
    let mut policy = vec![vec![0i32; n_levels]; n];
    for k in (0..n).rev() {
        let (head, tail) = values.split_at_mut(k + 1);
        let next = &tail[0];
        let cur = &mut head[k];
        let f = p.prices[k];
        let carry = p.carry[k] * dt;
        for i in 0..n_levels {
            if !allowed(k, i) {
                continue;
            }
            let q = levels[i];
            let (r_lo, r_hi) = spec.rate_bounds(q);
            let d_min = (r_lo * dt / h - 1e-9).ceil() as i64;
            let d_max = (r_hi * dt / h + 1e-9).floor() as i64;
            let j_min = (i as i64 + d_min).max(0);
            let j_max = (i as i64 + d_max).min(n_levels as i64 - 1);
            let mut best = f64::NEG_INFINITY;
            let mut best_d = i64::MAX;
            for j in j_min..=j_max {
                let vn = next[j as usize];
                if vn == f64::NEG_INFINITY {
                    continue;
                }
                let d = j - i as i64;
                let dq = d as f64 * h;
                let r = dq / dt;
                let v = vn - (dq * f + spec.op_cost(r) * dt + carry * q);
                if v > best + tie || (v >= best - tie && d.abs() < best_d.abs()) {
                    best = v;
                    best_d = d;
                }
            }
            if best_d != i64::MAX {
                cur[i] = best;
                policy[k][i] = best_d as i32;
            }
        }
    }
    if values[0][i0] == f64::NEG_INFINITY {
        return Err(Error::Infeasible("terminal volume unreachable under the rate and volume limits".into()));
    }

    let mut rates = Vec::with_capacity(n);
    let mut idx = Vec::with_capacity(n + 1);
    let mut i = i0;
    idx.push(i);
    for row in policy.iter() {
        let d = row[i] as i64;
        rates.push(d as f64 * h / dt);
        i = (i as i64 + d) as usize;
        idx.push(i);
    }
    let slope: Vec<f64> = (0..n)
        .map(|k| {
            let v = &values[k + 1];
            let j = idx[k + 1];
            let up = (j + 1 < n_levels && v[j + 1].is_finite()).then(|| (v[j + 1] - v[j]) / h);
            let dn = (j > 0 && v[j - 1].is_finite()).then(|| (v[j] - v[j - 1]) / h);
            match (up, dn) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => f64::NAN,
            }
        })
        .collect();

    let traj = Trajectory::from_rates(p.times.clone(), spec.q_start, rates, dt);
    let mut solution = analyze(&p, 0, traj, 0.0)?;
    if spec.rate_fn.is_some() {
        solution.trigger_path = slope.clone();
    }
    Ok(DpSolution { solution, levels, values, slope })
}

/// Upper bound on the gap between the lattice optimum and the continuous one.
pub fn dp_grid_bound(curve: &ForwardCurve, spec: &StorageSpec, n_volume_levels: usize) -> Result<f64> {
    let p = Problem::new(curve, spec)?;
    let q_lo = p.q_min.iter().copied().fold(f64::INFINITY, f64::min);
    let q_hi = p.q_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = (q_hi - q_lo) / (n_volume_levels.max(2) - 1) as f64;
    let total_var: f64 = p.prices.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let max_abs = p.prices.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let carry: f64 = p.carry.iter().map(|c| c.abs() * p.dt).sum();
    Ok(h * (total_var + 2.0 * max_abs + p.n as f64 * (spec.gamma_inj + spec.gamma_rel) + p.n as f64 * carry))
}
