//! Trigger-price solver.
//!
//! Between boundary touches the optimum is bang-bang around a single trigger
//! price. With constant rates, finding that price for a given volume
//! requirement is a fractional knapsack: every bucket offers a "stop
//! releasing" item at cost `p - γ_rel` and an "inject" item at cost `p + γ_inj`,
//! and the trigger is the cost at which the required volume is filled. This is
//! the bisection over the (monotone, piecewise-constant) terminal-volume map,
//! carried out exactly on its breakpoints. Segments are split where the
//! unconstrained solution exits the feasible tube by the largest margin.

use super::{finish, make_segment, pick_in_bracket, IntrinsicSolution, Problem, Terminal, Trajectory};
use crate::curves::ForwardCurve;
use crate::error::{Error, Result};
use crate::intrinsic::StorageSpec;

pub fn solve_trigger(curve: &ForwardCurve, spec: &StorageSpec) -> Result<IntrinsicSolution> {
    solve_trigger_tail(curve, spec, 0, spec.q_start)
}

/// Re-solve over buckets `offset..n` starting from volume `q0` at node `offset`.
pub fn solve_trigger_tail(curve: &ForwardCurve, spec: &StorageSpec, offset: usize, q0: f64) -> Result<IntrinsicSolution> {
    if spec.rate_fn.is_some() {
        return Err(Error::Unsupported("volume-dependent rates need the lattice solver".into()));
    }
    let p = Problem::new(curve, spec)?;
    if offset >= p.n {
        return Err(Error::Invalid(format!("offset {offset} leaves no buckets")));
    }
    solve_problem(&p, offset, q0, 0.0)
}

#[derive(Debug, Clone, Copy)]
enum End {
    Fixed(f64),
    Free(f64),
}

struct Leaf {
    a: usize,
    b: usize,
    c_eff: f64,
    plateau: bool,
    bracket: (f64, f64),
}

pub(crate) fn solve_problem(p: &Problem, offset: usize, q0: f64, lambda: f64) -> Result<IntrinsicSolution> {
    let end = match p.spec.terminal {
        Terminal::Fixed { q_end } => End::Fixed(q_end),
        Terminal::Free { f_e } => End::Free(f_e),
    };
    let mut rates = vec![0.0; p.n];
    let mut leaves = Vec::new();
    let mut scratch = Scratch::default();
    solve_segment(p, offset, p.n, q0, end, &mut rates, &mut leaves, &mut scratch)?;
    let m = p.n - offset;
    let mut trigger_path = vec![0.0; m];
    let mut segments = Vec::with_capacity(leaves.len());
    for l in &leaves {
        for j in l.a..l.b {
            trigger_path[j - offset] = l.c_eff - p.carry_tail[j];
        }
        segments.push(make_segment(p, l.a, l.b, l.c_eff, l.plateau, l.bracket));
    }
    let traj = Trajectory::from_rates(p.times[offset..].to_vec(), q0, rates[offset..].to_vec(), p.dt);
    finish(p, offset, traj, segments, trigger_path, lambda)
}

#[derive(Default)]
struct Scratch {
    items: Vec<Item>,
}

#[derive(Clone, Copy)]
struct Item {
    cost: f64,
    bucket: usize,
    /// 0: stop-releasing part, 1: injecting part.
    kind: u8,
    width: f64,
}

#[allow(clippy::too_many_arguments)]
fn solve_segment(
    p: &Problem,
    a: usize,
    b: usize,
    q_a: f64,
    end: End,
    rates: &mut [f64],
    leaves: &mut Vec<Leaf>,
    scratch: &mut Scratch,
) -> Result<()> {
    let (lo, hi) = tube(p, a, b, q_a, end)?;
    let (c_eff, plateau, bracket) = match end {
        End::Fixed(q_b) => knapsack(p, a, b, q_b - q_a, rates, scratch)?,
        End::Free(f_e) => {
            free_rates(p, a, b, f_e, rates);
            (f_e, false, (f_e, f_e))
        }
    };

    let tol = p.vol_tol();
    let last = match end {
        End::Fixed(_) => b - 1,
        End::Free(_) => b,
    };
    let mut q = q_a;
    let mut worst: Option<(usize, f64, f64)> = None;
    for k in a + 1..=last {
        q += rates[k - 1] * p.dt;
        let i = k - a;
        let (v, edge) = if q > hi[i] { (q - hi[i], hi[i]) } else { (lo[i] - q, lo[i]) };
        if v > tol && worst.is_none_or(|w| v > w.1) {
            worst = Some((k, v, edge));
        }
    }
    match worst {
        None => {
            leaves.push(Leaf { a, b, c_eff, plateau, bracket });
            Ok(())
        }
        Some((tau, _, edge)) => {
            solve_segment(p, a, tau, q_a, End::Fixed(edge), rates, leaves, scratch)?;
            if tau < b {
                solve_segment(p, tau, b, edge, end, rates, leaves, scratch)?;
            }
            Ok(())
        }
    }
}

/// Feasible volume band at nodes `a..=b` given the start volume and end condition.
fn tube(p: &Problem, a: usize, b: usize, q_a: f64, end: End) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r_min, r_max, dt) = (p.spec.r_min, p.spec.r_max, p.dt);
    let len = b - a + 1;
    let mut lo = vec![0.0; len];
    let mut hi = vec![0.0; len];
    lo[0] = q_a;
    hi[0] = q_a;
    for i in 1..len {
        let k = a + i;
        lo[i] = (lo[i - 1] + r_min * dt).max(p.q_min[k]);
        hi[i] = (hi[i - 1] + r_max * dt).min(p.q_max[k]);
    }
    let (mut blo, mut bhi) = match end {
        End::Fixed(q_b) => (q_b, q_b),
        End::Free(_) => (p.q_min[b], p.q_max[b]),
    };
    let tol = p.vol_tol();
    for i in (0..len).rev() {
        let k = a + i;
        if i + 1 < len {
            blo = (blo - r_max * dt).max(p.q_min[k]);
            bhi = (bhi - r_min * dt).min(p.q_max[k]);
        }
        lo[i] = lo[i].max(blo);
        hi[i] = hi[i].min(bhi);
        if lo[i] > hi[i] + tol {
            return Err(Error::Infeasible("terminal volume unreachable under the rate and volume limits".into()));
        }
        if lo[i] > hi[i] {
            let m = 0.5 * (lo[i] + hi[i]);
            lo[i] = m;
            hi[i] = m;
        }
    }
    Ok((lo, hi))
}

fn free_rates(p: &Problem, a: usize, b: usize, c: f64, rates: &mut [f64]) {
    let s = p.spec;
    let neg_top = s.r_max.min(0.0);
    let pos_bot = s.r_min.max(0.0);
    for j in a..b {
        let pe = p.eff_price(j);
        let mut r = s.r_min;
        if s.r_min < neg_top && pe - s.gamma_rel <= c {
            r = neg_top;
        }
        if pos_bot < s.r_max && pe + s.gamma_inj < c {
            r = s.r_max;
        }
        rates[j] = r;
    }
}

/// Fill the volume requirement `d = q_b - q_a` over buckets `a..b` at least cost.
/// Returns the effective trigger, its plateau flag and the admissible trigger range.
fn knapsack(p: &Problem, a: usize, b: usize, d: f64, rates: &mut [f64], scratch: &mut Scratch) -> Result<(f64, bool, (f64, f64))> {
    let s = p.spec;
    let dt = p.dt;
    let neg_top = s.r_max.min(0.0);
    let pos_bot = s.r_min.max(0.0);
    let items = &mut scratch.items;
    items.clear();
    let mut total = 0.0;
    let mut max_move: f64 = 0.0;
    for j in a..b {
        let pe = p.eff_price(j);
        max_move = max_move.max((p.prices[j + 1] - p.prices[j]).abs());
        if s.r_min < neg_top {
            let w = (neg_top - s.r_min) * dt;
            items.push(Item { cost: pe - s.gamma_rel, bucket: j, kind: 0, width: w });
            total += w;
        }
        if pos_bot < s.r_max {
            let w = (s.r_max - pos_bot) * dt;
            items.push(Item { cost: pe + s.gamma_inj, bucket: j, kind: 1, width: w });
            total += w;
        }
        rates[j] = s.r_min;
    }
    let base = s.r_min * dt * (b - a) as f64;
    let tol = p.vol_tol();
    let need = d - base;
    if need < -tol || need > total + tol {
        return Err(Error::Infeasible("terminal volume unreachable under the rate limits".into()));
    }
    let need = need.clamp(0.0, total);
    items.sort_unstable_by(|x, y| {
        x.cost
            .total_cmp(&y.cost)
            .then(x.kind.cmp(&y.kind))
            .then(x.bucket.cmp(&y.bucket))
    });

    let ptol = 1e-10 * p.vol_scale;
    let mut cum = 0.0;
    let mut i = 0;
    while i < items.len() && cum + items[i].width <= need + ptol {
        cum += items[i].width;
        take(rates, &items[i], s, 1.0);
        i += 1;
    }
    let rem = need - cum;
    if rem <= ptol {
        // Requirement met on a breakpoint: any trigger strictly between the
        // neighbouring costs reproduces the same decisions.
        if rem < 0.0 && i > 0 {
            let it = items[i - 1];
            take(rates, &it, s, (it.width + rem) / it.width);
        } else if rem > 0.0 && i < items.len() {
            let it = items[i];
            take(rates, &it, s, rem / it.width);
        }
        let prev = if i > 0 { items[i - 1].cost } else { f64::NEG_INFINITY };
        let next = if i < items.len() { items[i].cost } else { f64::INFINITY };
        if prev == next {
            return Ok((prev, false, (prev, prev)));
        }
        let (c, unbounded) = pick_in_bracket(prev, next, p.eff_price(a));
        let wide = next - prev > max_move + 1e-12 * p.price_scale;
        Ok((c, unbounded || wide, (prev, next)))
    } else {
        let it = items[i];
        take(rates, &it, s, rem / it.width);
        Ok((it.cost, false, (it.cost, it.cost)))
    }
}

fn take(rates: &mut [f64], it: &Item, s: &StorageSpec, frac: f64) {
    let neg_top = s.r_max.min(0.0);
    let pos_bot = s.r_min.max(0.0);
    let j = it.bucket;
    rates[j] = match (it.kind, frac >= 1.0) {
        (0, true) => neg_top,
        (0, false) => s.r_min + frac * (neg_top - s.r_min),
        (_, true) => s.r_max,
        (_, false) => pos_bot + frac * (s.r_max - pos_bot),
    };
}
