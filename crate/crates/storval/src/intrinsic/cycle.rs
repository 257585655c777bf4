//! Intake-cycle cap via a Lagrange multiplier on injected volume.
//!
//! The multiplier acts as an extra injection cost. The intake of the
//! penalized optimum is a nonincreasing step function of λ, so λ is found by
//! bisection; when the cap falls inside a jump, the two optimal trajectories
//! at the jump are blended (both maximize the same Lagrangian, so the blend
//! does too) until the cap is met with equality.

use super::trigger::solve_problem;
use super::{cycle_variable, IntrinsicSolution, Problem, StorageSpec, Terminal, Trajectory};
use crate::curves::ForwardCurve;
use crate::error::{invalid, Error, Result};

fn intake(sol: &IntrinsicSolution) -> f64 {
    *cycle_variable(&sol.trajectory).last().unwrap()
}

pub fn solve_with_cycle(curve: &ForwardCurve, spec: &StorageSpec) -> Result<IntrinsicSolution> {
    let c_max = spec.c_max.ok_or_else(|| invalid("cycle solve needs c_max"))?;
    if spec.rate_fn.is_some() {
        return Err(Error::Unsupported("cycle cap with volume-dependent rates".into()));
    }
    let base = Problem::new(curve, spec)?;
    let unconstrained = solve_problem(&base, 0, spec.q_start, 0.0)?;
    let lo_q = base.q_min.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_q = base.q_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let capacity = if (hi_q - lo_q).is_finite() && hi_q > lo_q { hi_q - lo_q } else { base.vol_scale };
    let tol = 1e-6 * capacity;
    if intake(&unconstrained) <= c_max + tol {
        return Ok(unconstrained);
    }

    let solve_at = |lambda: f64| -> Result<IntrinsicSolution> {
        let mut s = spec.clone();
        s.gamma_inj += lambda;
        s.c_max = None;
        let p = Problem::new(curve, &s)?;
        solve_problem(&p, 0, spec.q_start, lambda)
    };

    let effs: Vec<f64> = (0..base.n).map(|j| base.eff_price(j)).collect();
    let p_lo = effs.iter().copied().fold(f64::INFINITY, f64::min);
    let p_hi = effs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut span = p_hi - p_lo + spec.gamma_rel;
    if let Terminal::Free { f_e } = spec.terminal {
        span = span.max(f_e - p_lo);
    }
    let mut hi = span.max(0.0) + 1.0;
    let mut sol_hi = solve_at(hi)?;
    if intake(&sol_hi) > c_max + tol {
        return Err(Error::Infeasible(format!(
            "cycle cap {c_max} is below the unavoidable injection {}",
            intake(&sol_hi)
        )));
    }
    let mut lo = 0.0;
    let mut sol_lo = unconstrained;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s = solve_at(mid)?;
        if intake(&s) > c_max + tol {
            lo = mid;
            sol_lo = s;
        } else {
            hi = mid;
            sol_hi = s;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let c_hi = intake(&sol_hi);
    let rates = if c_hi >= c_max - tol {
        sol_hi.trajectory.rates.clone()
    } else {
        let blend = |theta: f64| -> Vec<f64> {
            sol_lo
                .trajectory
                .rates
                .iter()
                .zip(&sol_hi.trajectory.rates)
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect()
        };
        let c_of = |r: &[f64]| r.iter().map(|&x| x.max(0.0) * base.dt).sum::<f64>();
        let (mut t0, mut t1) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (t0 + t1);
            if c_of(&blend(mid)) > c_max {
                t0 = mid;
            } else {
                t1 = mid;
            }
        }
        blend(t1)
    };
    let traj = Trajectory::from_rates(base.times.clone(), spec.q_start, rates, base.dt);
    base.check(0, Some(spec.q_start), &traj)?;
    let value = base.value(0, &traj);
    Ok(IntrinsicSolution { trajectory: traj, value, lambda, ..sol_hi })
}
