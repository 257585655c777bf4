//! Boundary-touch conditions, dead-zone crossings and trigger-curve reconstruction.

use serde::Serialize;

use super::{IntrinsicSolution, Problem, StorageSpec};
use crate::curves::{zero_crossings, ForwardCurve};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Lower,
    Upper,
}

/// `Left`: the trajectory arrives at the boundary; `Right`: it leaves it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Touch {
    pub time: f64,
    pub boundary: Boundary,
    pub side: Side,
    pub satisfied: bool,
    /// `F(t*)` minus the dead-zone edge the case requires.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TouchReport {
    pub touches: Vec<Touch>,
}

impl TouchReport {
    pub fn all_satisfied(&self) -> bool {
        self.touches.iter().all(|t| t.satisfied)
    }
}

/// Dead-zone edge crossings of the curve for a per-bucket trigger path.
pub(crate) fn crossings_for(p: &Problem, offset: usize, trigger_path: &[f64]) -> Vec<f64> {
    let m = trigger_path.len();
    if m == 0 {
        return Vec::new();
    }
    let xs = &p.times[offset..];
    let trig = |i: usize| trigger_path[i.min(m - 1)];
    let mut out = Vec::new();
    let edges: &[f64] = if p.spec.gamma_inj == 0.0 && p.spec.gamma_rel == 0.0 {
        &[0.0]
    } else {
        &[-1.0, 1.0]
    };
    for &side in edges {
        let g: Vec<f64> = (0..=m)
            .map(|i| {
                let c = trig(i);
                let e = if side < 0.0 { c - p.spec.gamma_inj } else if side > 0.0 { c + p.spec.gamma_rel } else { c };
                p.prices[offset + i] - e
            })
            .collect();
        out.extend(zero_crossings(xs, &g));
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// Dead-zone edge crossings of a solution's trigger path.
pub fn trigger_crossings(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec) -> Result<Vec<f64>> {
    let p = Problem::new(curve, spec)?;
    Ok(crossings_for(&p, sol.offset, &sol.trigger_path))
}

pub fn validate_touch_conditions(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec) -> Result<TouchReport> {
    let p = Problem::new(curve, spec)?;
    let off = sol.offset;
    let vol = &sol.trajectory.volumes;
    let m = vol.len() - 1;
    let tol = p.vol_tol();
    let status = |i: usize| {
        let k = off + i;
        if p.q_min[k] == p.q_max[k] {
            None
        } else if (vol[i] - p.q_min[k]).abs() <= tol {
            Some(Boundary::Lower)
        } else if (vol[i] - p.q_max[k]).abs() <= tol {
            Some(Boundary::Upper)
        } else {
            None
        }
    };
    // The discrete touch node is itself uncertain by one step, so allow the
    // price movement over the steps on either side of it.
    let price_tol = |k: usize| {
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(p.n);
        let mv = (lo..hi).map(|j| (p.prices[j + 1] - p.prices[j]).abs()).fold(0.0, f64::max);
        mv + 1e-9 * p.price_scale
    };
    let slope_tol = 1e-9 * p.price_scale / p.dt;
    let mut report = TouchReport::default();
    let mut check = |i: usize, bucket: usize, boundary: Boundary, side: Side| {
        let k = off + i;
        let c = sol.trigger_path[bucket];
        let (edge, wants_rising) = match (boundary, side) {
            (Boundary::Lower, Side::Left) => (c + spec.gamma_rel, false),
            (Boundary::Upper, Side::Left) => (c - spec.gamma_inj, true),
            (Boundary::Lower, Side::Right) => (c - spec.gamma_inj, false),
            (Boundary::Upper, Side::Right) => (c + spec.gamma_rel, true),
        };
        let residual = p.prices[k] - edge;
        let slope = curve.slope(k);
        let slope_ok = if wants_rising { slope >= -slope_tol } else { slope <= slope_tol };
        report.touches.push(Touch {
            time: p.times[k],
            boundary,
            side,
            satisfied: residual.abs() <= price_tol(k) && slope_ok,
            residual,
        });
    };
    let mut i = 0;
    while i <= m {
        let Some(b) = status(i) else {
            i += 1;
            continue;
        };
        let i1 = i;
        while i < m && status(i + 1) == Some(b) {
            i += 1;
        }
        let i2 = i;
        if i1 > 0 && i1 < m {
            check(i1, i1 - 1, b, Side::Left);
        }
        if i2 > 0 && i2 < m {
            check(i2, i2, b, Side::Right);
        }
        i += 1;
    }
    Ok(report)
}

/// Trigger price per bucket obtained by integrating the trigger ODE forward
/// from each segment's starting value: growth at the carry rate, plus the
/// rate-sensitivity term `-r'(q) (C - F - γ'(q̇))` on injection and release
/// legs, which are taken to run at their volume-dependent limit.
pub fn reconstruct_trigger_curve(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec) -> Result<Vec<f64>> {
    let p = Problem::new(curve, spec)?;
    let off = sol.offset;
    let tr = &sol.trajectory;
    let m = tr.rates.len();
    let mut out = vec![0.0; m];
    for seg in &sol.segments {
        let mut c = sol.trigger_path[seg.start - off];
        for k in seg.start..seg.end {
            let i = k - off;
            out[i] = c;
            if k + 1 >= seg.end {
                break;
            }
            let mut dc = p.carry[k + 1];
            if let Some(table) = &spec.rate_fn {
                let q = tr.volumes[i + 1];
                let r = tr.rates[i + 1];
                let (dlo, dhi) = table.slopes(q);
                let eps = 1e-9 * (1.0 + r.abs());
                let (dr, gp) = if r > eps {
                    (dhi, spec.gamma_inj)
                } else if r < -eps {
                    (dlo, -spec.gamma_rel)
                } else {
                    (0.0, 0.0)
                };
                dc -= dr * (c - p.prices[k + 1] - gp);
            }
            c += dc * p.dt;
        }
    }
    Ok(out)
}
