//! Closed-form time values, trigger-sum drift formulas and delta-function identities.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curves::{ForwardCurve, SinusoidSpec};
use crate::error::{Error, Result};
use crate::intrinsic::{IntrinsicSolution, StorageSpec, Terminal};
use crate::process::{correlation, correlation_components, PriceProcessSpec};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Exponential integral `E1(z) = Γ(0, z)` for `z > 0`.
pub fn exp_integral_e1(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!("E1 needs a positive finite argument, got {z}")));
    }
    if z < 1.0 {
        // -γ - ln z - Σ (-z)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -z / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(-EULER_GAMMA - z.ln() - sum)
    } else {
        // modified Lentz on the continued fraction e^{-z} / (z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))
        let tiny = 1e-300;
        let mut b = z + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                return Ok(h * (-z).exp());
            }
        }
        Err(Error::Numerical(format!("E1 continued fraction did not converge at {z}")))
    }
}

/// Power series `Σ c_m x^m`, coefficients generated on the fly.
fn series(x: f64, coeff: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for m in 0..60 {
        let add = coeff(m) * pow;
        sum += add;
        if m > 4 && add.abs() < 1e-18 * sum.abs() {
            break;
        }
        pow *= x;
    }
    sum
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Storage time-value shape function.
pub fn phi_storage(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("phi_storage needs x > 0, got {x}")));
    }
    if x < 1.0 {
        // The numerator equals e^{-2x} - 1 + 2x - 8 Ein(x) + 4 Ein(2x) with the
        // entire function Ein, which starts at x^4 / 12.
        Ok(x * x
            * series(x, |m| {
                let k = m + 4;
                let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                let p2 = 2f64.powi(k as i32);
                (sgn * p2 - sgn * (4.0 * p2 - 8.0) / k as f64) / factorial(k)
            }))
    } else {
        let num = (-2.0 * x).exp() - 1.0 + 2.0 * x - 4.0 * EULER_GAMMA - 8.0 * exp_integral_e1(x)?
            + 4.0 * exp_integral_e1(2.0 * x)?
            + 4.0 * (2.0 / x).ln();
        Ok(num / (x * x))
    }
}

/// Weight of the closed-form approximation, `0.9 - 0.4 e^{-x/18}`.
pub fn phi_storage_k(x: f64) -> f64 {
    0.9 - 0.4 * (-x / 18.0).exp()
}

pub fn phi_storage_approx(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("phi_storage_approx needs x > 0, got {x}")));
    }
    let shape = if x < 1.0 {
        // -5 + e^{-2x} + 2x + 4 e^{-x}(1+x) starts at x^4 / 3
        x * x
            * series(x, |m| {
                let k = m + 4;
                let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                sgn * (2f64.powi(k as i32) - 4.0 * (k as f64 - 1.0)) / factorial(k)
            })
    } else {
        (-5.0 + (-2.0 * x).exp() + 2.0 * x + 4.0 * (-x).exp() * (1.0 + x)) / (x * x)
    };
    Ok(phi_storage_k(x) * shape)
}

/// Swing time-value shape function `(e^{-2x} + 2x - 1) / x^2`, equal to 2 at 0.
pub fn phi_swing(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(domain(format!("phi_swing needs x >= 0, got {x}")));
    }
    if x < 1.0 {
        Ok(series(x, |m| (-2f64).powi(m as i32 + 2) / factorial(m + 2)))
    } else {
        Ok(((-2.0 * x).exp() + 2.0 * x - 1.0) / (x * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticInputs {
    /// `r_max - r_min`.
    pub dr: f64,
    pub f_c: f64,
    pub d_f: f64,
    #[serde(default)]
    pub sigma0: f64,
    #[serde(default)]
    pub kappa0: f64,
    pub alpha: f64,
    pub t_e: f64,
}

impl AnalyticInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.dr > 0.0 && self.d_f > 0.0 && self.t_e > 0.0) {
            return Err(domain("dr, d_f and t_e must be positive"));
        }
        if !(self.alpha >= 0.0 && self.sigma0 >= 0.0 && self.kappa0 >= 0.0) {
            return Err(domain("alpha and volatilities must be nonnegative"));
        }
        Ok(())
    }
}

pub fn time_value_storage(inp: &AnalyticInputs) -> Result<f64> {
    inp.validate()?;
    if inp.f_c <= inp.d_f {
        return Err(domain("storage formula needs a strictly positive sinusoid (f_c > d_f)"));
    }
    let x = inp.alpha * inp.t_e;
    let phi = if x == 0.0 { 0.0 } else { phi_storage(x)? };
    let pre = inp.dr * inp.f_c * inp.f_c * inp.sigma0 * inp.sigma0 * inp.t_e * inp.t_e
        / (8.0 * std::f64::consts::PI * inp.d_f);
    Ok(pre * phi)
}

pub fn time_value_swing(inp: &AnalyticInputs) -> Result<f64> {
    inp.validate()?;
    let pre = inp.dr * inp.kappa0 * inp.kappa0 * inp.t_e * inp.t_e / (8.0 * std::f64::consts::PI * inp.d_f);
    Ok(pre * phi_swing(inp.alpha * inp.t_e)?)
}

/// Closed-form drift of the sinusoid storage example at time `t`.
pub fn mu_final_storage(t: f64, inp: &AnalyticInputs) -> Result<f64> {
    inp.validate()?;
    let s = inp.t_e - t;
    if s < 0.0 {
        return Err(domain(format!("t = {t} beyond the horizon")));
    }
    let pre = inp.dr * inp.f_c * inp.f_c * inp.sigma0 * inp.sigma0 / (2.0 * std::f64::consts::PI * inp.d_f);
    let a = inp.alpha;
    let y = a * s;
    let bracket = if y < 1.0 {
        // s * Σ y^m [(-2)^m / (m+1)! - (-1)^m (2^{m+2} - 2) / (m+2)!], starting at y^2 / 12
        s * series(y, |m| {
            let sgn = if m % 2 == 0 { 1.0 } else { -1.0 };
            sgn * (2f64.powi(m as i32) / factorial(m + 1) - (2f64.powi(m as i32 + 2) - 2.0) / factorial(m + 2))
        })
    } else {
        let e1 = (-y).exp();
        (1.0 - e1 * e1) / (2.0 * a) - (1.0 - e1) * (1.0 - e1) / (a * a * s)
    };
    Ok(pre * bracket)
}

/// Trigger times of a curve with their slopes and curvatures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerSet {
    pub level: f64,
    pub dr: f64,
    pub times: Vec<f64>,
    pub slopes: Vec<f64>,
    pub curvatures: Vec<f64>,
}

impl TriggerSet {
    pub fn new(level: f64, dr: f64, times: Vec<f64>, slopes: Vec<f64>, curvatures: Vec<f64>) -> Result<Self> {
        if times.len() != slopes.len() || times.len() != curvatures.len() {
            return Err(domain("trigger times, slopes and curvatures differ in length"));
        }
        if slopes.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(domain("trigger slopes must be nonzero"));
        }
        if !(dr > 0.0) {
            return Err(domain("dr must be positive"));
        }
        Ok(TriggerSet { level, dr, times, slopes, curvatures })
    }

    /// The example set `T_i = i T_e / N`, `i = 1..=N`, at level `F_c`.
    pub fn from_sinusoid(s: &SinusoidSpec, t_e: f64, dr: f64) -> Result<Self> {
        let times: Vec<f64> = s.crossing_times(t_e).into_iter().skip(1).collect();
        let slopes = times.iter().map(|&t| s.slope(t_e, t)).collect();
        let curv = times.iter().map(|&t| s.curvature(t_e, t)).collect();
        TriggerSet::new(s.f_c, dr, times, slopes, curv)
    }

    /// Linear-interpolated crossings of `level` with central-difference slopes.
    pub fn from_curve(curve: &ForwardCurve, level: f64, dr: f64) -> Result<Self> {
        let times = curve.crossings(level);
        let (slopes, curv) = derivatives_at(curve, &times);
        TriggerSet::new(level, dr, times, slopes, curv)
    }

    /// Trigger set of an intrinsic solution: its dead-zone crossings on `curve`.
    pub fn from_solution(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec) -> Result<Self> {
        let times: Vec<f64> = sol.trigger_times.clone();
        let (slopes, curv) = derivatives_at(curve, &times);
        let keep: Vec<usize> = (0..times.len()).filter(|&i| slopes[i] != 0.0).collect();
        let level = sol.segments.first().map(|s| s.trigger).unwrap_or(0.0);
        TriggerSet::new(
            level,
            spec.r_max - spec.r_min,
            keep.iter().map(|&i| times[i]).collect(),
            keep.iter().map(|&i| slopes[i]).collect(),
            keep.iter().map(|&i| curv[i]).collect(),
        )
    }

    fn first_after(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// `K0(t) = Δr Σ_{T_i > t} 1/|Ḟ_i|`.
    pub fn k0(&self, t: f64) -> f64 {
        let i0 = self.first_after(t);
        self.dr * self.slopes[i0..].iter().map(|s| 1.0 / s.abs()).sum::<f64>()
    }

    /// `M0(t) = Δr ∫ δ'(C - F) dT = -Δr Σ_{T_i > t} F̈_i / (|Ḟ_i| Ḟ_i²)`.
    /// Housed for the second-order trigger variation; the averaged drift does not use it.
    pub fn m0(&self, t: f64) -> f64 {
        let i0 = self.first_after(t);
        -self.dr
            * (i0..self.times.len())
                .map(|i| self.curvatures[i] / (self.slopes[i].abs() * self.slopes[i] * self.slopes[i]))
                .sum::<f64>()
    }

    /// `Σ φ(T_i) / |Ḟ_i|` over all trigger times.
    pub fn summation(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.times.iter().zip(&self.slopes).map(|(&t, s)| phi(t) / s.abs()).sum()
    }
}

fn derivatives_at(curve: &ForwardCurve, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = curve.len();
    let xs = &curve.deliveries;
    let slope: Vec<f64> = (0..n).map(|k| curve.slope(k)).collect();
    let curv: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            if b == a {
                0.0
            } else {
                (slope[b] - slope[a]) / (xs[b] - xs[a])
            }
        })
        .collect();
    let at = |ys: &[f64], t: f64| crate::curves::interpolate(xs, ys, t);
    (times.iter().map(|&t| at(&slope, t)).collect(), times.iter().map(|&t| at(&curv, t)).collect())
}

/// Correlation provider `Λ(t, T1, T2)`.
pub type LambdaFn<'a> = dyn Fn(f64, f64, f64) -> f64 + 'a;

/// `Λ` of a process on a fixed reference curve (the `<F F> ≈ F0 F0` approximation).
pub fn lambda_from_process<'a>(spec: &'a PriceProcessSpec, price: impl Fn(f64) -> f64 + 'a) -> impl Fn(f64, f64, f64) -> f64 + 'a {
    move |t, t1, t2| correlation(spec, t, t1, t2, price(t1), price(t2))
}

/// One of the three two-factor components (0: short-term, 1: long-term, 2: cross).
pub fn lambda_component<'a>(
    spec: &'a PriceProcessSpec,
    which: usize,
    price: impl Fn(f64) -> f64 + 'a,
) -> impl Fn(f64, f64, f64) -> f64 + 'a {
    move |t, t1, t2| correlation_components(spec, t, t1, t2, price(t1), price(t2))[which]
}

fn mu_terms(ts: &TriggerSet, i0: usize, t: f64, lambda: &LambdaFn) -> (f64, f64, f64) {
    let mut first = 0.0;
    let mut double = 0.0;
    let mut k = 0.0;
    for i in i0..ts.times.len() {
        let si = ts.slopes[i].abs();
        first += lambda(t, ts.times[i], ts.times[i]) / si;
        k += 1.0 / si;
        for j in i0..ts.times.len() {
            double += lambda(t, ts.times[i], ts.times[j]) / (si * ts.slopes[j].abs());
        }
    }
    (first, double, k)
}

fn mu_storage_from(ts: &TriggerSet, i0: usize, t: f64, lambda: &LambdaFn) -> f64 {
    if i0 >= ts.times.len() {
        return 0.0;
    }
    let (first, double, k) = mu_terms(ts, i0, t, lambda);
    // (Δr/2) Σ Λ_i/|Ḟ_i| - (Δr²/2K0) ΣΣ Λ_ij/(|Ḟ_i||Ḟ_j|) with K0 = Δr Σ 1/|Ḟ_i|
    0.5 * ts.dr * (first - double / k)
}

fn mu_swing_from(ts: &TriggerSet, i0: usize, t: f64, lambda: &LambdaFn) -> f64 {
    let mut first = 0.0;
    for i in i0..ts.times.len() {
        first += lambda(t, ts.times[i], ts.times[i]) / ts.slopes[i].abs();
    }
    0.5 * ts.dr * first
}

/// Forward-averaged storage drift at time `t`, over the trigger times after `t`.
pub fn mu_bar_storage(t: f64, ts: &TriggerSet, lambda: &LambdaFn) -> f64 {
    mu_storage_from(ts, ts.first_after(t), t, lambda)
}

pub fn mu_bar_swing(t: f64, ts: &TriggerSet, lambda: &LambdaFn) -> f64 {
    mu_swing_from(ts, ts.first_after(t), t, lambda)
}

/// `∫_0^{T_e} μ̄(t) dt` with Gauss-Legendre on each interval between trigger times.
/// Linear in `lambda`.
pub fn time_value_from_triggers(ts: &TriggerSet, lambda: &LambdaFn, t_e: f64, swing: bool) -> f64 {
    let mut cuts = vec![0.0];
    cuts.extend(ts.times.iter().copied().filter(|&x| x > 0.0 && x < t_e));
    cuts.push(t_e);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        // the active set is constant on (a, b)
        let i0 = ts.first_after(0.5 * (a + b));
        let mu = |t: f64| {
            if swing {
                mu_swing_from(ts, i0, t, lambda)
            } else {
                mu_storage_from(ts, i0, t, lambda)
            }
        };
        total += gauss_legendre(&mu, a, b);
    }
    total
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre with 8 panels.
fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            s += w * r * f(m + r * x);
        }
    }
    s
}

/// Composite Simpson rule on `n` (rounded up to even) intervals.
pub fn simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Averaged delta function `<δ(C - F)>` for a Gaussian price with mean `f0` and std `sigma`.
pub fn gaussian_trigger_density(c: f64, f0: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain(format!("density needs sigma > 0, got {sigma}")));
    }
    let z = (c - f0) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

/// `∫_a^b <δ(C - F(T))> φ(T) dT` with the Gaussian density, by Simpson quadrature.
pub fn gaussian_averaged_integral(
    c: f64,
    f0: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    phi: impl Fn(f64) -> f64,
    (a, b): (f64, f64),
    n: usize,
) -> Result<f64> {
    let mut bad = None;
    let v = simpson(
        |t| match gaussian_trigger_density(c, f0(t), sigma(t)) {
            Ok(d) => d * phi(t),
            Err(e) => {
                bad.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        n,
    );
    match bad {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaIdentity {
    /// Mollified `∫ δ(C - F) f dt` and `Σ f(t_i)/|Ḟ(t_i)|`.
    pub a4: (f64, f64),
    /// Mollified `∫ δ'(C - F) f dt` and `Σ (1/|Ḟ|) d/dt[f/Ḟ]` at the crossings.
    pub a5: (f64, f64),
    pub crossings: usize,
}

/// Delta-function identities on a sinusoid, integrated over `[-ΔT/2, T_e + ΔT/2]`
/// so that crossings at the horizon ends count fully. `w` is the Gaussian mollifier width in price.
pub fn delta_identity_oracle(s: &SinusoidSpec, t_e: f64, c: f64, f: impl Fn(f64) -> f64, w: f64) -> Result<DeltaIdentity> {
    s.validate()?;
    if !(w > 0.0) {
        return Err(domain("mollifier width must be positive"));
    }
    let half = 0.5 * s.half_period(t_e);
    let (a, b) = (-half, t_e + half);
    let price = |t: f64| s.value(t_e, t);
    let slope = |t: f64| s.slope(t_e, t);
    let curv = |t: f64| s.curvature(t_e, t);
    let max_slope = s.d_f * s.omega(t_e);
    let n = ((b - a) * max_slope / w * 60.0).max(20_000.0) as usize;
    let norm = 1.0 / (w * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| norm * (-0.5 * (u / w) * (u / w)).exp();
    let lhs4 = simpson(|t| kernel(c - price(t)) * f(t), a, b, n);
    let lhs5 = simpson(
        |t| {
            let u = c - price(t);
            -u / (w * w) * kernel(u) * f(t)
        },
        a,
        b,
        n,
    );

    // crossings by scan and bisection
    let scan = 20_000;
    let g = |t: f64| price(t) - c;
    let mut roots = Vec::new();
    let step = (b - a) / scan as f64;
    for i in 0..scan {
        let (mut lo, mut hi) = (a + i as f64 * step, a + (i + 1) as f64 * step);
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            roots.push(lo);
            continue;
        }
        if glo * ghi > 0.0 {
            continue;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    let h = 1e-6 * (b - a);
    let df = |t: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let mut rhs4 = 0.0;
    let mut rhs5 = 0.0;
    for &t in &roots {
        let (sl, cv) = (slope(t), curv(t));
        if sl == 0.0 {
            return Err(domain("tangent crossing: identity undefined"));
        }
        rhs4 += f(t) / sl.abs();
        rhs5 += (df(t) / sl - f(t) * cv / (sl * sl)) / sl.abs();
    }
    Ok(DeltaIdentity { a4: (lhs4, rhs4), a5: (lhs5, rhs5), crossings: roots.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Greeks {
    /// Per-bucket delta `-r(T)`.
    pub delta: Vec<f64>,
    /// Expected second-order P&L per unit time at the solution's start.
    pub gamma: f64,
}

pub fn greeks(sol: &IntrinsicSolution, curve: &ForwardCurve, spec: &StorageSpec, lambda: &LambdaFn) -> Result<Greeks> {
    let delta = sol.trajectory.rates.iter().map(|r| -r).collect();
    let t0 = curve.deliveries[sol.offset];
    let gamma = if sol.trigger_times.is_empty() {
        0.0
    } else {
        let ts = TriggerSet::from_solution(sol, curve, spec)?;
        match spec.terminal {
            Terminal::Fixed { .. } => mu_bar_storage(t0, &ts, lambda),
            Terminal::Free { .. } => mu_bar_swing(t0, &ts, lambda),
        }
    };
    Ok(Greeks { delta, gamma })
}

/// Shift of a trigger time when the trigger moves by `k` against a curve of slope `slope`.
pub fn time_shift(k: f64, slope: f64) -> Result<f64> {
    if slope == 0.0 {
        return Err(domain("time shift undefined for a flat curve"));
    }
    Ok(-k / slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiRow {
    pub x: f64,
    pub storage: f64,
    pub storage_approx: f64,
    pub swing: f64,
}

/// Φ functions on a log grid of `n` points over `[x_min, x_max]`.
pub fn phi_table(x_min: f64, x_max: f64, n: usize) -> Result<Vec<PhiRow>> {
    if !(x_min > 0.0 && x_max > x_min && n >= 2) {
        return Err(domain("phi table needs 0 < x_min < x_max and n >= 2"));
    }
    let (l0, l1) = (x_min.ln(), x_max.ln());
    (0..n)
        .map(|i| {
            let x = (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp();
            Ok(PhiRow { x, storage: phi_storage(x)?, storage_approx: phi_storage_approx(x)?, swing: phi_swing(x)? })
        })
        .collect()
}

pub fn write_phi_table(rows: &[PhiRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "x,phi_storage,phi_storage_approx,phi_swing")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.x, r.storage, r.storage_approx, r.swing)?;
    }
    Ok(())
}
