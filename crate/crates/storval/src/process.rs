//! Forward-curve evolution under exponentially damped volatility.
//!
//! Each maturity is a martingale. Steps are exact: the log (or level)
//! increment over `[t, t+dt]` is drawn with its integrated variance
//! `∫ σ0² e^{-2α(T-s)} ds`, so the variance of `ln F(t,T)` matches the
//! continuous model at any step size.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curves::ForwardCurve;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Lognormal1f,
    Normal1f,
    Lognormal2f,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceProcessSpec {
    pub kind: ProcessKind,
    /// Relative volatility (lognormal-1f), 1/sqrt(time).
    #[serde(default)]
    pub sigma0: f64,
    /// Absolute volatility (normal-1f), price/sqrt(time).
    #[serde(default)]
    pub kappa0: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Maturity decorrelation rate; 0 drives the whole curve with one Brownian motion.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub kappa10: f64,
    #[serde(default)]
    pub kappa20: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub rho: f64,
}

impl PriceProcessSpec {
    pub fn lognormal(sigma0: f64, alpha: f64) -> Self {
        PriceProcessSpec { kind: ProcessKind::Lognormal1f, sigma0, ..Self::zero() }
            .with_alpha(alpha)
    }

    pub fn normal(kappa0: f64, alpha: f64) -> Self {
        PriceProcessSpec { kind: ProcessKind::Normal1f, kappa0, ..Self::zero() }.with_alpha(alpha)
    }

    pub fn two_factor(kappa10: f64, alpha1: f64, kappa20: f64, alpha2: f64, rho: f64) -> Self {
        PriceProcessSpec { kind: ProcessKind::Lognormal2f, kappa10, alpha1, kappa20, alpha2, rho, ..Self::zero() }
    }

    fn zero() -> Self {
        PriceProcessSpec {
            kind: ProcessKind::Lognormal1f,
            sigma0: 0.0,
            kappa0: 0.0,
            alpha: 0.0,
            beta: 0.0,
            kappa10: 0.0,
            kappa20: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            rho: 0.0,
        }
    }

    fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma0, self.kappa0, self.alpha, self.beta, self.kappa10, self.kappa20, self.alpha1, self.alpha2];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("process volatilities and rates must be finite and nonnegative"));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho {} outside [-1, 1]", self.rho)));
        }
        if self.kind == ProcessKind::Lognormal2f && self.beta != 0.0 {
            return Err(Error::Unsupported("maturity decorrelation with the two-factor model".into()));
        }
        Ok(())
    }

    /// True when the process cannot move the curve.
    pub fn is_static(&self) -> bool {
        match self.kind {
            ProcessKind::Lognormal1f => self.sigma0 == 0.0,
            ProcessKind::Normal1f => self.kappa0 == 0.0,
            ProcessKind::Lognormal2f => self.kappa10 == 0.0 && self.kappa20 == 0.0,
        }
    }
}

/// Instantaneous covariance density of `dF(T1) dF(T2) / dt`, with the
/// small-volatility approximation `<F F> ≈ F1 F2` for lognormal models.
pub fn correlation(spec: &PriceProcessSpec, t: f64, t1: f64, t2: f64, f1: f64, f2: f64) -> f64 {
    correlation_components(spec, t, t1, t2, f1, f2).iter().sum()
}

/// The two-factor split `[Λ1, Λ2, Λ12]` (short-term, long-term, cross term).
/// One-factor models put everything in the first slot.
pub fn correlation_components(spec: &PriceProcessSpec, t: f64, t1: f64, t2: f64, f1: f64, f2: f64) -> [f64; 3] {
    let (tau1, tau2) = (t1 - t, t2 - t);
    let decor = (-spec.beta * (t2 - t1).abs()).exp();
    match spec.kind {
        ProcessKind::Lognormal1f => {
            [spec.sigma0 * spec.sigma0 * (-spec.alpha * (tau1 + tau2)).exp() * decor * f1 * f2, 0.0, 0.0]
        }
        ProcessKind::Normal1f => [spec.kappa0 * spec.kappa0 * (-spec.alpha * (tau1 + tau2)).exp() * decor, 0.0, 0.0],
        ProcessKind::Lognormal2f => {
            let k1 = |tau: f64| spec.kappa10 * (-spec.alpha1 * tau).exp();
            let k2 = |tau: f64| spec.kappa20 * (-spec.alpha2 * tau).exp();
            let ff = f1 * f2;
            [
                ff * k1(tau1) * k1(tau2),
                ff * k2(tau1) * k2(tau2),
                spec.rho * ff * (k1(tau1) * k2(tau2) + k2(tau1) * k1(tau2)),
            ]
        }
    }
}

/// Normal draws for one path: a counter-based ChaCha stream keyed by the path.
/// In antithetic mode paths `2i` and `2i+1` share stream `i` with opposite signs.
#[derive(Debug, Clone)]
pub struct PathRng {
    rng: ChaCha8Rng,
    sign: f64,
}

impl PathRng {
    pub fn new(seed: u64, path_index: u64, antithetic: bool) -> Self {
        let (stream, sign) = if antithetic {
            (path_index / 2, if path_index % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path_index, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PathRng { rng, sign }
    }

    pub fn normal(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sign * z
    }
}

#[derive(Debug, Clone)]
pub struct PathState {
    pub curve: ForwardCurve,
    pub rng: PathRng,
    pub t: f64,
}

impl PathState {
    pub fn new(curve: ForwardCurve, rng: PathRng) -> Self {
        let t = curve.obs_time;
        PathState { curve, rng, t }
    }

    /// Index of the first delivery not yet in the past.
    pub fn prompt_index(&self) -> usize {
        let eps = 1e-9 * (1.0 + self.t.abs());
        self.curve.deliveries.partition_point(|&d| d < self.t - eps)
    }
}

/// Spot price: the prompt delivery of the current curve.
pub fn spot(state: &PathState) -> f64 {
    let k = state.prompt_index().min(state.curve.len() - 1);
    state.curve.prices[k]
}

/// `∫_0^dt e^{-a(τ-u)} du`, the integrated squared damping over one step ending `τ - dt` before delivery.
fn damped_integral(a: f64, tau: f64, dt: f64) -> f64 {
    let tail = (-a * (tau - dt).max(0.0)).exp();
    if a * dt < 1e-12 {
        tail * dt
    } else {
        tail * (-(-a * dt).exp_m1()) / a
    }
}

/// Per-maturity loadings for one step; cached once per grid because on a
/// uniform grid they depend only on the number of steps to delivery.
#[derive(Debug, Clone)]
pub struct Evolver {
    spec: PriceProcessSpec,
    dt: f64,
    /// Loadings on the first (and for 2f, second) driver, by steps to delivery.
    a1: Vec<f64>,
    a2: Vec<f64>,
    var: Vec<f64>,
    rho_eff: f64,
    /// AR(1) coefficients across consecutive deliveries when β > 0.
    decor: f64,
}

impl Evolver {
    /// Loadings for a uniform curve of `n + 1` deliveries stepped by `dt`.
    pub fn new(spec: &PriceProcessSpec, dt: f64, n: usize) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0) {
            return Err(invalid("process step must be positive"));
        }
        let mut a1 = Vec::with_capacity(n + 1);
        let mut a2 = Vec::with_capacity(n + 1);
        let mut var = Vec::with_capacity(n + 1);
        let mut rho_eff = 0.0;
        for m in 0..=n {
            let tau = (m + 1) as f64 * dt;
            match spec.kind {
                ProcessKind::Lognormal1f | ProcessKind::Normal1f => {
                    let vol = if spec.kind == ProcessKind::Lognormal1f { spec.sigma0 } else { spec.kappa0 };
                    let v = vol * vol * damped_integral(2.0 * spec.alpha, tau, dt);
                    a1.push(v.sqrt());
                    a2.push(0.0);
                    var.push(v);
                }
                ProcessKind::Lognormal2f => {
                    let i11 = damped_integral(2.0 * spec.alpha1, tau, dt);
                    let i22 = damped_integral(2.0 * spec.alpha2, tau, dt);
                    let i12 = damped_integral(spec.alpha1 + spec.alpha2, tau, dt);
                    let s1 = spec.kappa10 * i11.sqrt();
                    let s2 = spec.kappa20 * i22.sqrt();
                    rho_eff = if i11 > 0.0 && i22 > 0.0 { spec.rho * i12 / (i11 * i22).sqrt() } else { 0.0 };
                    a1.push(s1);
                    a2.push(s2);
                    var.push(s1 * s1 + s2 * s2 + 2.0 * rho_eff * s1 * s2);
                }
            }
        }
        Ok(Evolver { spec: spec.clone(), dt, a1, a2, var, rho_eff, decor: (-spec.beta * dt).exp() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance the curve by one step; deliveries before `t + dt` stay frozen.
    pub fn step(&self, state: &mut PathState) {
        let k = state.prompt_index();
        let n = state.curve.len();
        let lognormal = self.spec.kind != ProcessKind::Normal1f;
        let z1 = if self.spec.beta == 0.0 { state.rng.normal() } else { 0.0 };
        let z2 = if self.spec.kind == ProcessKind::Lognormal2f {
            let z3 = state.rng.normal();
            self.rho_eff * z1 + (1.0 - self.rho_eff * self.rho_eff).max(0.0).sqrt() * z3
        } else {
            0.0
        };
        let mut z_ar = 0.0;
        let c = (1.0 - self.decor * self.decor).sqrt();
        for j in k + 1..n {
            let m = j - k - 1;
            let z = if self.spec.beta == 0.0 {
                z1
            } else {
                let e = state.rng.normal();
                z_ar = if j == k + 1 { e } else { self.decor * z_ar + c * e };
                z_ar
            };
            let x = self.a1[m] * z + self.a2[m] * z2;
            let f = &mut state.curve.prices[j];
            if lognormal {
                *f *= (x - 0.5 * self.var[m]).exp();
            } else {
                *f += x;
            }
        }
        state.t += self.dt;
        state.curve.obs_time = state.t;
    }
}

/// One-off step on a uniform curve; for repeated stepping build an [`Evolver`] once.
pub fn evolve(state: &mut PathState, spec: &PriceProcessSpec, dt: f64) -> Result<()> {
    let ev = Evolver::new(spec, dt, state.curve.len())?;
    ev.step(state);
    Ok(())
}

/// Debug dump of a simulated path: one row per (step, delivery).
pub fn write_path_csv(snapshots: &[ForwardCurve], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "t,delivery,price")?;
    for c in snapshots {
        for (d, p) in c.deliveries.iter().zip(&c.prices) {
            writeln!(w, "{},{},{}", c.obs_time, d, p)?;
        }
    }
    Ok(())
}
