//! Time grids and forward curves.
//!
//! A valuation grid has `n_steps + 1` nodes `t_k = k * dt`. The forward curve
//! is sampled on the same nodes; bucket `k` (delivery over `[t_k, t_{k+1})`)
//! trades at the node price `F(t_k)`, so the last node only serves
//! interpolation and crossing detection.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        let g = TimeGrid { t_end, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("grid t_end must be positive, got {}", self.t_end)));
        }
        if self.n_steps < 2 {
            return Err(invalid(format!("grid needs n_steps >= 2, got {}", self.n_steps)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    /// Node times `t_0 ..= t_n`; these are also the delivery points.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceMode {
    StrictlyPositive,
    /// Spreads that may cross zero (swing contracts).
    Signed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve {
    pub obs_time: f64,
    pub deliveries: Vec<f64>,
    pub prices: Vec<f64>,
    pub mode: PriceMode,
}

impl ForwardCurve {
    pub fn new(obs_time: f64, deliveries: Vec<f64>, prices: Vec<f64>, mode: PriceMode) -> Result<Self> {
        let c = ForwardCurve { obs_time, deliveries, prices, mode };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deliveries.len() != self.prices.len() {
            return Err(invalid(format!(
                "curve has {} deliveries but {} prices",
                self.deliveries.len(),
                self.prices.len()
            )));
        }
        if self.deliveries.len() < 2 {
            return Err(Error::InsufficientData(self.deliveries.len()));
        }
        if self.deliveries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("curve deliveries must be strictly increasing"));
        }
        if self.prices.iter().any(|p| !p.is_finite()) {
            return Err(invalid("curve prices must be finite"));
        }
        if self.mode == PriceMode::StrictlyPositive {
            if let Some(k) = self.prices.iter().position(|&p| p <= 0.0) {
                return Err(invalid(format!(
                    "price {} at delivery {} is not positive in strictly-positive mode",
                    self.prices[k], self.deliveries[k]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Piecewise-linear interpolation, flat beyond the first and last delivery.
    pub fn price_at(&self, t: f64) -> f64 {
        interpolate(&self.deliveries, &self.prices, t)
    }

    pub fn resample(&self, grid: &TimeGrid) -> Result<ForwardCurve> {
        let nodes = grid.nodes();
        let prices = nodes.iter().map(|&t| self.price_at(t)).collect();
        ForwardCurve::new(self.obs_time, nodes, prices, self.mode)
    }

    /// Slope dF/dT at delivery `k` by central differences (one-sided at the ends).
    pub fn slope(&self, k: usize) -> f64 {
        let n = self.len();
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k + 1 == n {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        (self.prices[b] - self.prices[a]) / (self.deliveries[b] - self.deliveries[a])
    }

    /// Uniform spacing of the deliveries, or an error when they are not uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        let n = self.len();
        let dt = (self.deliveries[n - 1] - self.deliveries[0]) / (n - 1) as f64;
        let tol = 1e-9 * dt.max(1.0);
        for (k, w) in self.deliveries.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(invalid(format!("curve deliveries are not uniform near index {k}")));
            }
        }
        Ok(dt)
    }

    /// Times where the curve crosses `level`, by linear interpolation between deliveries.
    pub fn crossings(&self, level: f64) -> Vec<f64> {
        let g: Vec<f64> = self.prices.iter().map(|p| p - level).collect();
        zero_crossings(&self.deliveries, &g)
    }

    pub fn max_step_move(&self) -> f64 {
        self.prices.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    if x == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

pub(crate) fn zero_crossings(xs: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..g.len() {
        if g[k] == 0.0 {
            out.push(xs[k]);
        } else if k + 1 < g.len() && g[k + 1] != 0.0 && (g[k] < 0.0) != (g[k + 1] < 0.0) {
            out.push(xs[k] + (xs[k + 1] - xs[k]) * g[k] / (g[k] - g[k + 1]));
        }
    }
    out
}

/// Parse two-column delimited text (comma or whitespace), optional header, `#` comments.
pub fn parse_curve_points(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 2 columns, found {}", fields.len()) });
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(p)) => {
                if !t.is_finite() || !p.is_finite() {
                    return Err(Error::Parse { line: line_no, msg: "non-finite value".into() });
                }
                if let Some(&last) = ts.last() {
                    if t <= last {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("delivery time {t} does not increase"),
                        });
                    }
                }
                ts.push(t);
                ps.push(p);
                seen_data = true;
            }
            _ if !seen_data && ts.is_empty() => {
                // header row
                seen_data = true;
            }
            _ => {
                return Err(Error::Parse { line: line_no, msg: format!("cannot parse `{line}` as numbers") });
            }
        }
    }
    if ts.len() < 2 {
        return Err(Error::InsufficientData(ts.len()));
    }
    Ok((ts, ps))
}

pub fn curve_from_text(text: &str, grid: &TimeGrid) -> Result<ForwardCurve> {
    let (ts, ps) = parse_curve_points(text)?;
    let mode = if ps.iter().any(|&p| p <= 0.0) { PriceMode::Signed } else { PriceMode::StrictlyPositive };
    let raw = ForwardCurve::new(0.0, ts, ps, mode)?;
    raw.resample(grid)
}

pub fn load_curve(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<ForwardCurve> {
    let text = std::fs::read_to_string(path)?;
    curve_from_text(&text, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub f_c: f64,
    pub d_f: f64,
    pub n_humps: u32,
}

impl SinusoidSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_f > 0.0) {
            return Err(invalid(format!("sinusoid amplitude must be positive, got {}", self.d_f)));
        }
        if self.n_humps == 0 {
            return Err(invalid("sinusoid needs at least one hump"));
        }
        if !self.f_c.is_finite() {
            return Err(invalid("sinusoid center must be finite"));
        }
        Ok(())
    }

    pub fn omega(&self, t_end: f64) -> f64 {
        PI * self.n_humps as f64 / t_end
    }

    pub fn half_period(&self, t_end: f64) -> f64 {
        t_end / self.n_humps as f64
    }

    pub fn mode(&self) -> PriceMode {
        if self.f_c > self.d_f {
            PriceMode::StrictlyPositive
        } else {
            PriceMode::Signed
        }
    }

    pub fn value(&self, t_end: f64, t: f64) -> f64 {
        self.f_c + self.d_f * (self.omega(t_end) * t).sin()
    }

    pub fn slope(&self, t_end: f64, t: f64) -> f64 {
        let w = self.omega(t_end);
        self.d_f * w * (w * t).cos()
    }

    pub fn curvature(&self, t_end: f64, t: f64) -> f64 {
        let w = self.omega(t_end);
        -self.d_f * w * w * (w * t).sin()
    }

    /// The level-`f_c` crossing times `i * T_e / N`, `i = 0..=N`.
    pub fn crossing_times(&self, t_end: f64) -> Vec<f64> {
        let n = self.n_humps as usize;
        (0..=n).map(|i| i as f64 * t_end / n as f64).collect()
    }
}

pub fn make_sinusoid(spec: &SinusoidSpec, grid: &TimeGrid) -> Result<ForwardCurve> {
    spec.validate()?;
    grid.validate()?;
    let nodes = grid.nodes();
    let prices = nodes.iter().map(|&t| spec.value(grid.t_end, t)).collect();
    ForwardCurve::new(0.0, nodes, prices, spec.mode())
}
