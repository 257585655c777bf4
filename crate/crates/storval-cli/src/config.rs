use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use storval::curves::{load_curve, make_sinusoid, ForwardCurve, SinusoidSpec, TimeGrid};
use storval::intrinsic::StorageSpec;
use storval::process::PriceProcessSpec;
use storval::rolling::SimulationConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub t_end: f64,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinusoid: Option<SinusoidSpec>,
    /// Two-column delimited file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    /// Write per-step ledgers to `ledgers.csv`.
    #[serde(default)]
    pub record_ledger: bool,
}

fn default_paths() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { paths: default_paths(), seed: default_seed(), antithetic: false, record_ledger: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Trigger,
    Dp,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_solver")]
    pub kind: SolverChoice,
    #[serde(default = "default_levels")]
    pub dp_levels: usize,
}

fn default_solver() -> SolverChoice {
    SolverChoice::Trigger
}

fn default_levels() -> usize {
    512
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { kind: default_solver(), dp_levels: default_levels() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSection {
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_x_min() -> f64 {
    0.01
}

fn default_x_max() -> f64 {
    100.0
}

fn default_points() -> usize {
    200
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection { x_min: default_x_min(), x_max: default_x_max(), points: default_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Sweep of `α T_e`; the process `alpha` is replaced point by point.
    pub alpha_t_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub curve: CurveSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<PriceProcessSpec>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analytic: AnalyticSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(file) = &cfg.curve.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.curve.file = Some(base.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.curve.t_end, self.curve.n_steps)?)
    }

    pub fn forward_curve(&self) -> Result<ForwardCurve, CliError> {
        let grid = self.grid()?;
        match (&self.curve.sinusoid, &self.curve.file) {
            (Some(s), None) => Ok(make_sinusoid(s, &grid)?),
            (None, Some(f)) => {
                if !f.exists() {
                    return Err(CliError::Config(format!("curve.file: {} does not exist", f.display())));
                }
                Ok(load_curve(f, &grid)?)
            }
            _ => Err(CliError::Config("curve: give exactly one of `sinusoid` or `file`".into())),
        }
    }

    pub fn storage(&self) -> Result<&StorageSpec, CliError> {
        self.storage.as_ref().ok_or_else(|| CliError::Config("missing section `storage`".into()))
    }

    pub fn process(&self) -> Result<&PriceProcessSpec, CliError> {
        self.process.as_ref().ok_or_else(|| CliError::Config("missing section `process`".into()))
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig, CliError> {
        let mut c = SimulationConfig::new(self.simulation.paths, self.simulation.seed, self.grid()?);
        c.antithetic = self.simulation.antithetic;
        c.record_ledger = true;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "[curve]\nt_end = 1.0\nn_steps = 8\nsinusoid = { f_c = 20.0, d_f = 5.0, n_humps = 2 }\n";

    fn load_str(dir: &Path, body: &str) -> Result<RunConfig, CliError> {
        let p = dir.join("c.toml");
        std::fs::write(&p, body).unwrap();
        RunConfig::load(&p)
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_str(dir.path(), MIN).unwrap();
        assert_eq!(cfg.simulation, SimulationSection::default());
        assert_eq!(cfg.solver.kind, SolverChoice::Trigger);
        assert_eq!(cfg.solver.dp_levels, 512);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert_eq!(cfg.forward_curve().unwrap().len(), 9);
        assert!(matches!(cfg.storage(), Err(CliError::Config(_))));
        assert!(matches!(cfg.process(), Err(CliError::Config(_))));
    }

    #[test]
    fn relative_curve_file_follows_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_str(dir.path(), "[curve]\nt_end = 1.0\nn_steps = 4\nfile = \"f.csv\"\n").unwrap();
        assert_eq!(cfg.curve.file.as_deref(), Some(dir.path().join("f.csv").as_path()));
        std::fs::write(dir.path().join("f.csv"), "0 1\n1 2\n").unwrap();
        let c = cfg.forward_curve().unwrap();
        assert!((c.prices[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn curve_needs_exactly_one_source() {
        let dir = tempfile::tempdir().unwrap();
        let both = format!("{MIN}file = \"f.csv\"\n");
        assert!(matches!(load_str(dir.path(), &both).unwrap().forward_curve(), Err(CliError::Config(_))));
        let none = "[curve]\nt_end = 1.0\nn_steps = 4\n";
        assert!(matches!(load_str(dir.path(), none).unwrap().forward_curve(), Err(CliError::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_str(dir.path(), &format!("{MIN}[solver]\nkind = \"both\"\n")).unwrap();
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.simulation_config().unwrap().record_ledger);
    }
}
