use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::daesolve::{DaeOptions, InputSignal, NewmarkParams, TimeGrid};
use crate::error::{Error, Result};
use crate::models::{AnchoredChain, SecondOrderDAE, TripleChain};
use crate::opinf::{InferOptions, OutputTerms};
use crate::podspace::{PodOptions, TruncationRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    AnchoredChain(AnchoredChain),
    TripleChain(TripleChain),
    /// Directory with `M.mtx, D.mtx, K.mtx, B.mtx, Cp.mtx, Cv.mtx` and one of `Gp.mtx`/`Gv.mtx`.
    Directory { path: PathBuf },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::AnchoredChain(_) => "anchored_chain".into(),
            ModelSpec::TripleChain(_) => "triple_chain".into(),
            ModelSpec::Directory { path } => path.display().to_string(),
        }
    }

    pub fn build(&self) -> Result<SecondOrderDAE> {
        match self {
            ModelSpec::AnchoredChain(c) => c.build(),
            ModelSpec::TripleChain(c) => c.build(),
            ModelSpec::Directory { path } => crate::models::load_system(path),
        }
    }
}

/// How much of the training simulation is kept as snapshot data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    /// Keep the whole grid.
    Full,
    /// Cut after the last time the output norm exceeds `fraction` of its peak.
    Fade { fraction: f64 },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Fade { fraction: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// Velocities and accelerations computed by the integrator.
    #[default]
    Integrator,
    /// Central differences of the displacement snapshots.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub training_signal: InputSignal,
    pub test_signal: InputSignal,
    /// Training grid before horizon trimming.
    #[serde(default)]
    pub grid: TimeGrid,
    /// Defaults to `grid`.
    #[serde(default)]
    pub test_grid: Option<TimeGrid>,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub truncation: TruncationRule,
    #[serde(default)]
    pub pod: PodOptions,
    #[serde(default)]
    pub infer: InferOptions,
    #[serde(default)]
    pub newmark: NewmarkParams,
    #[serde(default)]
    pub dae: DaeOptions,
    #[serde(default)]
    pub derivatives: DerivativeSource,
    pub output_dir: PathBuf,
    /// Unused by the deterministic stages; kept for reproducible extensions.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file. A relative model directory is resolved
    /// against the config file's location.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let ModelSpec::Directory { path: dir } = &mut cfg.model {
            if dir.is_relative() {
                if let Some(base) = path.parent() {
                    *dir = base.join(&*dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.grid.validate().map_err(wrap)?;
        if let Some(g) = &self.test_grid {
            g.validate().map_err(wrap)?;
        }
        self.training_signal.validate().map_err(wrap)?;
        self.test_signal.validate().map_err(wrap)?;
        self.truncation.validate().map_err(wrap)?;
        self.infer.validate().map_err(wrap)?;
        self.newmark.validate().map_err(wrap)?;
        if !(self.dae.constraint_tol > 0.0) {
            return Err(Error::Config("dae.constraint_tol must be positive".into()));
        }
        if let Horizon::Fade { fraction } = self.horizon {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("horizon fraction must lie in (0, 1), got {fraction}")));
            }
        }
        if self.training_signal.channels() != self.test_signal.channels() {
            return Err(Error::Config("training and test signals have different channel counts".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn test_grid(&self) -> TimeGrid {
        self.test_grid.unwrap_or(self.grid)
    }

    /// Benchmark settings: `"anchored_chain"` (n = 600, r = 5) or
    /// `"triple_chain"` (n = 301, r = 35).
    pub fn benchmark(name: &str, output_dir: impl Into<PathBuf>) -> Result<Self> {
        let infer = InferOptions {
            output_terms: OutputTerms::Position,
            ..InferOptions::default()
        };
        let (model, grid, test_signal, r) = match name {
            "anchored_chain" => (
                ModelSpec::AnchoredChain(AnchoredChain::default()),
                TimeGrid::new(0.0, 0.1, 2000)?,
                InputSignal::harmonic(1.0, 0.2)?,
                5,
            ),
            "triple_chain" => (
                ModelSpec::TripleChain(TripleChain::default()),
                TimeGrid::new(0.0, 0.5, 3600)?,
                InputSignal::harmonic(1.0, 0.05)?,
                35,
            ),
            other => return Err(Error::Config(format!("unknown benchmark `{other}`"))),
        };
        Ok(Self {
            model,
            training_signal: InputSignal::impulse(1.0, 2.0)?,
            test_signal,
            grid,
            test_grid: None,
            horizon: Horizon::default(),
            truncation: TruncationRule::FixedR { r },
            pod: PodOptions::default(),
            infer,
            newmark: NewmarkParams::default(),
            dae: DaeOptions::default(),
            derivatives: DerivativeSource::Integrator,
            output_dir: output_dir.into(),
            seed: 0,
        })
    }
}
