use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use jeanie_core::alignment::Method;
use jeanie_core::config::{ConfigError, FeatureKind, RunConfig};
use jeanie_core::encoder::{BlockEncoder, EncoderParams, JointGraph, RawBlockEncoder};
use jeanie_core::geometry::{CameraModel, GeometryError};
use jeanie_core::skeleton::{load_sequences, SkeletonError, SkeletonSequence};

use crate::GlobalArgs;

/// Resolved configuration plus the global flags.
pub struct Context {
    pub config: RunConfig,
    pub method: Option<Method>,
    pub output: Option<std::path::PathBuf>,
    pub jobs: Option<usize>,
    pub pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(args: &GlobalArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::shipped(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(output) = &args.output {
            config.output = Some(output.clone());
        }
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = args.jobs {
            anyhow::ensure!(jobs >= 1, "--jobs must be at least 1");
            pool = pool.num_threads(jobs);
        }
        log::debug!("config hash {}", config.hash());
        Ok(Self {
            output: config.output.clone(),
            method: args.method,
            jobs: args.jobs,
            pool: pool.build()?,
            config,
        })
    }

    pub fn camera(&self) -> Result<Option<CameraModel>> {
        self.config
            .camera
            .as_deref()
            .map(|p| {
                CameraModel::load(p).with_context(|| format!("loading camera {}", p.display()))
            })
            .transpose()
    }

    pub fn encoder(&self, joints: usize) -> Result<Box<dyn BlockEncoder>> {
        Ok(match self.config.features {
            FeatureKind::Raw => Box::new(RawBlockEncoder),
            FeatureKind::Network => Box::new(EncoderParams::new(
                self.config.encoder(),
                JointGraph::for_joints(joints),
            )?),
        })
    }

    /// Writes `text` to `--output` when given, standard output otherwise.
    pub fn emit(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(path) => write_file(path, text),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_first(path: &Path) -> Result<SkeletonSequence> {
    let seqs = load_sequences(path).with_context(|| format!("reading {}", path.display()))?;
    seqs.into_iter().next().ok_or_else(|| {
        anyhow::Error::new(SkeletonError::EmptyList)
            .context(format!("{} holds no sequences", path.display()))
    })
}

/// 2 for input/output and format problems, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<csv::Error>().is_some()
        {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<SkeletonError>() {
            if matches!(e, SkeletonError::Io(_) | SkeletonError::Format { .. }) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<GeometryError>() {
            if matches!(e, GeometryError::Io(_) | GeometryError::Format(_)) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            if matches!(e, ConfigError::Io { .. } | ConfigError::Parse(_)) {
                return 2;
            }
        }
    }
    1
}

pub fn exit(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Wilson score interval at 95% for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(8, 10);
        assert!((lo - 0.490_162).abs() < 1e-5, "{lo}");
        assert!((hi - 0.943_318).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson_interval(10, 10);
        assert!((hi - 1.0).abs() < 1e-12 && lo > 0.69, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn io_errors_map_to_two() {
        let err =
            anyhow::Error::new(std::io::Error::from(std::io::ErrorKind::NotFound)).context("x");
        assert_eq!(exit_code(&err), 2);
        let err = anyhow::Error::new(SkeletonError::Format {
            line: 3,
            message: "bad".into(),
        });
        assert_eq!(exit_code(&err), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("validation")), 1);
    }
}
