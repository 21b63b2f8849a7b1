//! JSON run configuration. Unknown keys are rejected; every error carries
//! the line of the offending key when it can be located.

use std::fmt;
use std::path::{Path, PathBuf};

use landau_core::dynamics::{Bandwidth, EstimatorSettings, JSup};
use landau_core::{CoupledConfig, Error, InitialSpec, KernelParams, Mat3, NoiseMode, SimConfig, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kernel: KernelDto,
    pub particles: ParticlesDto,
    pub time: TimeDto,
    pub initial: InitialDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_b: Option<InitialDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingDto>,
    pub estimators: EstimatorsDto,
    pub output: OutputDto,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDto {
    pub gamma: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesDto {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseDto,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseDto {
    Off,
    PerAtom,
    Subsampled {
        atoms: usize,
    },
    #[default]
    Aggregated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDto {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub diag_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDto {
    #[serde(default)]
    pub mean: [f64; 3],
    #[serde(default = "identity")]
    pub covariance: [[f64; 3]; 3],
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDto {
    Gaussian {
        #[serde(default)]
        mean: [f64; 3],
        #[serde(default = "identity")]
        covariance: [[f64; 3]; 3],
    },
    Mixture {
        weights: [f64; 2],
        components: [GaussianDto; 2],
    },
    UniformBall {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
}

impl InitialDto {
    fn to_spec(&self) -> InitialSpec<f64> {
        match self {
            InitialDto::Gaussian { mean, covariance } => {
                InitialSpec::Gaussian { mean: Vec3::from_array(*mean), covariance: Mat3::from_rows(*covariance) }
            }
            InitialDto::Mixture { weights, components } => InitialSpec::Mixture {
                weights: *weights,
                means: components.each_ref().map(|c| Vec3::from_array(c.mean)),
                covariances: components.each_ref().map(|c| Mat3::from_rows(c.covariance)),
            },
            InitialDto::UniformBall { center, radius } => {
                InitialSpec::UniformBall { center: Vec3::from_array(*center), radius: *radius }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingDto {
    #[serde(default = "default_recouple")]
    pub recouple_every: usize,
    /// Seed of the second initial ensemble; omitted means common random
    /// numbers with the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_b: Option<u64>,
    /// Seeds of the stability experiment; defaults to `particles.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_slack")]
    pub envelope_slack: f64,
}

fn default_recouple() -> usize {
    10
}

fn default_slack() -> f64 {
    0.05
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthDto {
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JSupDto {
    #[default]
    Particles,
    Grid {
        per_axis: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsDto {
    #[serde(default = "default_neighbors")]
    pub entropy_neighbors: usize,
    #[serde(default = "default_lp")]
    pub lp_exponent: f64,
    #[serde(default)]
    pub bandwidth: BandwidthDto,
    #[serde(default)]
    pub j_sup: JSupDto,
}

fn default_neighbors() -> usize {
    4
}

fn default_lp() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDto {
    /// Relative paths are taken from the directory of the config file.
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "run".into()
}

/// A config problem, located at `line` of `path` when possible.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config with the source text kept for error locations.
#[derive(Debug)]
pub struct Loaded {
    pub path: PathBuf,
    pub text: String,
    pub file: ConfigFile,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let err = |line, column, message| ConfigError { path: path.to_owned(), line, column, message };
    let text = std::fs::read_to_string(path).map_err(|e| err(None, None, format!("cannot read: {e}")))?;
    let file: ConfigFile = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        // serde_json appends the location; it is reported separately.
        let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_owned();
        err(Some(e.line()), Some(e.column()), msg)
    })?;
    Ok(Loaded { path: path.to_owned(), text, file })
}

/// 1-based line of the first occurrence of `"key"`, searching after the
/// first occurrence of `"section"` when given.
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let start = match section {
        Some(s) => text.find(&format!("\"{s}\""))?,
        None => 0,
    };
    let at = start + text[start..].find(&format!("\"{key}\""))?;
    Some(text[..at].matches('\n').count() + 1)
}

impl Loaded {
    fn error(&self, section: Option<&str>, key: &str, message: String) -> ConfigError {
        let line = locate(&self.text, section, key).or_else(|| section.and_then(|s| locate(&self.text, None, s)));
        ConfigError { path: self.path.clone(), line: line.or(Some(1)), column: None, message }
    }

    fn core_error(&self, e: Error, initial_key: &str) -> ConfigError {
        let (section, key) = match &e {
            Error::InvalidParameter { name, .. } => match *name {
                "gamma" | "eps" => (Some("kernel"), *name),
                "n" => (Some("particles"), "n"),
                "atoms" => (Some("particles"), "atoms"),
                "dt" | "t_end" | "diag_every" => (Some("time"), *name),
                "k_neighbors" => (Some("estimators"), "entropy_neighbors"),
                "lp_exponent" | "per_axis" => (Some("estimators"), *name),
                "bandwidth" => (Some("estimators"), "bandwidth"),
                "recouple_every" => (Some("coupling"), "recouple_every"),
                "radius" | "weights" => (Some(initial_key), *name),
                other => (None, other),
            },
            Error::NotSpd { .. } => (Some(initial_key), "covariance"),
            _ => (None, "kernel"),
        };
        self.error(section, key, e.to_string())
    }

    pub fn sim_config(&self) -> Result<SimConfig<f64>, ConfigError> {
        let f = &self.file;
        let kernel = KernelParams::new(f.kernel.gamma, f.kernel.eps).map_err(|e| self.core_error(e, "initial"))?;
        let mut cfg = SimConfig::new(kernel, f.particles.n, f.time.dt, f.time.t_end, f.particles.seed);
        cfg.initial = f.initial.to_spec();
        cfg.diag_every = f.time.diag_every;
        cfg.noise = match f.particles.noise {
            NoiseDto::Off => NoiseMode::Off,
            NoiseDto::PerAtom => NoiseMode::PerAtom,
            NoiseDto::Subsampled { atoms } => NoiseMode::Subsampled { atoms },
            NoiseDto::Aggregated => NoiseMode::Aggregated,
        };
        let e = &f.estimators;
        cfg.estimators = EstimatorSettings {
            entropy_neighbors: e.entropy_neighbors,
            lp_exponent: e.lp_exponent,
            bandwidth: match e.bandwidth {
                BandwidthDto::Silverman => Bandwidth::Silverman,
                BandwidthDto::Fixed(h) => Bandwidth::Fixed(h),
            },
            j_sup: match e.j_sup {
                JSupDto::Particles => JSup::Particles,
                JSupDto::Grid { per_axis } => JSup::Grid { per_axis },
            },
        };
        cfg.validate().map_err(|e| self.core_error(e, "initial"))?;
        Ok(cfg)
    }

    /// The coupled config and the seeds of the stability experiment.
    pub fn coupled_config(&self) -> Result<(CoupledConfig<f64>, Vec<u64>), ConfigError> {
        let base = self.sim_config()?;
        let initial_b = self
            .file
            .initial_b
            .as_ref()
            .ok_or_else(|| self.error(None, "initial", "`couple` requires `initial_b`".into()))?;
        let coupling = self.file.coupling.clone().unwrap_or(CouplingDto {
            recouple_every: default_recouple(),
            seed_b: None,
            seeds: None,
            envelope_slack: default_slack(),
        });
        let seeds = coupling.seeds.clone().unwrap_or_else(|| vec![base.seed]);
        if seeds.is_empty() {
            return Err(self.error(Some("coupling"), "seeds", "`seeds` must not be empty".into()));
        }
        if coupling.envelope_slack.is_nan() || coupling.envelope_slack < 0.0 {
            return Err(self.error(Some("coupling"), "envelope_slack", "must be non-negative".into()));
        }
        let mut cfg = CoupledConfig::new(base, initial_b.to_spec(), coupling.recouple_every);
        cfg.seed_b = coupling.seed_b;
        cfg.validate().map_err(|e| self.core_error(e, "initial_b"))?;
        Ok((cfg, seeds))
    }

    pub fn envelope_slack(&self) -> f64 {
        self.file.coupling.as_ref().map_or(default_slack(), |c| c.envelope_slack)
    }

    /// Output directory, resolved against the config location.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.file.output.dir;
        if dir.is_absolute() {
            dir.clone()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(dir)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_finds_keys_within_sections() {
        let text = "{\n  \"kernel\": {\"gamma\": -1},\n  \"time\": {\n    \"dt\": 0\n  }\n}";
        assert_eq!(locate(text, Some("time"), "dt"), Some(4));
        assert_eq!(locate(text, None, "gamma"), Some(2));
        assert_eq!(locate(text, Some("output"), "dir"), None);
    }
}
