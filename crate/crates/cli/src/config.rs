//! Experiment configuration: built-in defaults, then the root of a TOML file,
//! then the file's section for the subcommand, then command-line flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use jofc::baseline::PrmSettings;
use jofc::omnibus::{ImputationPolicy, OmnibusOptions};
use jofc::pipeline::{JofcSettings, OosMode};
use jofc::simgauss::{GaussianSettingParams, SigmaForm};
use jofc::solver::{Init, SolverSettings};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Sweep,
    Embed,
    Oos,
    Holdout,
    Baseline,
    Dimselect,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Embed => "embed",
            Mode::Oos => "oos",
            Mode::Holdout => "holdout",
            Mode::Baseline => "baseline",
            Mode::Dimselect => "dimselect",
        }
    }

    const ALL: [Mode; 7] =
        [Mode::Simulate, Mode::Sweep, Mode::Embed, Mode::Oos, Mode::Holdout, Mode::Baseline, Mode::Dimselect];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Ignore,
    Impute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    Isotropic,
    RandomPsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OosKind {
    Fixed,
    Joint,
}

/// Every settable key. Used for the file layers and for command-line flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Base seed; replicate k uses seed + k
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available processors)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Training objects per trial
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Test pairs per hypothesis
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Ambient dimension of the Gaussian setting
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// Inverse noise scale; the noise covariance has top eigenvalue 1/r
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Noise covariance shape
    #[arg(long, global = true, value_enum)]
    pub sigma: Option<Sigma>,
    /// Seed of the random covariance
    #[arg(long, global = true)]
    pub sigma_seed: Option<u64>,
    /// Embedding dimension
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Commensurability weight
    #[arg(long, global = true)]
    pub w: Option<f64>,
    /// Comma-separated w values for sweeps
    #[arg(long, global = true, value_delimiter = ',')]
    pub w_grid: Option<Vec<f64>>,
    /// Monte Carlo or holdout replicates
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Comma-separated type I error levels
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Points of the alpha grid used for ROC output
    #[arg(long, global = true)]
    pub roc_points: Option<usize>,
    /// Treatment of unmatched cross-condition entries
    #[arg(long, global = true, value_enum)]
    pub policy: Option<Policy>,
    /// Weight on mean-imputed separability entries (impute policy only)
    #[arg(long, global = true)]
    pub separability_weight: Option<f64>,
    /// Divide each dissimilarity matrix by its Frobenius norm
    #[arg(long, global = true)]
    pub normalize: Option<bool>,
    /// Keep the training embedding fixed or re-embed with the test pair
    #[arg(long, global = true, value_enum)]
    pub oos_mode: Option<OosKind>,
    /// Allow a uniform scale in the Procrustes baseline
    #[arg(long, global = true)]
    pub allow_scale: Option<bool>,
    /// SMACOF iteration cap
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    /// Relative stress decrease at which SMACOF stops
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Starts per out-of-sample point
    #[arg(long, global = true)]
    pub oos_starts: Option<usize>,
    /// Condition 1 dissimilarity matrix (CSV)
    #[arg(long, global = true)]
    pub delta1: Option<PathBuf>,
    /// Condition 2 dissimilarity matrix (CSV)
    #[arg(long, global = true)]
    pub delta2: Option<PathBuf>,
    /// Condition 1 test vectors, one per row (CSV)
    #[arg(long, global = true)]
    pub tests1: Option<PathBuf>,
    /// Condition 2 test vectors, one per row (CSV)
    #[arg(long, global = true)]
    pub tests2: Option<PathBuf>,

    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oos: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Box<Overrides>>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimselect: Option<Box<Overrides>>,
}

impl Overrides {
    fn section(&self, mode: Mode) -> Option<&Overrides> {
        let s = match mode {
            Mode::Simulate => &self.simulate,
            Mode::Sweep => &self.sweep,
            Mode::Embed => &self.embed,
            Mode::Oos => &self.oos,
            Mode::Holdout => &self.holdout,
            Mode::Baseline => &self.baseline,
            Mode::Dimselect => &self.dimselect,
        };
        s.as_deref()
    }

    /// Keys explicitly set in this layer, excluding sections.
    fn set_keys(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("overrides serialize") {
            Value::Object(map) => {
                map.into_iter().filter(|(k, v)| !v.is_null() && !Mode::ALL.iter().any(|m| m.name() == k)).collect()
            }
            _ => Map::new(),
        }
    }
}

/// The grid of the reference Monte Carlo study.
pub const DEFAULT_W_GRID: [f64; 15] =
    [0.1, 0.4, 0.5, 0.8, 0.85, 0.9, 0.91, 0.92, 0.925, 0.93, 0.94, 0.95, 0.96, 0.99, 0.999];

/// Fully resolved experiment. Serialized (without `workers` and `out`) to
/// compute the config hash stamped on every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub r: f64,
    pub sigma: Sigma,
    pub sigma_seed: u64,
    pub d: usize,
    pub w: f64,
    pub w_grid: Vec<f64>,
    pub replicates: usize,
    pub alpha: Vec<f64>,
    pub roc_points: usize,
    pub policy: Policy,
    pub separability_weight: f64,
    pub normalize: bool,
    pub oos_mode: OosKind,
    pub allow_scale: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub oos_starts: usize,
    pub delta1: Option<PathBuf>,
    pub delta2: Option<PathBuf>,
    pub tests1: Option<PathBuf>,
    pub tests2: Option<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Where a resolved key came from, for error messages.
enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag,
}

/// A parsed configuration file.
pub struct ConfigFile {
    path: PathBuf,
    text: String,
    layers: Overrides,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ConfigFile {
    pub fn parse(text: String, path: &Path) -> Result<Self, CliError> {
        let layers: Overrides = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(&text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
        for mode in Mode::ALL {
            if let Some(section) = layers.section(mode) {
                if let Some(inner) = Mode::ALL.iter().find(|m| section.section(**m).is_some()) {
                    return Err(CliError::Config {
                        path: path.to_path_buf(),
                        line: find_section(&text, &format!("{}.{}", mode.name(), inner.name())).unwrap_or(1),
                        message: "sections cannot be nested".into(),
                    });
                }
            }
        }
        Ok(Self { path: path.to_path_buf(), text, layers })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::parse(text, path)
    }

    /// Line of `key` in the section for `mode`, else at the root.
    fn locate(&self, mode: Mode, key: &str) -> Option<usize> {
        if self.layers.section(mode).map(|s| s.set_keys().contains_key(key)).unwrap_or(false) {
            return find_key(&self.text, Some(mode.name()), key);
        }
        if self.layers.set_keys().contains_key(key) {
            return find_key(&self.text, None, key);
        }
        None
    }
}

fn header_name(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix('[')?.split(']').next().map(str::trim)
}

fn find_section(text: &str, name: &str) -> Option<usize> {
    text.lines().position(|l| header_name(l) == Some(name)).map(|k| k + 1)
}

/// Line number of `key = ...` inside `section` (`None` for the root).
fn find_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<&str> = None;
    for (k, line) in text.lines().enumerate() {
        if let Some(name) = header_name(line) {
            current = Some(name);
            continue;
        }
        let t = line.trim_start();
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(k + 1);
                }
            }
        }
    }
    None
}

fn merged(layers: &[&Overrides]) -> Overrides {
    let mut map = Map::new();
    for layer in layers {
        map.extend(layer.set_keys());
    }
    serde_json::from_value(Value::Object(map)).expect("merged layers deserialize")
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl ExperimentSpec {
    /// Resolves defaults, the optional file and the flags for `mode`.
    pub fn resolve(mode: Mode, file: Option<&ConfigFile>, flags: &Overrides) -> Result<Self, CliError> {
        let empty = Overrides::default();
        let root = file.map(|f| &f.layers).unwrap_or(&empty);
        let section = root.section(mode).unwrap_or(&empty);
        let o = merged(&[root, section, flags]);
        let spec = Self {
            mode,
            seed: o.seed.unwrap_or(0),
            n: o.n.unwrap_or(150),
            m: o.m.unwrap_or(250),
            p: o.p.unwrap_or(5),
            r: o.r.unwrap_or(10.0),
            sigma: o.sigma.unwrap_or(Sigma::Isotropic),
            sigma_seed: o.sigma_seed.unwrap_or(0),
            d: o.d.unwrap_or(5),
            w: o.w.unwrap_or(0.5),
            w_grid: o.w_grid.unwrap_or_else(|| DEFAULT_W_GRID.to_vec()),
            replicates: o.replicates.unwrap_or(if mode == Mode::Holdout { 200 } else { 50 }),
            alpha: o.alpha.unwrap_or_else(|| vec![0.05]),
            roc_points: o.roc_points.unwrap_or(101),
            policy: o.policy.unwrap_or(Policy::Ignore),
            separability_weight: o.separability_weight.unwrap_or(0.0),
            normalize: o.normalize.unwrap_or(true),
            oos_mode: o.oos_mode.unwrap_or(OosKind::Fixed),
            allow_scale: o.allow_scale.unwrap_or(false),
            max_iterations: o.max_iterations.unwrap_or(1000),
            tolerance: o.tolerance.unwrap_or(1e-7),
            oos_starts: o.oos_starts.unwrap_or(5),
            delta1: o.delta1,
            delta2: o.delta2,
            tests1: o.tests1,
            tests2: o.tests2,
            workers: o.workers.unwrap_or_else(default_workers),
            out: o.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        if let Err((key, message)) = spec.check() {
            let origin = if flags.set_keys().contains_key(key) {
                Origin::Flag
            } else if let Some(line) = file.and_then(|f| f.locate(mode, key)) {
                Origin::File { path: file.expect("located in file").path.clone(), line }
            } else {
                Origin::Default
            };
            return Err(match origin {
                Origin::File { path, line } => CliError::Config { path, line, message: format!("{key}: {message}") },
                Origin::Flag => CliError::Usage(format!("--{}: {message}", key.replace('_', "-"))),
                Origin::Default => CliError::Usage(format!("{key}: {message}")),
            });
        }
        Ok(spec)
    }

    fn check(&self) -> Result<(), (&'static str, String)> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        for (key, v) in [("n", self.n), ("m", self.m), ("p", self.p), ("d", self.d), ("replicates", self.replicates)] {
            if v == 0 {
                return Err((key, "must be at least 1".into()));
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(("r", format!("must be positive, got {}", self.r)));
        }
        if !unit(self.w) {
            return Err(("w", format!("must lie in (0, 1), got {}", self.w)));
        }
        if self.w_grid.is_empty() {
            return Err(("w_grid", "must not be empty".into()));
        }
        if let Some(w) = self.w_grid.iter().find(|w| !unit(**w)) {
            return Err(("w_grid", format!("values must lie in (0, 1), got {w}")));
        }
        if self.w_grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(("w_grid", "values must be strictly increasing".into()));
        }
        if self.alpha.is_empty() {
            return Err(("alpha", "must not be empty".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !unit(**a)) {
            return Err(("alpha", format!("values must lie in (0, 1), got {a}")));
        }
        if self.roc_points < 2 {
            return Err(("roc_points", "must be at least 2".into()));
        }
        if !(self.separability_weight >= 0.0 && self.separability_weight.is_finite()) {
            return Err(("separability_weight", "must be finite and nonnegative".into()));
        }
        if self.max_iterations == 0 {
            return Err(("max_iterations", "must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(("tolerance", "must be positive".into()));
        }
        if self.oos_starts == 0 {
            return Err(("oos_starts", "must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(("workers", "must be at least 1".into()));
        }
        let needs: &[&'static str] = match self.mode {
            Mode::Embed | Mode::Holdout => &["delta1", "delta2"],
            Mode::Oos => &["delta1", "delta2", "tests1", "tests2"],
            Mode::Dimselect => &["delta1"],
            _ => &[],
        };
        for &key in needs {
            let path = match key {
                "delta1" => &self.delta1,
                "delta2" => &self.delta2,
                "tests1" => &self.tests1,
                _ => &self.tests2,
            };
            match path {
                None => return Err((key, format!("an input path is required by `{}`", self.mode.name()))),
                Some(p) if !p.is_file() => return Err((key, format!("{} does not exist", p.display()))),
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            max_iterations: self.max_iterations,
            relative_tolerance: self.tolerance,
            init: Init::ClassicalMds,
            oos_starts: self.oos_starts,
            seed: self.seed,
        }
    }

    pub fn jofc(&self) -> JofcSettings {
        JofcSettings {
            d: self.d,
            omnibus: OmnibusOptions {
                policy: match self.policy {
                    Policy::Ignore => ImputationPolicy::Ignore,
                    Policy::Impute => ImputationPolicy::MeanImpute,
                },
                normalize: self.normalize,
                separability_weight: self.separability_weight,
            },
            solver: self.solver(),
            oos_mode: match self.oos_mode {
                OosKind::Fixed => OosMode::Fixed,
                OosKind::Joint => OosMode::Joint,
            },
        }
    }

    pub fn prm(&self) -> PrmSettings {
        PrmSettings { d: self.d, normalize: self.normalize, allow_scale: self.allow_scale, solver: self.solver() }
    }

    pub fn gaussian(&self) -> GaussianSettingParams {
        GaussianSettingParams {
            n: self.n,
            m: self.m,
            p: self.p,
            r: self.r,
            sigma: match self.sigma {
                Sigma::Isotropic => SigmaForm::Isotropic,
                Sigma::RandomPsd => SigmaForm::RandomPsd { seed: self.sigma_seed },
            },
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile, CliError> {
        ConfigFile::parse(text.to_string(), Path::new("exp.toml"))
    }

    fn config_line(err: CliError) -> usize {
        match err {
            CliError::Config { line, .. } => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn layers_override_in_order() {
        let file = parse("seed = 3\nn = 20\n[sweep]\nn = 30\nw_grid = [0.2, 0.7]\n").unwrap();
        let flags = Overrides { seed: Some(9), ..Default::default() };
        let spec = ExperimentSpec::resolve(Mode::Sweep, Some(&file), &flags).unwrap();
        assert_eq!((spec.seed, spec.n, spec.w_grid.clone()), (9, 30, vec![0.2, 0.7]));
        let spec = ExperimentSpec::resolve(Mode::Simulate, Some(&file), &Overrides::default()).unwrap();
        assert_eq!((spec.seed, spec.n), (3, 20));
        assert_eq!(spec.w_grid, DEFAULT_W_GRID.to_vec());
    }

    #[test]
    fn defaults_depend_on_mode() {
        let s = ExperimentSpec::resolve(Mode::Sweep, None, &Overrides::default()).unwrap();
        assert_eq!(s.replicates, 50);
        assert_eq!(s.r, 10.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "0,1\n1,0\n").unwrap();
        let flags = Overrides { delta1: Some(p.clone()), delta2: Some(p), ..Default::default() };
        assert_eq!(ExperimentSpec::resolve(Mode::Holdout, None, &flags).unwrap().replicates, 200);
    }

    #[test]
    fn syntax_and_type_errors_carry_lines() {
        assert_eq!(config_line(parse("seed = 1\nn = \"ten\"\n").err().unwrap()), 2);
        assert_eq!(config_line(parse("seed = 1\n\nbogus = 2\n").err().unwrap()), 3);
        assert_eq!(config_line(parse("seed = 1\n[sweep\n").err().unwrap()), 2);
        assert_eq!(config_line(parse("[sweep]\n[sweep.embed]\nn = 2\n").err().unwrap()), 2);
    }

    #[test]
    fn value_errors_point_at_the_key() {
        let file = parse("seed = 1\nw = 0.5\n[sweep]\n# comment\nw = 1.5\n").unwrap();
        let err = ExperimentSpec::resolve(Mode::Sweep, Some(&file), &Overrides::default()).unwrap_err();
        assert_eq!(config_line(err), 5);
        let file = parse("alpha = [0.05, 2.0]\n").unwrap();
        let err = ExperimentSpec::resolve(Mode::Sweep, Some(&file), &Overrides::default()).unwrap_err();
        assert_eq!(config_line(err), 1);
        let flags = Overrides { w_grid: Some(vec![0.5, 0.2]), ..Default::default() };
        assert!(matches!(
            ExperimentSpec::resolve(Mode::Sweep, None, &flags),
            Err(CliError::Usage(m)) if m.starts_with("--w-grid")
        ));
    }

    #[test]
    fn read_modes_need_inputs() {
        let err = ExperimentSpec::resolve(Mode::Embed, None, &Overrides::default()).unwrap_err();
        assert!(matches!(err, CliError::Usage(m) if m.contains("delta1")));
        let flags = Overrides {
            delta1: Some("/nonexistent/a.csv".into()),
            delta2: Some("/nonexistent/b.csv".into()),
            ..Default::default()
        };
        assert!(ExperimentSpec::resolve(Mode::Embed, None, &flags).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_out() {
        let a = ExperimentSpec::resolve(Mode::Sweep, None, &Overrides::default()).unwrap();
        let b = ExperimentSpec::resolve(
            Mode::Sweep,
            None,
            &Overrides { workers: Some(3), out: Some("elsewhere".into()), ..Default::default() },
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentSpec::resolve(Mode::Sweep, None, &Overrides { seed: Some(1), ..Default::default() }).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
