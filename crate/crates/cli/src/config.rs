//! Run configuration: flat `key = value` lines under `[section]` headers.
//! Blank lines and lines starting with `#` or `;` are ignored. Every key has a
//! default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gbc_core::models::{build_simulator, EpidemicScenario, PriorDist, PriorSpec, SimulatorParams};
use gbc_core::numerics::OptimizerMethod;
use gbc_core::quantile::IqnSpec;
use gbc_core::summaries::YTransform;
use gbc_core::train::TrainOptions;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate key '{key}' in [{section}]")]
    Duplicate { section: String, key: String, line: usize },
    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey { section: String, key: String, line: usize },
    #[error("[{section}] {key}: {msg}")]
    Invalid { section: String, key: String, msg: String },
}

/// Raw `(section, key) -> (value, line)` table.
#[derive(Debug, Default)]
struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section = String::from("run");
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    msg: format!("unterminated section header '{t}'"),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        msg: format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", ")),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: format!("expected 'key = value', got '{t}'"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: "empty key".into(),
                });
            }
            let slot = (section.clone(), key.clone());
            if raw.entries.contains_key(&slot) {
                return Err(ConfigError::Duplicate {
                    section,
                    key,
                    line: line_no,
                });
            }
            raw.entries.insert(slot, (v.trim().to_string(), line_no));
        }
        Ok(raw)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.remove(&(section.to_string(), key.to_string())).map(|(v, _)| v)
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| invalid(section, key, format!("'{v}': {e}"))),
        }
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|e: T::Err| invalid(section, key, format!("'{}': {e}", p.trim())))
                })
                .collect(),
        }
    }

    /// Remaining `(key, value, line)` entries of `section`, consumed.
    fn drain_section(&mut self, section: &str) -> Vec<(String, String, usize)> {
        let keys: Vec<(String, String)> = self
            .entries
            .keys()
            .filter(|(s, _)| s == section)
            .cloned()
            .collect();
        keys.into_iter()
            .map(|k| {
                let (v, line) = self.entries.remove(&k).expect("key listed");
                (k.1, v, line)
            })
            .collect()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some(((section, key), (_, line))) => Err(ConfigError::UnknownKey { section, key, line }),
        }
    }
}

fn invalid(section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        section: section.into(),
        key: key.into(),
        msg: msg.into(),
    }
}

const SECTIONS: [&str; 11] = [
    "run",
    "simulator",
    "prior",
    "summary",
    "network",
    "optimizer",
    "sample",
    "abc",
    "fiducial",
    "epidemic",
    "gradcheck",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub simulator: String,
    pub seed: u64,
    /// Reference-table rows.
    pub rows: usize,
    pub out: String,
    /// Table path; relative paths are resolved against `out`.
    pub table: String,
    /// Checkpoint path; relative paths are resolved against `out`.
    pub checkpoint: String,
    /// Worker threads, 0 for the runtime default.
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryChoice {
    /// Least-squares linear map fitted on the table.
    Linear,
    /// Sample mean of the observations.
    Mean,
    /// Raw observations.
    Identity,
    /// Posterior-mean regression network.
    Network,
}

impl SummaryChoice {
    pub fn name(self) -> &'static str {
        match self {
            SummaryChoice::Linear => "linear",
            SummaryChoice::Mean => "mean",
            SummaryChoice::Identity => "identity",
            SummaryChoice::Network => "network",
        }
    }
}

impl FromStr for SummaryChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "linear" => SummaryChoice::Linear,
            "mean" => SummaryChoice::Mean,
            "identity" => SummaryChoice::Identity,
            "network" => SummaryChoice::Network,
            _ => return Err("expected linear, mean, identity or network".into()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySection {
    pub kind: SummaryChoice,
    pub transform: YTransform,
    pub hidden: Vec<usize>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSection {
    pub method: String,
    pub momentum: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay: f64,
    pub average_tail: f64,
    pub weight_decay: f64,
}

impl OptimizerSection {
    pub fn train_options(&self, seed: u64) -> TrainOptions {
        let method = if self.method == "sgd" {
            OptimizerMethod::sgd(self.momentum)
        } else {
            OptimizerMethod::adam()
        };
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            step_size: self.step_size,
            method,
            seed,
            decay: self.decay,
            average_tail: self.average_tail,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSection {
    /// File with the observed data; when absent the observation is simulated
    /// at `theta_true`.
    pub y_obs: Option<String>,
    pub theta_true: Vec<f64>,
    pub draws: usize,
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcSection {
    /// Tolerances in units of the prior-predictive summary sd.
    pub epsilons: Vec<f64>,
    pub budget: usize,
    /// Prior-predictive draws used to estimate summary scales.
    pub pilot: usize,
    /// Bootstrap replicates for the Monte Carlo error of W1.
    pub bootstrap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiducialModelChoice {
    Location,
    NormalSummary,
}

impl FiducialModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            FiducialModelChoice::Location => "location",
            FiducialModelChoice::NormalSummary => "normal-summary",
        }
    }
}

impl FromStr for FiducialModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "location" => Ok(FiducialModelChoice::Location),
            "normal-summary" => Ok(FiducialModelChoice::NormalSummary),
            _ => Err("expected location or normal-summary".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiducialSection {
    pub model: FiducialModelChoice,
    /// Observed data: `y` for the location model, `ȳ, s²` for the normal one.
    pub y: Vec<f64>,
    /// Sample size behind `ȳ, s²`.
    pub n: usize,
    pub epsilon: f64,
    pub budget: usize,
    pub per_coordinate: bool,
    pub tolerance: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicSection {
    pub scenarios: usize,
    pub replicates: usize,
    pub holdout: usize,
    pub probs: Vec<f64>,
    /// Central probability of the predictive band.
    pub band: f64,
    /// Bootstrap resamples of each training scenario's replicates.
    pub bootstrap: usize,
    /// Emulator training epochs.
    pub epochs: usize,
    /// Training scenarios held back to calibrate the band width; 0 keeps
    /// the raw network band.
    pub calibration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSection {
    pub nets: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunSection,
    pub simulator: SimulatorParams,
    pub prior: PriorSpec,
    pub summary: SummarySection,
    pub network: IqnSpec,
    pub optimizer: OptimizerSection,
    pub sample: SampleSection,
    pub abc: AbcSection,
    pub fiducial: FiducialSection,
    pub epidemic: EpidemicSection,
    pub gradcheck: GradcheckSection,
}

/// Prior used when the config has no `[prior]` section.
pub fn default_prior(simulator: &str, theta_dim: usize) -> PriorSpec {
    let dists: Vec<PriorDist> = match simulator {
        "normal-normal" => vec![PriorDist::Normal {
            mean: 0.0,
            variance: 5.0,
        }],
        "epidemic" | "epidemic-quantile" => {
            let mut d: Vec<PriorDist> = EpidemicScenario::RANGES
                .iter()
                .map(|&(lo, hi)| PriorDist::Uniform { lo, hi })
                .collect();
            if simulator == "epidemic-quantile" {
                d.push(PriorDist::Uniform { lo: 0.0, hi: 1.0 });
            }
            d
        }
        _ => vec![PriorDist::Uniform { lo: 0.0, hi: 1.0 }; theta_dim],
    };
    PriorSpec::new(dists).expect("built-in priors are valid")
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::parse(text)?;
        let run = RunSection {
            simulator: raw.get("run", "simulator", "normal-normal".to_string())?,
            seed: raw.get("run", "seed", 1u64)?,
            rows: raw.get("run", "rows", 10_000usize)?,
            out: raw.get("run", "out", "out".to_string())?,
            table: raw.get("run", "table", "table.csv".to_string())?,
            checkpoint: raw.get("run", "checkpoint", "model.gbcq".to_string())?,
            threads: raw.get("run", "threads", 0usize)?,
        };
        if run.rows == 0 {
            return Err(invalid("run", "rows", "must be >= 1"));
        }

        let mut simulator = SimulatorParams::new();
        for (k, v, _) in raw.drain_section("simulator") {
            let x: f64 = v
                .parse()
                .map_err(|e| invalid("simulator", &k, format!("'{v}': {e}")))?;
            simulator.insert(k, x);
        }
        let sim = build_simulator(&run.simulator, &simulator).map_err(|e| invalid("run", "simulator", e.to_string()))?;

        let mut prior_entries: Vec<(usize, PriorDist)> = Vec::new();
        for (k, v, line) in raw.drain_section("prior") {
            let idx = k
                .strip_prefix("theta")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .ok_or(ConfigError::UnknownKey {
                    section: "prior".into(),
                    key: k.clone(),
                    line,
                })?;
            let d: PriorDist = v.parse().map_err(|e: gbc_core::models::ModelError| invalid("prior", &k, e.to_string()))?;
            prior_entries.push((idx, d));
        }
        prior_entries.sort_by_key(|(i, _)| *i);
        let prior = if prior_entries.is_empty() {
            default_prior(&run.simulator, sim.theta_dim())
        } else {
            if prior_entries.iter().enumerate().any(|(j, (i, _))| *i != j + 1) {
                return Err(invalid("prior", "theta", "keys must be theta1, theta2, ... without gaps"));
            }
            PriorSpec::new(prior_entries.into_iter().map(|(_, d)| d).collect())
                .map_err(|e| invalid("prior", "theta", e.to_string()))?
        };
        if prior.dim() != sim.theta_dim() {
            return Err(invalid(
                "prior",
                "theta",
                format!("{} coordinates, simulator '{}' takes {}", prior.dim(), run.simulator, sim.theta_dim()),
            ));
        }

        let transform_name = raw.get("summary", "transform", "identity".to_string())?;
        let summary = SummarySection {
            kind: raw.get("summary", "kind", SummaryChoice::Linear)?,
            transform: YTransform::from_name(&transform_name)
                .ok_or_else(|| invalid("summary", "transform", "expected identity or log1p"))?,
            hidden: raw.list("summary", "hidden", vec![64, 64])?,
            epochs: raw.get("summary", "epochs", 50usize)?,
        };

        let d = IqnSpec::default();
        let network = IqnSpec {
            feature_hidden: raw.list("network", "feature_hidden", d.feature_hidden)?,
            embed_dim: raw.get("network", "embed_dim", d.embed_dim)?,
            n_cos: raw.get("network", "n_cos", d.n_cos)?,
            head_hidden: raw.list("network", "head_hidden", d.head_hidden)?,
        };
        if network.embed_dim == 0 || network.n_cos == 0 {
            return Err(invalid("network", "embed_dim", "embed_dim and n_cos must be >= 1"));
        }

        let optimizer = OptimizerSection {
            method: raw.get("optimizer", "method", "adam".to_string())?,
            momentum: raw.get("optimizer", "momentum", 0.9)?,
            step_size: raw.get("optimizer", "step_size", 1e-3)?,
            epochs: raw.get("optimizer", "epochs", 150usize)?,
            batch_size: raw.get("optimizer", "batch_size", 128usize)?,
            decay: raw.get("optimizer", "decay", 0.96)?,
            average_tail: raw.get("optimizer", "average_tail", 0.5)?,
            weight_decay: raw.get("optimizer", "weight_decay", 0.0)?,
        };
        if optimizer.method != "adam" && optimizer.method != "sgd" {
            return Err(invalid("optimizer", "method", "expected adam or sgd"));
        }
        optimizer
            .train_options(0)
            .validate()
            .map_err(|e| invalid("optimizer", "epochs", e.to_string()))?;

        let y_obs = raw.get("sample", "y_obs", String::new())?;
        let sample = SampleSection {
            y_obs: (!y_obs.is_empty()).then_some(y_obs),
            theta_true: raw.list("sample", "theta_true", prior.coords().iter().map(|c| c.mean()).collect())?,
            draws: raw.get("sample", "draws", 10_000usize)?,
            taus: raw.list("sample", "taus", gbc_core::quantile::default_tau_grid())?,
        };
        if sample.theta_true.len() != prior.dim() {
            return Err(invalid("sample", "theta_true", format!("need {} values", prior.dim())));
        }
        if sample.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || sample.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("sample", "taus", "must be strictly increasing inside (0, 1)"));
        }

        let abc = AbcSection {
            epsilons: raw.list("abc", "epsilons", vec![2.0, 1.0, 0.5, 0.25, 0.1])?,
            budget: raw.get("abc", "budget", 200_000usize)?,
            pilot: raw.get("abc", "pilot", 10_000usize)?,
            bootstrap: raw.get("abc", "bootstrap", 100usize)?,
        };
        if abc.epsilons.is_empty() || abc.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(invalid("abc", "epsilons", "need at least one tolerance, all >= 0"));
        }
        if abc.budget == 0 || abc.pilot < 2 || abc.bootstrap < 2 {
            return Err(invalid("abc", "budget", "budget >= 1, pilot >= 2 and bootstrap >= 2 required"));
        }

        let fiducial = FiducialSection {
            model: raw.get("fiducial", "model", FiducialModelChoice::Location)?,
            y: raw.list("fiducial", "y", vec![0.0])?,
            n: raw.get("fiducial", "n", 50usize)?,
            epsilon: raw.get("fiducial", "epsilon", 1e-6)?,
            budget: raw.get("fiducial", "budget", 10_000usize)?,
            per_coordinate: raw.get("fiducial", "per_coordinate", false)?,
            tolerance: raw.get("fiducial", "tolerance", 1e-8)?,
            max_iter: raw.get("fiducial", "max_iter", 200usize)?,
        };
        let want = match fiducial.model {
            FiducialModelChoice::Location => 1,
            FiducialModelChoice::NormalSummary => 2,
        };
        if fiducial.y.len() != want {
            return Err(invalid("fiducial", "y", format!("model {} needs {want} values", fiducial.model.name())));
        }
        if fiducial.model == FiducialModelChoice::NormalSummary && !(fiducial.y[1] > 0.0 && fiducial.n >= 2) {
            return Err(invalid("fiducial", "y", "sample variance must be > 0 and n >= 2"));
        }

        let epidemic = EpidemicSection {
            scenarios: raw.get("epidemic", "scenarios", 100usize)?,
            replicates: raw.get("epidemic", "replicates", 100usize)?,
            holdout: raw.get("epidemic", "holdout", 3usize)?,
            probs: raw.list("epidemic", "probs", gbc_core::models::DEFAULT_QUANTILE_PROBS.to_vec())?,
            band: raw.get("epidemic", "band", 0.9)?,
            bootstrap: raw.get("epidemic", "bootstrap", 4usize)?,
            epochs: raw.get("epidemic", "epochs", 40usize)?,
            calibration: raw.get("epidemic", "calibration", 20usize)?,
        };
        if epidemic.holdout == 0 || epidemic.holdout >= epidemic.scenarios || epidemic.replicates == 0 {
            return Err(invalid("epidemic", "holdout", "need 1 <= holdout < scenarios and replicates >= 1"));
        }
        if epidemic.holdout + epidemic.calibration >= epidemic.scenarios {
            return Err(invalid("epidemic", "calibration", "holdout + calibration must leave a training scenario"));
        }
        if epidemic.bootstrap == 0 || epidemic.epochs == 0 {
            return Err(invalid("epidemic", "bootstrap", "bootstrap and epochs must be >= 1"));
        }
        if !(epidemic.band > 0.0 && epidemic.band < 1.0) {
            return Err(invalid("epidemic", "band", "must lie in (0, 1)"));
        }

        let gradcheck = GradcheckSection {
            nets: raw.get("gradcheck", "nets", 100usize)?,
            step: raw.get("gradcheck", "step", 1e-6)?,
        };
        if !(gradcheck.step > 0.0) {
            return Err(invalid("gradcheck", "step", "must be > 0"));
        }

        raw.finish()?;
        Ok(RunConfig {
            run,
            simulator,
            prior,
            summary,
            network,
            optimizer,
            sample,
            abc,
            fiducial,
            epidemic,
            gradcheck,
        })
    }

    /// Canonical text with every key spelled out; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let r = &self.run;
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "simulator = {}", r.simulator);
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "rows = {}", r.rows);
        let _ = writeln!(s, "out = {}", r.out);
        let _ = writeln!(s, "table = {}", r.table);
        let _ = writeln!(s, "checkpoint = {}", r.checkpoint);
        let _ = writeln!(s, "threads = {}", r.threads);
        let _ = writeln!(s, "\n[simulator]");
        for (k, v) in &self.simulator {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[prior]");
        for (i, d) in self.prior.coords().iter().enumerate() {
            let _ = writeln!(s, "theta{} = {d}", i + 1);
        }
        let m = &self.summary;
        let _ = writeln!(s, "\n[summary]");
        let _ = writeln!(s, "kind = {}", m.kind.name());
        let _ = writeln!(s, "transform = {}", m.transform.name());
        let _ = writeln!(s, "hidden = {}", join(&m.hidden));
        let _ = writeln!(s, "epochs = {}", m.epochs);
        let n = &self.network;
        let _ = writeln!(s, "\n[network]");
        let _ = writeln!(s, "feature_hidden = {}", join(&n.feature_hidden));
        let _ = writeln!(s, "embed_dim = {}", n.embed_dim);
        let _ = writeln!(s, "n_cos = {}", n.n_cos);
        let _ = writeln!(s, "head_hidden = {}", join(&n.head_hidden));
        let o = &self.optimizer;
        let _ = writeln!(s, "\n[optimizer]");
        let _ = writeln!(s, "method = {}", o.method);
        let _ = writeln!(s, "momentum = {}", o.momentum);
        let _ = writeln!(s, "step_size = {}", o.step_size);
        let _ = writeln!(s, "epochs = {}", o.epochs);
        let _ = writeln!(s, "batch_size = {}", o.batch_size);
        let _ = writeln!(s, "decay = {}", o.decay);
        let _ = writeln!(s, "average_tail = {}", o.average_tail);
        let _ = writeln!(s, "weight_decay = {}", o.weight_decay);
        let p = &self.sample;
        let _ = writeln!(s, "\n[sample]");
        let _ = writeln!(s, "y_obs = {}", p.y_obs.as_deref().unwrap_or(""));
        let _ = writeln!(s, "theta_true = {}", join(&p.theta_true));
        let _ = writeln!(s, "draws = {}", p.draws);
        let _ = writeln!(s, "taus = {}", join(&p.taus));
        let a = &self.abc;
        let _ = writeln!(s, "\n[abc]");
        let _ = writeln!(s, "epsilons = {}", join(&a.epsilons));
        let _ = writeln!(s, "budget = {}", a.budget);
        let _ = writeln!(s, "pilot = {}", a.pilot);
        let _ = writeln!(s, "bootstrap = {}", a.bootstrap);
        let f = &self.fiducial;
        let _ = writeln!(s, "\n[fiducial]");
        let _ = writeln!(s, "model = {}", f.model.name());
        let _ = writeln!(s, "y = {}", join(&f.y));
        let _ = writeln!(s, "n = {}", f.n);
        let _ = writeln!(s, "epsilon = {}", f.epsilon);
        let _ = writeln!(s, "budget = {}", f.budget);
        let _ = writeln!(s, "per_coordinate = {}", f.per_coordinate);
        let _ = writeln!(s, "tolerance = {}", f.tolerance);
        let _ = writeln!(s, "max_iter = {}", f.max_iter);
        let e = &self.epidemic;
        let _ = writeln!(s, "\n[epidemic]");
        let _ = writeln!(s, "scenarios = {}", e.scenarios);
        let _ = writeln!(s, "replicates = {}", e.replicates);
        let _ = writeln!(s, "holdout = {}", e.holdout);
        let _ = writeln!(s, "probs = {}", join(&e.probs));
        let _ = writeln!(s, "band = {}", e.band);
        let _ = writeln!(s, "bootstrap = {}", e.bootstrap);
        let _ = writeln!(s, "epochs = {}", e.epochs);
        let _ = writeln!(s, "calibration = {}", e.calibration);
        let g = &self.gradcheck;
        let _ = writeln!(s, "\n[gradcheck]");
        let _ = writeln!(s, "nets = {}", g.nets);
        let _ = writeln!(s, "step = {}", g.step);
        s
    }

    pub fn load(path: &Path) -> Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Self::parse(&text)?)
    }

    /// SHA-256 of the canonical rendering.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.render().as_bytes()).into()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.run.out)
    }

    fn in_out(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir().join(p)
        }
    }

    pub fn table_path(&self) -> PathBuf {
        self.in_out(&self.run.table)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.in_out(&self.run.checkpoint)
    }

    pub fn train_options(&self) -> TrainOptions {
        self.optimizer.train_options(self.run.seed)
    }
}
