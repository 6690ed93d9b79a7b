//! Run settings shared by `run` and `sweep`, from flags and config files.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use fracbayes::engine::{RunConfig, StepsizeSpec, TraceHeader};
use fracbayes::graph::TopologySpec;
use fracbayes::model::ProblemSpec;
use fracbayes::presets::preset_registry;
use serde::Deserialize;
use serde_json::json;

/// Bad flags or config files. Maps to exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

/// Every key of a config file mirrors the flag of the same name.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Named experiment (see `fracbayes presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with the same keys as these flags; flags win.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    #[arg(long, value_name = "N")]
    pub agents: Option<usize>,
    /// path, complete or er:P.
    #[arg(long)]
    pub topology: Option<String>,
    /// log or linear.
    #[arg(long)]
    pub consensus: Option<String>,
    /// GAMMA,OFFSET for the schedule GAMMA/(t+OFFSET).
    #[arg(long, value_name = "GAMMA,OFFSET")]
    pub stepsize: Option<String>,
    /// Observation noise std.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Noise std assumed by the likelihoods; defaults to --sigma.
    #[arg(long)]
    pub likelihood_sigma: Option<f64>,
    /// Problem kind: quadratic, ideal-plume or ground-plume.
    #[arg(long)]
    pub problem: Option<String>,
    /// Decision dimension for the quadratic problem.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
    /// Output directory for traces.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Record every K-th iteration.
    #[arg(long, value_name = "K")]
    pub cadence: Option<usize>,
    /// Also write per-agent beliefs and decisions.
    #[arg(long)]
    #[serde(default)]
    pub per_agent: bool,
    /// Allow stepsizes above 1/(2L); violations are counted and logged.
    #[arg(long)]
    #[serde(default)]
    pub no_cap: bool,
}

pub const DEFAULT_OUT: &str = "runs";

impl Settings {
    /// Fills unset fields from the `--config` file, if any.
    pub fn with_file(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_file(&path)?;
        Ok(Self {
            preset: self.preset.or(file.preset),
            config: self.config,
            seed: self.seed.or(file.seed),
            iters: self.iters.or(file.iters),
            agents: self.agents.or(file.agents),
            topology: self.topology.or(file.topology),
            consensus: self.consensus.or(file.consensus),
            stepsize: self.stepsize.or(file.stepsize),
            sigma: self.sigma.or(file.sigma),
            likelihood_sigma: self.likelihood_sigma.or(file.likelihood_sigma),
            problem: self.problem.or(file.problem),
            dim: self.dim.or(file.dim),
            label: self.label.or(file.label),
            out: self.out.or(file.out),
            cadence: self.cadence.or(file.cadence),
            per_agent: self.per_agent || file.per_agent,
            no_cap: self.no_cap || file.no_cap,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Base configurations for `seed`: the preset's expansion, or one
    /// default run.
    pub fn base(&self, seed: u64) -> Result<Vec<RunConfig>> {
        match &self.preset {
            Some(name) => {
                let preset = preset_registry().get(name).map_err(|e| usage(e.to_string()))?;
                Ok(preset.expand(seed))
            }
            None => Ok(vec![RunConfig {
                label: format!("run-s{seed}"),
                seed,
                ..RunConfig::default()
            }]),
        }
    }

    /// Applies every explicitly set field to `cfg` and validates it.
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.iters {
            cfg.iters = n;
        }
        if let Some(n) = self.agents {
            cfg.n_agents = n;
        }
        if let Some(t) = &self.topology {
            cfg.topology = t.parse::<TopologySpec>().map_err(|e| usage(e.to_string()))?;
        }
        if let Some(c) = &self.consensus {
            cfg.consensus = c.clone();
        }
        if let Some(s) = &self.stepsize {
            cfg.stepsize = s.parse::<StepsizeSpec>().map_err(|e| usage(e.to_string()))?;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(s) = self.likelihood_sigma {
            cfg.likelihood_sigma = Some(s);
        }
        if let Some(kind) = &self.problem {
            if *kind != cfg.problem.kind {
                cfg.problem = ProblemSpec::default_for(kind).map_err(|e| usage(e.to_string()))?;
            }
        }
        if let Some(d) = self.dim {
            cfg.problem.set_param("dim", json!(d));
        }
        if let Some(l) = &self.label {
            cfg.label = l.clone();
        }
        if let Some(k) = self.cadence {
            cfg.cadence = k;
        }
        cfg.per_agent |= self.per_agent;
        cfg.no_cap |= self.no_cap;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        let resolved = cfg.resolved().map_err(|e| usage(e.to_string()))?;
        log::info!("resolved config: {}", serde_json::to_string(&resolved)?);
        Ok(resolved)
    }

    /// Fully resolved configurations for one seed.
    pub fn resolve(&self, seed: u64) -> Result<Vec<RunConfig>> {
        self.base(seed)?.into_iter().map(|c| self.apply(c)).collect()
    }
}

fn read_file(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// The configuration stored in a trace header, for bit-identical re-runs.
pub fn replay_config(header: &Path) -> Result<RunConfig> {
    let h = TraceHeader::read_json(header).with_context(|| format!("reading header {}", header.display()))?;
    Ok(h.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "preset = \"quadratic-path5\"\niters = 100\nsigma = 0.5\nper-agent = true\n").unwrap();
        let s = Settings {
            config: Some(path),
            iters: Some(7),
            ..Settings::default()
        }
        .with_file()
        .unwrap();
        assert_eq!(s.iters, Some(7));
        assert_eq!(s.sigma, Some(0.5));
        assert!(s.per_agent);
        let cfgs = s.resolve(3).unwrap();
        assert_eq!(cfgs.len(), 1);
        assert_eq!((cfgs[0].iters, cfgs[0].seed, cfgs[0].sigma), (7, 3, 0.5));
    }

    #[test]
    fn unknown_file_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "itres = 100\n").unwrap();
        let err = Settings {
            config: Some(path),
            ..Settings::default()
        }
        .with_file()
        .unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        for s in [
            Settings { topology: Some("ring".into()), ..Settings::default() },
            Settings { stepsize: Some("1".into()), ..Settings::default() },
            Settings { consensus: Some("median".into()), ..Settings::default() },
            Settings { preset: Some("nope".into()), ..Settings::default() },
            Settings { iters: Some(0), ..Settings::default() },
        ] {
            let err = s.resolve(0).unwrap_err();
            assert!(err.downcast_ref::<Usage>().is_some(), "{err:#}");
        }
    }

    #[test]
    fn problem_switch_and_dim() {
        let s = Settings {
            dim: Some(2),
            ..Settings::default()
        };
        assert_eq!(s.resolve(0).unwrap()[0].problem.params["dim"], 2);
        let s = Settings {
            problem: Some("ideal-plume".into()),
            ..Settings::default()
        };
        assert_eq!(s.resolve(0).unwrap()[0].problem.kind, "ideal-plume");
    }
}
