//! Run configuration: a sectioned `key = value` file (TOML syntax).
//!
//! ```toml
//! [run]
//! env = "discrete"          # or "continuous"
//! name = "adapt-discrete"   # prefix of output files, default = env
//! seeds = [0, 1, 2, 3, 4]
//! out_dir = "out"
//! pathway = "sampled"       # or "exact" (discrete only)
//! theta_init = "random"     # "random" | "true" | "explicit"
//! theta = [..]              # required by (and implies) theta_init = "explicit"
//! wall_time = false         # record real timings; breaks byte-identical output
//!
//! [environment]
//! discount = 0.95
//! noise_std = 0.1           # continuous only
//! reward_scale = 0.1        # continuous only
//! initial_state_std = 1.0   # continuous only
//!
//! [policy]
//! temperature = 2.0         # discrete only
//! action_std = 0.1          # continuous only
//! mean = "linear"           # continuous only: "linear" | "mlp"
//! hidden = 6                # continuous only
//!
//! [inner]
//! vi_tol = 1e-2             # discrete only
//! critic_tol = 1e-8         # discrete only
//! dare_tol = 1e-12          # continuous only
//!
//! [sampling]
//! sim_trajectories = 1
//! sim_horizon = 1000
//! real_trajectories = 1
//! real_horizon = 1000
//! weighting = "discounted"  # or "uniform"
//! advantage_baseline = true
//!
//! [outer]
//! learning_rate = 0.1
//! max_iters = 200
//! clip_norm = 10.0          # <= 0 disables clipping
//! grad_tol = 0.0
//! jacobian_reg = 1e-8       # omit for 1e-8 * sum |diag|
//! freeze_model = false
//! freeze_reward = false
//! cost_weight_floor = 1e-3  # continuous only
//! ```
//!
//! Every key is optional; omitted keys take the defaults of the chosen
//! environment. Unknown keys and keys that belong to the other environment
//! are rejected. Environment variables `BILEVEL_<SECTION>_<KEY>` (for
//! example `BILEVEL_OUTER_LEARNING_RATE=0.05`) override file values; their
//! values use the same syntax as the file, bare words being read as
//! strings.

use std::fmt;
use std::path::{Path, PathBuf};

use bilevel_core::{BilevelConfig, EnvKind, Pathway, PolicyMean, StepWeighting, ThetaInit};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "BILEVEL_";
const SECTIONS: [&str; 6] = ["run", "environment", "policy", "inner", "sampling", "outer"];

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.source, l, self.message),
            None => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EnvName {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PathwayName {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InitName {
    Random,
    True,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WeightingName {
    Discounted,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MeanName {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    env: Option<EnvName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathway: Option<PathwayName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_init: Option<InitName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawEnvironment {
    #[serde(skip_serializing_if = "Option::is_none")]
    discount: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state_std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPolicy {
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<MeanName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawInner {
    #[serde(skip_serializing_if = "Option::is_none")]
    vi_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    critic_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dare_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSampling {
    #[serde(skip_serializing_if = "Option::is_none")]
    sim_trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim_horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    real_trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    real_horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weighting: Option<WeightingName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    advantage_baseline: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawOuter {
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jacobian_reg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freeze_model: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freeze_reward: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_weight_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    environment: RawEnvironment,
    policy: RawPolicy,
    inner: RawInner,
    sampling: RawSampling,
    outer: RawOuter,
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Write measured per-iteration times instead of 0.
    pub wall_time: bool,
    pub core: BilevelConfig,
}

impl RunConfig {
    /// Defaults for one environment.
    pub fn defaults(env: EnvKind) -> Self {
        let core = match env {
            EnvKind::Discrete => BilevelConfig::discrete(),
            EnvKind::Continuous => BilevelConfig::continuous(),
        };
        RunConfig {
            name: env_label(env).to_string(),
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("out"),
            wall_time: false,
            core,
        }
    }

    /// Parses `text`; `source` names it in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, source, std::iter::empty::<(String, String)>())
    }

    /// Parses `text` and applies `BILEVEL_*` overrides taken from `vars`.
    pub fn parse_with_overrides<I, K, V>(
        text: &str,
        source: &str,
        vars: I,
    ) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let err = |line, message: String| ConfigError {
            source: source.to_string(),
            line,
            message,
        };
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            err(line, e.message().to_string())
        })?;
        let mut overridden = Vec::new();
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| err(None, e.message().to_string()))?;
        for (k, v) in vars {
            let Some(rest) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let rest = rest.to_ascii_lowercase();
            let Some((section, key)) = SECTIONS.iter().find_map(|s| {
                rest.strip_prefix(s)
                    .and_then(|r| r.strip_prefix('_'))
                    .map(|r| (*s, r))
            }) else {
                return Err(err(
                    None,
                    format!("override {}: unknown section", k.as_ref()),
                ));
            };
            let value = parse_override(v.as_ref());
            let entry = table
                .entry(section)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(key.to_string(), value);
                }
                _ => return Err(err(None, format!("`{section}` must be a section"))),
            }
            overridden.push(k.as_ref().to_string());
        }
        if !overridden.is_empty() {
            raw = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    err(
                        None,
                        format!("in {}: {}", overridden.join(", "), e.message()),
                    )
                })?;
        }
        raw.resolve(text, source)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: path.display().to_string(),
            line: None,
            message: e.to_string(),
        })?;
        Self::parse_with_overrides(&text, &path.display().to_string(), std::env::vars())
    }

    /// Serialises every applicable field, so that parsing the result gives
    /// back `self`.
    pub fn to_toml(&self) -> String {
        let c = &self.core;
        let discrete = c.env_kind == EnvKind::Discrete;
        let only = |d: bool, v| if d == discrete { Some(v) } else { None };
        let raw = RawConfig {
            run: RawRun {
                env: Some(if discrete {
                    EnvName::Discrete
                } else {
                    EnvName::Continuous
                }),
                name: Some(self.name.clone()),
                seeds: Some(self.seeds.clone()),
                out_dir: Some(self.out_dir.clone()),
                pathway: Some(match c.pathway {
                    Pathway::Exact => PathwayName::Exact,
                    Pathway::Sampled => PathwayName::Sampled,
                }),
                theta_init: Some(match c.theta_init {
                    ThetaInit::Random => InitName::Random,
                    ThetaInit::TrueParams => InitName::True,
                    ThetaInit::Explicit => InitName::Explicit,
                }),
                theta: c.theta_explicit.clone(),
                wall_time: Some(self.wall_time),
            },
            environment: RawEnvironment {
                discount: Some(c.discount),
                noise_std: only(false, c.noise_std),
                reward_scale: only(false, c.reward_scale),
                initial_state_std: only(false, c.initial_state_std),
            },
            policy: RawPolicy {
                temperature: only(true, c.temperature),
                action_std: only(false, c.action_std),
                mean: if discrete {
                    None
                } else {
                    Some(match c.policy_mean {
                        PolicyMean::Linear => MeanName::Linear,
                        PolicyMean::Mlp => MeanName::Mlp,
                    })
                },
                hidden: if discrete {
                    None
                } else {
                    Some(c.policy_hidden)
                },
            },
            inner: RawInner {
                vi_tol: only(true, c.vi_tol),
                critic_tol: only(true, c.critic_tol),
                dare_tol: only(false, c.dare_tol),
            },
            sampling: RawSampling {
                sim_trajectories: Some(c.sim_trajectories),
                sim_horizon: Some(c.sim_horizon),
                real_trajectories: Some(c.real_trajectories),
                real_horizon: Some(c.real_horizon),
                weighting: Some(match c.weighting {
                    StepWeighting::Discounted => WeightingName::Discounted,
                    StepWeighting::Uniform => WeightingName::Uniform,
                }),
                advantage_baseline: Some(c.advantage_baseline),
            },
            outer: RawOuter {
                learning_rate: Some(c.learning_rate),
                max_iters: Some(c.max_outer_iters),
                clip_norm: Some(c.clip_norm),
                grad_tol: Some(c.grad_tol),
                jacobian_reg: c.jacobian_reg,
                freeze_model: Some(c.freeze_model),
                freeze_reward: Some(c.freeze_reward),
                cost_weight_floor: only(false, c.cost_weight_floor),
            },
        };
        toml::to_string(&raw).expect("plain data always serialises")
    }
}

pub fn env_label(env: EnvKind) -> &'static str {
    match env {
        EnvKind::Discrete => "discrete",
        EnvKind::Continuous => "continuous",
    }
}

fn parse_override(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, if the file sets it.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim();
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// `(section, key)` of the file entry behind a core field name.
fn key_of(arg: &str) -> (&'static str, &'static str) {
    match arg {
        "discount" => ("environment", "discount"),
        "noise_std" => ("environment", "noise_std"),
        "reward_scale" => ("environment", "reward_scale"),
        "initial_state_std" => ("environment", "initial_state_std"),
        "temperature" => ("policy", "temperature"),
        "action_std" => ("policy", "action_std"),
        "policy_hidden" => ("policy", "hidden"),
        "vi_tol" => ("inner", "vi_tol"),
        "critic_tol" => ("inner", "critic_tol"),
        "dare_tol" => ("inner", "dare_tol"),
        "sim_trajectories" => ("sampling", "sim_trajectories"),
        "sim_horizon" => ("sampling", "sim_horizon"),
        "real_trajectories" => ("sampling", "real_trajectories"),
        "real_horizon" => ("sampling", "real_horizon"),
        "learning_rate" => ("outer", "learning_rate"),
        "grad_tol" => ("outer", "grad_tol"),
        "jacobian_reg" => ("outer", "jacobian_reg"),
        "pathway" => ("run", "pathway"),
        "theta_explicit" => ("run", "theta"),
        _ => ("run", "env"),
    }
}

impl RawConfig {
    fn resolve(self, text: &str, source: &str) -> Result<RunConfig, ConfigError> {
        let err = |section: &str, key: &str, message: String| ConfigError {
            source: source.to_string(),
            line: locate(text, section, key),
            message,
        };
        let env = match self.run.env.unwrap_or(EnvName::Discrete) {
            EnvName::Discrete => EnvKind::Discrete,
            EnvName::Continuous => EnvKind::Continuous,
        };
        let discrete = env == EnvKind::Discrete;
        let wrong_env: [(&str, &str, bool, bool); 11] = [
            (
                "environment",
                "noise_std",
                false,
                self.environment.noise_std.is_some(),
            ),
            (
                "environment",
                "reward_scale",
                false,
                self.environment.reward_scale.is_some(),
            ),
            (
                "environment",
                "initial_state_std",
                false,
                self.environment.initial_state_std.is_some(),
            ),
            (
                "policy",
                "temperature",
                true,
                self.policy.temperature.is_some(),
            ),
            (
                "policy",
                "action_std",
                false,
                self.policy.action_std.is_some(),
            ),
            ("policy", "mean", false, self.policy.mean.is_some()),
            ("policy", "hidden", false, self.policy.hidden.is_some()),
            ("inner", "vi_tol", true, self.inner.vi_tol.is_some()),
            ("inner", "critic_tol", true, self.inner.critic_tol.is_some()),
            ("inner", "dare_tol", false, self.inner.dare_tol.is_some()),
            (
                "outer",
                "cost_weight_floor",
                false,
                self.outer.cost_weight_floor.is_some(),
            ),
        ];
        for (section, key, for_discrete, set) in wrong_env {
            if set && for_discrete != discrete {
                let owner = if for_discrete {
                    "discrete"
                } else {
                    "continuous"
                };
                return Err(err(
                    section,
                    key,
                    format!(
                        "`{section}.{key}` is {owner}-only but env = \"{}\"",
                        env_label(env)
                    ),
                ));
            }
        }

        let mut out = RunConfig::defaults(env);
        let c = &mut out.core;
        let run = self.run;
        if let Some(name) = run.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(err(
                    "run",
                    "name",
                    "name must be a non-empty file-name prefix".into(),
                ));
            }
            out.name = name;
        }
        if let Some(seeds) = run.seeds {
            if seeds.is_empty() {
                return Err(err("run", "seeds", "seed list must be non-empty".into()));
            }
            out.seeds = seeds;
        }
        if let Some(d) = run.out_dir {
            out.out_dir = d;
        }
        if let Some(w) = run.wall_time {
            out.wall_time = w;
        }
        if let Some(p) = run.pathway {
            c.pathway = match p {
                PathwayName::Exact => Pathway::Exact,
                PathwayName::Sampled => Pathway::Sampled,
            };
        }
        c.theta_init = match (run.theta_init, run.theta.is_some()) {
            (Some(InitName::Random), false) => ThetaInit::Random,
            (Some(InitName::True), false) => ThetaInit::TrueParams,
            (Some(InitName::Explicit), true) | (None, true) => ThetaInit::Explicit,
            (None, false) => ThetaInit::Random,
            (Some(InitName::Explicit), false) => {
                return Err(err(
                    "run",
                    "theta_init",
                    "theta_init = \"explicit\" needs `theta`".into(),
                ))
            }
            (Some(_), true) => {
                return Err(err(
                    "run",
                    "theta",
                    "`theta` is only used with theta_init = \"explicit\"".into(),
                ))
            }
        };
        c.theta_explicit = run.theta;

        let e = self.environment;
        set(&mut c.discount, e.discount);
        set(&mut c.noise_std, e.noise_std);
        set(&mut c.reward_scale, e.reward_scale);
        set(&mut c.initial_state_std, e.initial_state_std);
        let p = self.policy;
        set(&mut c.temperature, p.temperature);
        set(&mut c.action_std, p.action_std);
        if let Some(m) = p.mean {
            c.policy_mean = match m {
                MeanName::Linear => PolicyMean::Linear,
                MeanName::Mlp => PolicyMean::Mlp,
            };
        }
        set(&mut c.policy_hidden, p.hidden);
        let i = self.inner;
        set(&mut c.vi_tol, i.vi_tol);
        set(&mut c.critic_tol, i.critic_tol);
        set(&mut c.dare_tol, i.dare_tol);
        let s = self.sampling;
        set(&mut c.sim_trajectories, s.sim_trajectories);
        set(&mut c.sim_horizon, s.sim_horizon);
        set(&mut c.real_trajectories, s.real_trajectories);
        set(&mut c.real_horizon, s.real_horizon);
        if let Some(w) = s.weighting {
            c.weighting = match w {
                WeightingName::Discounted => StepWeighting::Discounted,
                WeightingName::Uniform => StepWeighting::Uniform,
            };
        }
        set(&mut c.advantage_baseline, s.advantage_baseline);
        let o = self.outer;
        set(&mut c.learning_rate, o.learning_rate);
        set(&mut c.max_outer_iters, o.max_iters);
        set(&mut c.clip_norm, o.clip_norm);
        set(&mut c.grad_tol, o.grad_tol);
        if o.jacobian_reg.is_some() {
            c.jacobian_reg = o.jacobian_reg;
        }
        set(&mut c.freeze_model, o.freeze_model);
        set(&mut c.freeze_reward, o.freeze_reward);
        set(&mut c.cost_weight_floor, o.cost_weight_floor);

        if let Err(e) = c.validate() {
            let arg = match &e {
                bilevel_core::Error::InvalidArgument { arg, .. } => arg,
                _ => "",
            };
            let (section, key) = key_of(arg);
            return Err(err(section, key, e.to_string()));
        }
        if c.theta_init == ThetaInit::Explicit {
            if let Err(e) = bilevel_core::outer::initial_theta(c, 0) {
                return Err(err("run", "theta", e.to_string()));
            }
        }
        Ok(out)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Parses `"0,1,2"` or an inclusive range `"0-4"`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('-') {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range `{s}`"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range `{s}`"))?;
        if a > b {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    let seeds = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad seed `{x}`"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err("seed list must be non-empty".into());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_discrete_defaults() {
        let c = RunConfig::parse("", "t").unwrap();
        assert_eq!(c, RunConfig::defaults(EnvKind::Discrete));
    }

    #[test]
    fn sections_override_defaults() {
        let text = "[run]\nenv = \"continuous\"\nseeds = [3]\n[outer]\nlearning_rate = 0.05\n[policy]\nmean = \"mlp\"\n";
        let c = RunConfig::parse(text, "t").unwrap();
        assert_eq!(c.core.env_kind, EnvKind::Continuous);
        assert_eq!(c.seeds, vec![3]);
        assert_eq!(c.core.learning_rate, 0.05);
        assert_eq!(c.core.policy_mean, PolicyMean::Mlp);
        assert_eq!(c.core.real_trajectories, 20);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = RunConfig::parse(
            "[run]\nseeds = [0, 1]\n[outer]\nlearning_rate = = 2\n",
            "cfg.toml",
        )
        .unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.to_string().starts_with("cfg.toml:4:"));
        let e = RunConfig::parse("[outer]\n\nlearnin_rate = 0.1\n", "t").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = RunConfig::parse("[outer]\nmax_iters = \"many\"\n", "t").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn foreign_fields_are_rejected_with_line() {
        let e = RunConfig::parse(
            "[run]\nenv = \"continuous\"\n[policy]\ntemperature = 1.0\n",
            "t",
        )
        .unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("discrete-only"));
        let e = RunConfig::parse("[inner]\ndare_tol = 1e-9\n", "t").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn invalid_values_point_at_their_key() {
        let e = RunConfig::parse("[run]\nseeds = []\n", "t").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = RunConfig::parse(
            "[environment]\ndiscount = 0.95\n[inner]\n  vi_tol = 0.0\n",
            "t",
        )
        .unwrap_err();
        assert_eq!(e.line, Some(4));
        let e = RunConfig::parse("[run]\nenv = \"continuous\"\npathway = \"exact\"\n", "t")
            .unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = RunConfig::parse("[run]\ntheta = [1.0, 2.0]\n", "t").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn env_overrides_apply_and_name_the_variable() {
        let vars = [
            ("BILEVEL_OUTER_LEARNING_RATE", "0.25"),
            ("BILEVEL_RUN_PATHWAY", "exact"),
            ("OTHER", "x"),
        ];
        let c =
            RunConfig::parse_with_overrides("[outer]\nlearning_rate = 0.1\n", "t", vars).unwrap();
        assert_eq!(c.core.learning_rate, 0.25);
        assert_eq!(c.core.pathway, Pathway::Exact);
        let e = RunConfig::parse_with_overrides("", "t", [("BILEVEL_OUTER_MAX_ITERS", "lots")])
            .unwrap_err();
        assert!(e.message.contains("BILEVEL_OUTER_MAX_ITERS"));
        assert!(RunConfig::parse_with_overrides("", "t", [("BILEVEL_NOPE_X", "1")]).is_err());
    }

    #[test]
    fn serialised_defaults_round_trip() {
        for env in [EnvKind::Discrete, EnvKind::Continuous] {
            let c = RunConfig::defaults(env);
            assert_eq!(RunConfig::parse(&c.to_toml(), "t").unwrap(), c);
        }
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("0-4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seed_list("7, 2").unwrap(), vec![7, 2]);
        assert!(parse_seed_list("4-1").is_err());
        assert!(parse_seed_list("a").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parse_serialise_parse_is_identity(
                continuous in any::<bool>(),
                lr in 0.0f64..2.0,
                iters in 1usize..500,
                seeds in proptest::collection::vec(0u64..1000, 1..6),
                discount in 0.0f64..0.999,
                tol in 1e-12f64..1.0,
                reg in proptest::option::of(0.0f64..1e-3),
                uniform in any::<bool>(),
                freeze in any::<bool>(),
            ) {
                let reg_line = reg.map(|r| format!("jacobian_reg = {r:?}\n")).unwrap_or_default();
                let text = format!(
                    "[run]\nenv = \"{}\"\nseeds = {:?}\n[environment]\ndiscount = {discount:?}\n[outer]\nlearning_rate = {lr:?}\nmax_iters = {iters}\nfreeze_model = {freeze}\n{reg_line}[sampling]\nweighting = \"{}\"\n[inner]\n{} = {tol:?}\n",
                    if continuous { "continuous" } else { "discrete" },
                    seeds,
                    if uniform { "uniform" } else { "discounted" },
                    if continuous { "dare_tol" } else { "vi_tol" },
                );
                let first = RunConfig::parse(&text, "t").unwrap();
                let again = RunConfig::parse(&first.to_toml(), "t").unwrap();
                prop_assert_eq!(first, again);
            }
        }
    }
}
