//! Run configuration.
//!
//! A TOML file whose keys are read flat in dotted form (`env.num_processes`,
//! `ppo.clip_epsilon`, `run.seed`, ...), so `[env]` tables and dotted keys
//! are interchangeable. `--set key=value` overrides are applied on top of the
//! file; the value is parsed as a TOML literal, falling back to a bare
//! string. Unknown keys are rejected by name.
//!
//! | key | default |
//! |-----|---------|
//! | `env.num_processes` | 5 |
//! | `env.num_agents` | 2 |
//! | `env.layout` | `"independent"` (or `"no_overlap"`) |
//! | `env.agent_processes` | from layout, e.g. `[[0, 1, 2], [3, 4]]` |
//! | `env.sampling_cost` | 0.05 |
//! | `env.prior` | uniform |
//! | `env.normal_mean`, `env.anomalous_mean`, `env.std_dev` | 0, 1, 1 |
//! | `env.terminal_costs` | `[0, 1, 2, ...]`-style default table |
//! | `env.max_horizon` | 200 |
//! | `env.message_repeat` | `"until_end"` or a tick count |
//! | `env.communication` | true |
//! | `ppo.*` | see [`PpoHyperparams`] |
//! | `network.hidden` | `[64, 64]` |
//! | `run.mode` | `"marla"`, `"single_agent"`, `"no_comm"`, `"heuristic"` |
//! | `run.seed` | 0 |
//! | `run.iterations` | 300 |
//! | `run.workers` | 1 |
//! | `run.out_dir` | `"runs/default"` |
//! | `run.checkpoint_every` | 50 (0 disables periodic checkpoints) |
//! | `run.eval_episodes` | 10000 |
//! | `run.eval_greedy` | false |
//! | `run.heuristic_threshold` | 0.95 |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::Value;

use crate::env::{AgentSpec, EnvConfig, HypothesisSpace, MessageRepeat, ObservationModel};
use crate::error::{Error, Result};
use crate::ppo::PpoHyperparams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Agents share an actor and exchange action messages.
    Marla,
    /// One agent over all processes.
    SingleAgent,
    /// As `Marla` with the message channel hidden from the actor.
    NoComm,
    /// Highest-belief threshold rule; nothing to train.
    Heuristic,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "marla" => Ok(Mode::Marla),
            "single_agent" => Ok(Mode::SingleAgent),
            "no_comm" => Ok(Mode::NoComm),
            "heuristic" => Ok(Mode::Heuristic),
            other => Err(Error::config(
                "run.mode",
                format!("`{other}` is not one of marla, single_agent, no_comm, heuristic"),
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Marla => "marla",
            Mode::SingleAgent => "single_agent",
            Mode::NoComm => "no_comm",
            Mode::Heuristic => "heuristic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub mode: Mode,
    pub seed: u64,
    pub iterations: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub checkpoint_every: u64,
    pub eval_episodes: usize,
    pub eval_greedy: bool,
    pub heuristic_threshold: f64,
}

/// Fully validated configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ppo: PpoHyperparams,
    pub hidden: Vec<usize>,
    pub run: RunSettings,
    /// The effective flat key map, for run metadata.
    pub entries: BTreeMap<String, Value>,
}

const ENV_KEYS: &[&str] = &[
    "num_processes",
    "num_agents",
    "layout",
    "agent_processes",
    "sampling_cost",
    "prior",
    "normal_mean",
    "anomalous_mean",
    "std_dev",
    "terminal_costs",
    "max_horizon",
    "message_repeat",
    "communication",
];
const PPO_KEYS: &[&str] = &[
    "gamma",
    "lambda",
    "clip_epsilon",
    "kl_target",
    "kl_band",
    "beta_factor",
    "beta_init",
    "epochs",
    "minibatch",
    "timesteps",
    "policy_lr",
    "value_lr",
    "max_grad_norm",
];
const NETWORK_KEYS: &[&str] = &["hidden"];
const RUN_KEYS: &[&str] = &[
    "mode",
    "seed",
    "iterations",
    "workers",
    "out_dir",
    "checkpoint_every",
    "eval_episodes",
    "eval_greedy",
    "heuristic_threshold",
];

fn known(key: &str) -> bool {
    let Some((section, name)) = key.split_once('.') else {
        return false;
    };
    let names = match section {
        "env" => ENV_KEYS,
        "ppo" => PPO_KEYS,
        "network" => NETWORK_KEYS,
        "run" => RUN_KEYS,
        _ => return false,
    };
    names.contains(&name)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parse `key=value`; the value is a TOML literal or else a bare string.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key=value"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, Value>,
}

impl Reader<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(Error::config(key, format!("expected a number, found {v}"))),
        }
    }

    fn uint(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(Error::config(key, format!("expected a non-negative integer, found {v}"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.uint(key, default as u64)? as usize)
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(Error::config(key, format!("expected true or false, found {v}"))),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(Error::config(key, format!("expected a string, found {v}"))),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let bad = || Error::config(key, format!("expected an array of numbers, found {v}"));
        let arr = v.as_array().ok_or_else(bad)?;
        arr.iter()
            .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)).ok_or_else(bad))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn uints(&self, value: &Value, key: &str) -> Result<Vec<usize>> {
        let bad = || Error::config(key, format!("expected an array of non-negative integers, found {value}"));
        value
            .as_array()
            .ok_or_else(bad)?
            .iter()
            .map(|x| x.as_integer().filter(|i| *i >= 0).map(|i| i as usize).ok_or_else(bad))
            .collect()
    }
}

impl RunConfig {
    /// Build from a config file (or defaults when `path` is `None`) plus
    /// `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut entries = Self::parse_entries(&text)?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            entries.insert(k, v);
        }
        Self::from_entries(entries)
    }

    pub fn parse_entries(text: &str) -> Result<BTreeMap<String, Value>> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::config("--config", e.message().to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        Ok(entries)
    }

    pub fn from_entries(entries: BTreeMap<String, Value>) -> Result<Self> {
        if let Some(k) = entries.keys().find(|k| !known(k)) {
            return Err(Error::config(k, "unknown key"));
        }
        let r = Reader { entries: &entries };
        let run = RunSettings {
            mode: Mode::parse(&r.string("run.mode", "marla")?)?,
            seed: r.uint("run.seed", 0)?,
            iterations: r.uint("run.iterations", 300)?,
            workers: r.usize("run.workers", 1)?,
            out_dir: PathBuf::from(r.string("run.out_dir", "runs/default")?),
            checkpoint_every: r.uint("run.checkpoint_every", 50)?,
            eval_episodes: r.usize("run.eval_episodes", 10_000)?,
            eval_greedy: r.boolean("run.eval_greedy", false)?,
            heuristic_threshold: r.float("run.heuristic_threshold", 0.95)?,
        };
        if run.workers == 0 {
            return Err(Error::config("run.workers", "must be at least 1"));
        }
        if run.eval_episodes == 0 {
            return Err(Error::config("run.eval_episodes", "must be positive"));
        }
        let env = Self::env(&r, run.mode)?;
        if run.mode == Mode::Heuristic {
            let m = env.num_processes() as f64;
            let t = run.heuristic_threshold;
            if !(t > 1.0 / m && t < 1.0) {
                return Err(Error::config("run.heuristic_threshold", format!("must lie in (1/M, 1), got {t}")));
            }
        }
        let hidden = match r.get("network.hidden") {
            None => vec![64, 64],
            Some(v) => r.uints(v, "network.hidden")?,
        };
        if hidden.contains(&0) {
            return Err(Error::config("network.hidden", "layer widths must be positive"));
        }
        let ppo = Self::ppo(&r)?;
        Ok(Self {
            env,
            ppo,
            hidden,
            run,
            entries,
        })
    }

    fn env(r: &Reader, mode: Mode) -> Result<EnvConfig> {
        let m = r.usize("env.num_processes", 5)?;
        let mut k = r.usize("env.num_agents", 2)?;
        if m < 2 {
            return Err(Error::config("env.num_processes", "need at least 2 processes"));
        }
        if k == 0 {
            return Err(Error::config("env.num_agents", "need at least 1 agent"));
        }
        let layout = r.string("env.layout", "independent")?;
        let explicit = r.get("env.agent_processes");
        let agents = if mode == Mode::SingleAgent {
            k = 1;
            vec![AgentSpec::new(0, (0..m).collect())]
        } else if let Some(v) = explicit {
            let lists = v
                .as_array()
                .ok_or_else(|| Error::config("env.agent_processes", "expected an array of arrays"))?;
            if lists.len() != k {
                return Err(Error::config(
                    "env.agent_processes",
                    format!("has {} entries but env.num_agents is {k}", lists.len()),
                ));
            }
            lists
                .iter()
                .enumerate()
                .map(|(i, l)| Ok(AgentSpec::new(i, r.uints(l, "env.agent_processes")?)))
                .collect::<Result<Vec<_>>>()?
        } else {
            match layout.as_str() {
                "independent" => (0..k).map(|i| AgentSpec::new(i, (0..m).collect())).collect(),
                "no_overlap" => EnvConfig::no_overlap(m, k, 0.0)?.agents,
                other => {
                    return Err(Error::config(
                        "env.layout",
                        format!("`{other}` is not one of independent, no_overlap"),
                    ))
                }
            }
        };
        let mut env = EnvConfig::with_agents(m, agents, r.float("env.sampling_cost", 0.05)?)?;
        if let Some(prior) = r.floats("env.prior")? {
            env.hypotheses = HypothesisSpace::new(prior).map_err(|e| Error::config("env.prior", e.to_string()))?;
        }
        env.observation = ObservationModel::new(
            r.float("env.normal_mean", 0.0)?,
            r.float("env.anomalous_mean", 1.0)?,
            r.float("env.std_dev", 1.0)?,
        )
        .map_err(|e| Error::config("env.observation", e.to_string()))?;
        if let Some(j) = r.floats("env.terminal_costs")? {
            if j.len() != k + 1 {
                return Err(Error::config("env.terminal_costs", format!("needs {} entries", k + 1)));
            }
            env.terminal_costs = j;
        }
        let horizon = r.uint("env.max_horizon", 200)?;
        env.max_horizon = u32::try_from(horizon).map_err(|_| Error::config("env.max_horizon", "too large"))?;
        env.message_repeat = match r.get("env.message_repeat") {
            None => MessageRepeat::UntilEnd,
            Some(Value::String(s)) if s == "until_end" => MessageRepeat::UntilEnd,
            Some(Value::Integer(n)) if *n > 0 && *n <= u32::MAX as i64 => MessageRepeat::Steps(*n as u32),
            Some(v) => {
                return Err(Error::config(
                    "env.message_repeat",
                    format!("expected \"until_end\" or a positive integer, found {v}"),
                ))
            }
        };
        env.communication = r.boolean("env.communication", true)? && mode != Mode::NoComm;
        env.validate()?;
        Ok(env)
    }

    fn ppo(r: &Reader) -> Result<PpoHyperparams> {
        let d = PpoHyperparams::default();
        let p = PpoHyperparams {
            gamma: r.float("ppo.gamma", d.gamma)?,
            lambda: r.float("ppo.lambda", d.lambda)?,
            clip_epsilon: r.float("ppo.clip_epsilon", d.clip_epsilon)?,
            kl_target: r.float("ppo.kl_target", d.kl_target)?,
            kl_band: r.float("ppo.kl_band", d.kl_band)?,
            beta_factor: r.float("ppo.beta_factor", d.beta_factor)?,
            beta_init: r.float("ppo.beta_init", d.beta_init)?,
            epochs: r.usize("ppo.epochs", d.epochs)?,
            minibatch: r.usize("ppo.minibatch", d.minibatch)?,
            timesteps: r.usize("ppo.timesteps", d.timesteps)?,
            policy_lr: r.float("ppo.policy_lr", d.policy_lr)?,
            value_lr: r.float("ppo.value_lr", d.value_lr)?,
            max_grad_norm: r.float("ppo.max_grad_norm", d.max_grad_norm)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Short descriptor used as `config_id` in metrics output.
    pub fn config_id(&self) -> String {
        format!(
            "{}_M{}_K{}_c{}",
            self.run.mode.as_str(),
            self.env.num_processes(),
            self.env.num_agents(),
            self.env.sampling_cost
        )
    }

    /// The effective configuration as TOML, reloadable with [`RunConfig::load`].
    pub fn snapshot(&self) -> String {
        toml::to_string(&self.snapshot_table()).expect("TOML values serialise")
    }

    /// Every effective setting, defaults included.
    pub fn snapshot_table(&self) -> toml::Table {
        fn floats(v: &[f64]) -> Value {
            Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
        }
        fn ints(v: &[usize]) -> Value {
            Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect())
        }
        let e = &self.env;
        let p = &self.ppo;
        let r = &self.run;
        let mut env = toml::Table::new();
        env.insert("num_processes".into(), Value::Integer(e.num_processes() as i64));
        env.insert("num_agents".into(), Value::Integer(e.num_agents() as i64));
        env.insert(
            "agent_processes".into(),
            Value::Array(e.agents.iter().map(|a| ints(a.processes())).collect()),
        );
        env.insert("sampling_cost".into(), Value::Float(e.sampling_cost));
        env.insert("prior".into(), floats(e.hypotheses.prior()));
        env.insert("normal_mean".into(), Value::Float(e.observation.normal_mean));
        env.insert("anomalous_mean".into(), Value::Float(e.observation.anomalous_mean));
        env.insert("std_dev".into(), Value::Float(e.observation.std_dev));
        env.insert("terminal_costs".into(), floats(&e.terminal_costs));
        env.insert("max_horizon".into(), Value::Integer(e.max_horizon as i64));
        env.insert(
            "message_repeat".into(),
            match e.message_repeat {
                MessageRepeat::UntilEnd => Value::String("until_end".into()),
                MessageRepeat::Steps(n) => Value::Integer(n as i64),
            },
        );
        env.insert("communication".into(), Value::Boolean(e.communication));

        let mut ppo = toml::Table::new();
        for (k, v) in [
            ("gamma", p.gamma),
            ("lambda", p.lambda),
            ("clip_epsilon", p.clip_epsilon),
            ("kl_target", p.kl_target),
            ("kl_band", p.kl_band),
            ("beta_factor", p.beta_factor),
            ("beta_init", p.beta_init),
            ("policy_lr", p.policy_lr),
            ("value_lr", p.value_lr),
            ("max_grad_norm", p.max_grad_norm),
        ] {
            ppo.insert(k.into(), Value::Float(v));
        }
        for (k, v) in [("epochs", p.epochs), ("minibatch", p.minibatch), ("timesteps", p.timesteps)] {
            ppo.insert(k.into(), Value::Integer(v as i64));
        }

        let mut network = toml::Table::new();
        network.insert("hidden".into(), ints(&self.hidden));

        let mut run = toml::Table::new();
        run.insert("mode".into(), Value::String(r.mode.as_str().into()));
        run.insert("seed".into(), Value::Integer(r.seed as i64));
        run.insert("iterations".into(), Value::Integer(r.iterations as i64));
        run.insert("workers".into(), Value::Integer(r.workers as i64));
        run.insert("out_dir".into(), Value::String(r.out_dir.display().to_string()));
        run.insert("checkpoint_every".into(), Value::Integer(r.checkpoint_every as i64));
        run.insert("eval_episodes".into(), Value::Integer(r.eval_episodes as i64));
        run.insert("eval_greedy".into(), Value::Boolean(r.eval_greedy));
        run.insert("heuristic_threshold".into(), Value::Float(r.heuristic_threshold));

        let mut root = toml::Table::new();
        root.insert("env".into(), Value::Table(env));
        root.insert("ppo".into(), Value::Table(ppo));
        root.insert("network".into(), Value::Table(network));
        root.insert("run".into(), Value::Table(run));
        root
    }

    /// A copy with one more override applied and revalidated.
    pub fn with_override(&self, key: &str, value: Value) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.insert(key.to_string(), value);
        Self::from_entries(entries)
    }
}
