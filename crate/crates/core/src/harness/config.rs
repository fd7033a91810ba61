//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! algorithm = map-elites
//! mode = open-loop
//! env = hexapod
//! budget_frames = 2000000
//! master_seed = 7
//! me.mutation_rate = 0.188637
//! ```
//!
//! Only the section of the chosen algorithm and environment may appear.
//! Printing writes every key of those sections, so `parse(print(c)) == c`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::env::{ControllerMode, EnvSpec, HexapodConfig, OracleConfig};
use crate::qd::MeHyperParams;
use crate::rl::PpoHyperParams;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error: {}`{field}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { line, field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    MapElites,
    Ppo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MapElites => "map-elites",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "map-elites" => Ok(Algorithm::MapElites),
            "ppo" => Ok(Algorithm::Ppo),
            _ => Err(format!("unknown algorithm `{s}` (expected map-elites or ppo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperParams {
    MapElites(MeHyperParams),
    Ppo(PpoHyperParams),
}

impl HyperParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            HyperParams::MapElites(_) => Algorithm::MapElites,
            HyperParams::Ppo(_) => Algorithm::Ppo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: ControllerMode,
    pub env: EnvSpec,
    pub hyper: HyperParams,
    pub budget_frames: u64,
    pub master_seed: u64,
    /// Minimum frame spacing between emitted curve rows; 0 keeps every row.
    pub curve_interval_frames: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(mode: ControllerMode, env: EnvSpec, hyper: HyperParams, budget_frames: u64, master_seed: u64) -> Self {
        Self { mode, env, hyper, budget_frames, master_seed, curve_interval_frames: 0, output_dir: "runs".into() }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.hyper.algorithm()
    }

    /// `<algorithm>-<mode>-<env>-seed<seed>`
    pub fn run_name(&self) -> String {
        format!("{}-{}-{}-seed{}", self.algorithm().as_str(), self.mode.as_str(), self.env.name(), self.master_seed)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(|m| ConfigError::new(None, "env", m))?;
        match &self.hyper {
            HyperParams::MapElites(hp) => hp.validate().map_err(|e| ConfigError::new(None, "me", e.to_string()))?,
            HyperParams::Ppo(hp) => hp.validate().map_err(|e| ConfigError::new(None, "ppo", e.to_string()))?,
        }
        if self.budget_frames == 0 {
            return Err(ConfigError::new(None, "budget_frames", "must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut fields = Fields::parse(text)?;
        let cfg = Self::from_fields(&mut fields)?;
        fields.finish()?;
        Ok(cfg)
    }

    /// Builds a config from `fields`, consuming the keys it knows.
    pub(crate) fn from_fields(f: &mut Fields) -> Result<Self, ConfigError> {
        let algorithm: Algorithm = f.required("algorithm")?;
        let mode: ControllerMode = f.required("mode")?;
        let env_name: String = f.required("env")?;
        let env = match env_name.as_str() {
            "hexapod" => {
                let d = HexapodConfig::default();
                EnvSpec::Hexapod(HexapodConfig {
                    dt: f.optional("hexapod.dt", d.dt)?,
                    episode_len: f.optional("hexapod.episode_len", d.episode_len)?,
                    hip_radius: f.optional("hexapod.hip_radius", d.hip_radius)?,
                    segment_lengths: f.optional_array("hexapod.segment_lengths", d.segment_lengths)?,
                    joint_limit: f.optional("hexapod.joint_limit", d.joint_limit)?,
                    max_joint_speed: f.optional("hexapod.max_joint_speed", d.max_joint_speed)?,
                    body_half_height: f.optional("hexapod.body_half_height", d.body_half_height)?,
                    contact_tolerance: f.optional("hexapod.contact_tolerance", d.contact_tolerance)?,
                })
            }
            "oracle" => {
                let d = OracleConfig::default();
                EnvSpec::Oracle(OracleConfig {
                    target: f.optional_list("oracle.target", d.target)?,
                    episode_len: f.optional("oracle.episode_len", d.episode_len)?,
                })
            }
            other => {
                let line = f.line_of("env");
                return Err(ConfigError::new(line, "env", format!("unknown env `{other}` (expected hexapod or oracle)")));
            }
        };
        let hyper = match algorithm {
            Algorithm::MapElites => {
                let d = MeHyperParams::default();
                HyperParams::MapElites(MeHyperParams {
                    mutation_rate: f.optional("me.mutation_rate", d.mutation_rate)?,
                    hidden: f.optional_array("me.hidden", d.hidden)?,
                    descriptor_base: f.optional("me.descriptor_base", d.descriptor_base)?,
                    batch_per_gen: f.optional("me.batch_per_gen", d.batch_per_gen)?,
                    nb_gen: f.optional_opt("me.nb_gen", d.nb_gen)?,
                    mutation_sigma: f.optional("me.mutation_sigma", d.mutation_sigma)?,
                    init_range: f.optional("me.init_range", d.init_range)?,
                    weight_bound: f.optional("me.weight_bound", d.weight_bound)?,
                })
            }
            Algorithm::Ppo => {
                let d = PpoHyperParams::default();
                HyperParams::Ppo(PpoHyperParams {
                    learning_rate: f.optional("ppo.learning_rate", d.learning_rate)?,
                    clip_eps: f.optional("ppo.clip_eps", d.clip_eps)?,
                    c1: f.optional("ppo.c1", d.c1)?,
                    c2: f.optional("ppo.c2", d.c2)?,
                    epochs: f.optional("ppo.epochs", d.epochs)?,
                    num_minibatches: f.optional("ppo.num_minibatches", d.num_minibatches)?,
                    batch_frames: f.optional("ppo.batch_frames", d.batch_frames)?,
                    gamma: f.optional("ppo.gamma", d.gamma)?,
                    gae_lambda: f.optional("ppo.gae_lambda", d.gae_lambda)?,
                    hidden: f.optional_array("ppo.hidden", d.hidden)?,
                    num_actors: f.optional("ppo.num_actors", d.num_actors)?,
                    normalize_advantages: f.optional("ppo.normalize_advantages", d.normalize_advantages)?,
                    normalize_observations: f.optional("ppo.normalize_observations", d.normalize_observations)?,
                    max_grad_norm: f.optional_opt("ppo.max_grad_norm", d.max_grad_norm)?,
                    init_log_std: f.optional("ppo.init_log_std", d.init_log_std)?,
                    adam_beta1: f.optional("ppo.adam_beta1", d.adam_beta1)?,
                    adam_beta2: f.optional("ppo.adam_beta2", d.adam_beta2)?,
                    adam_eps: f.optional("ppo.adam_eps", d.adam_eps)?,
                })
            }
        };
        Ok(RunConfig {
            mode,
            env,
            hyper,
            budget_frames: f.required("budget_frames")?,
            master_seed: f.required("master_seed")?,
            curve_interval_frames: f.optional("curve_interval_frames", 0)?,
            output_dir: f.optional::<String>("output_dir", "runs".into())?.into(),
        })
    }
}

fn list<T: fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn opt<T: fmt::Debug>(x: &Option<T>) -> String {
    x.as_ref().map_or("none".into(), |v| format!("{v:?}"))
}

impl fmt::Display for RunConfig {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "algorithm = {}", self.algorithm().as_str())?;
        writeln!(w, "mode = {}", self.mode.as_str())?;
        writeln!(w, "env = {}", self.env.name())?;
        writeln!(w, "budget_frames = {}", self.budget_frames)?;
        writeln!(w, "master_seed = {}", self.master_seed)?;
        writeln!(w, "curve_interval_frames = {}", self.curve_interval_frames)?;
        writeln!(w, "output_dir = {}", self.output_dir.display())?;
        match &self.env {
            EnvSpec::Hexapod(c) => {
                writeln!(w, "hexapod.dt = {:?}", c.dt)?;
                writeln!(w, "hexapod.episode_len = {}", c.episode_len)?;
                writeln!(w, "hexapod.hip_radius = {:?}", c.hip_radius)?;
                writeln!(w, "hexapod.segment_lengths = {}", list(&c.segment_lengths))?;
                writeln!(w, "hexapod.joint_limit = {:?}", c.joint_limit)?;
                writeln!(w, "hexapod.max_joint_speed = {:?}", c.max_joint_speed)?;
                writeln!(w, "hexapod.body_half_height = {:?}", c.body_half_height)?;
                writeln!(w, "hexapod.contact_tolerance = {:?}", c.contact_tolerance)?;
            }
            EnvSpec::Oracle(c) => {
                writeln!(w, "oracle.target = {}", list(&c.target))?;
                writeln!(w, "oracle.episode_len = {}", c.episode_len)?;
            }
        }
        match &self.hyper {
            HyperParams::MapElites(h) => {
                writeln!(w, "me.mutation_rate = {:?}", h.mutation_rate)?;
                writeln!(w, "me.hidden = {}", list(&h.hidden))?;
                writeln!(w, "me.descriptor_base = {}", h.descriptor_base)?;
                writeln!(w, "me.batch_per_gen = {}", h.batch_per_gen)?;
                writeln!(w, "me.nb_gen = {}", opt(&h.nb_gen))?;
                writeln!(w, "me.mutation_sigma = {:?}", h.mutation_sigma)?;
                writeln!(w, "me.init_range = {:?}", h.init_range)?;
                writeln!(w, "me.weight_bound = {:?}", h.weight_bound)?;
            }
            HyperParams::Ppo(h) => {
                writeln!(w, "ppo.learning_rate = {:?}", h.learning_rate)?;
                writeln!(w, "ppo.clip_eps = {:?}", h.clip_eps)?;
                writeln!(w, "ppo.c1 = {:?}", h.c1)?;
                writeln!(w, "ppo.c2 = {:?}", h.c2)?;
                writeln!(w, "ppo.epochs = {}", h.epochs)?;
                writeln!(w, "ppo.num_minibatches = {}", h.num_minibatches)?;
                writeln!(w, "ppo.batch_frames = {}", h.batch_frames)?;
                writeln!(w, "ppo.gamma = {:?}", h.gamma)?;
                writeln!(w, "ppo.gae_lambda = {:?}", h.gae_lambda)?;
                writeln!(w, "ppo.hidden = {}", list(&h.hidden))?;
                writeln!(w, "ppo.num_actors = {}", h.num_actors)?;
                writeln!(w, "ppo.normalize_advantages = {}", h.normalize_advantages)?;
                writeln!(w, "ppo.normalize_observations = {}", h.normalize_observations)?;
                writeln!(w, "ppo.max_grad_norm = {}", opt(&h.max_grad_norm))?;
                writeln!(w, "ppo.init_log_std = {:?}", h.init_log_std)?;
                writeln!(w, "ppo.adam_beta1 = {:?}", h.adam_beta1)?;
                writeln!(w, "ppo.adam_beta2 = {:?}", h.adam_beta2)?;
                writeln!(w, "ppo.adam_eps = {:?}", h.adam_eps)?;
            }
        }
        out.write_str(&s)
    }
}

/// Raw key/value pairs with their source lines.
#[derive(Debug, Default)]
pub(crate) struct Fields {
    map: BTreeMap<String, (usize, String)>,
}

impl Fields {
    pub(crate) fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::new(Some(line), content, "expected `key = value`"));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::new(Some(line), "", "empty key"));
            }
            if let Some((prev, _)) = map.insert(key.clone(), (line, value.trim().to_string())) {
                return Err(ConfigError::new(Some(line), key, format!("duplicate key (first set on line {prev})")));
            }
        }
        Ok(Self { map })
    }

    /// Inserts a synthetic key (reported as line 0).
    pub(crate) fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), (0, value));
    }

    pub(crate) fn line_of(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError::new(Some(line), key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub(crate) fn required<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.take(key)?.ok_or_else(|| ConfigError::new(None, key, "missing required key"))
    }

    pub(crate) fn optional<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// `none` or a value.
    fn optional_opt<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some((_, v)) if v == "none" => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError::new(Some(line), key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn optional_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|p| {
                    let p = p.trim();
                    p.parse().map_err(|e| ConfigError::new(Some(line), key, format!("cannot parse `{p}`: {e}")))
                })
                .collect(),
        }
    }

    fn optional_array<T: FromStr + Copy, const N: usize>(&mut self, key: &str, default: [T; N]) -> Result<[T; N], ConfigError>
    where
        T::Err: fmt::Display,
    {
        let line = self.line_of(key);
        let v = self.optional_list(key, default.to_vec())?;
        v.try_into()
            .map_err(|v: Vec<T>| ConfigError::new(line, key, format!("expected {N} values, got {}", v.len())))
    }

    /// Fails on the first key nobody consumed.
    pub(crate) fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::new(Some(line), key, "unknown or inapplicable key")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "algorithm = ppo\nmode = closed-loop\nenv = hexapod\nbudget_frames = 1000\nmaster_seed = 3\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.hyper, HyperParams::Ppo(PpoHyperParams::default()));
        assert_eq!(c.env, EnvSpec::Hexapod(HexapodConfig::default()));
        assert_eq!(c.run_name(), "ppo-closed-loop-hexapod-seed3");
    }

    #[test]
    fn round_trip_exact() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        if let HyperParams::Ppo(h) = &mut c.hyper {
            h.learning_rate = 1.52e-5;
            h.clip_eps = 0.27059;
            h.max_grad_norm = Some(0.5);
        }
        assert_eq!(RunConfig::parse(&c.to_string()).unwrap(), c);
        let me = RunConfig::new(
            ControllerMode::OpenLoop,
            EnvSpec::Oracle(OracleConfig::default()),
            HyperParams::MapElites(MeHyperParams { nb_gen: Some(4), ..Default::default() }),
            5,
            u64::MAX,
        );
        assert_eq!(RunConfig::parse(&me.to_string()).unwrap(), me);
    }

    #[test]
    fn table_configuration_expressible() {
        let text = format!("{MINIMAL}ppo.clip_eps = 0.27059\nppo.learning_rate = 1.52e-5\nppo.hidden = 5, 5\nppo.c2 = 0\n");
        let c = RunConfig::parse(&text).unwrap();
        let HyperParams::Ppo(h) = c.hyper else { panic!() };
        assert_eq!((h.clip_eps, h.learning_rate, h.hidden, h.c2), (0.27059, 1.52e-5, [5, 5], 0.0));
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let err = RunConfig::parse(&format!("{MINIMAL}ppo.clip_eps = wide\n")).unwrap_err();
        assert_eq!((err.line, err.field.as_str()), (Some(6), "ppo.clip_eps"));
        let err = RunConfig::parse(&format!("{MINIMAL}me.mutation_rate = 0.1\n")).unwrap_err();
        assert_eq!((err.line, err.field.as_str()), (Some(6), "me.mutation_rate"));
        let err = RunConfig::parse("algorithm = ppo\nalgorithm = ppo\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = RunConfig::parse("algorithm = ppo\nmode = open-loop\nenv = hexapod\n").unwrap_err();
        assert_eq!(err.field, "budget_frames");
        let err = RunConfig::parse(&format!("{MINIMAL}ppo.hidden = 3\n")).unwrap_err();
        assert!(err.message.contains("expected 2"));
    }
}
