use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{EsclError, Result};
use crate::losses::{EquivariantLoss, LossConfig};
use crate::numerics::DropoutSpec;

/// Every key accepted in a config file or as a `--key value` override.
pub const CONFIG_KEYS: &[&str] = &[
    "batch_size",
    "steps",
    "learning_rate",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "r_low",
    "r_high",
    "loss.temperature",
    "loss.lambda",
    "loss.variant",
    "seed",
    "eval_every",
    "checkpoint_path",
    "embed_dim",
    "output_dim",
    "select_best",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const DEFAULT_ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub r_low: DropoutSpec,
    pub r_high: DropoutSpec,
    pub loss: LossConfig,
    pub seed: u64,
    /// Evaluate every this many steps; 0 evaluates only after the last step.
    pub eval_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    pub embed_dim: usize,
    pub output_dim: usize,
    /// Keep the parameters of the best evaluation snapshot instead of the last.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            steps: 200,
            learning_rate: 5e-3,
            optimizer: OptimizerKind::DEFAULT_ADAM,
            r_low: DropoutSpec::new(0.1).expect("valid rate"),
            r_high: DropoutSpec::new(0.45).expect("valid rate"),
            loss: LossConfig::default(),
            seed: 0,
            eval_every: 50,
            checkpoint_path: None,
            embed_dim: 32,
            output_dim: 32,
            select_best: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| EsclError::Config(format!("invalid value '{value}' for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(EsclError::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.steps == 0 {
            return Err(EsclError::Config("steps must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EsclError::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.r_low.rate() >= self.r_high.rate() {
            return Err(EsclError::Config(format!(
                "r_low ({}) must be below r_high ({})",
                self.r_low.rate(),
                self.r_high.rate()
            )));
        }
        if self.embed_dim == 0 || self.output_dim == 0 {
            return Err(EsclError::Config(
                "embed_dim and output_dim must be positive".into(),
            ));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1)
                || !(0.0..1.0).contains(&beta2)
                || eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            {
                return Err(EsclError::Config(format!(
                    "adam needs betas in [0, 1) and eps > 0, got ({beta1}, {beta2}, {eps})"
                )));
            }
        }
        self.loss.validate()
    }

    /// Applies one `key = value` setting; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let adam = |o: OptimizerKind| match o {
            OptimizerKind::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            OptimizerKind::Sgd => match OptimizerKind::DEFAULT_ADAM {
                OptimizerKind::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
                OptimizerKind::Sgd => unreachable!(),
            },
        };
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "optimizer" => {
                self.optimizer = match value.trim().to_ascii_lowercase().as_str() {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => {
                        let (beta1, beta2, eps) = adam(self.optimizer);
                        OptimizerKind::Adam { beta1, beta2, eps }
                    }
                    other => {
                        return Err(EsclError::Config(format!(
                            "unknown optimizer '{other}' (expected sgd or adam)"
                        )))
                    }
                }
            }
            "adam_beta1" | "adam_beta2" | "adam_eps" => {
                let v: f64 = parse(key, value)?;
                let (mut beta1, mut beta2, mut eps) = adam(self.optimizer);
                match key {
                    "adam_beta1" => beta1 = v,
                    "adam_beta2" => beta2 = v,
                    _ => eps = v,
                }
                // betas only take effect with adam; keep them for a later switch
                if matches!(self.optimizer, OptimizerKind::Adam { .. }) {
                    self.optimizer = OptimizerKind::Adam { beta1, beta2, eps };
                }
            }
            "r_low" => self.r_low = DropoutSpec::new(parse(key, value)?)?,
            "r_high" => self.r_high = DropoutSpec::new(parse(key, value)?)?,
            "loss.temperature" => self.loss.temperature = parse(key, value)?,
            "loss.lambda" => self.loss.lambda = parse(key, value)?,
            "loss.variant" => self.loss.variant = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "checkpoint_path" => {
                let v = value.trim();
                self.checkpoint_path = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "output_dim" => self.output_dim = parse(key, value)?,
            "select_best" => self.select_best = parse(key, value)?,
            other => return Err(EsclError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat TOML document of config keys on top of the defaults.
    /// `loss.*` keys may be written dotted or under a `[loss]` table.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| EsclError::Config(format!("config is not valid TOML: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat)?;
        let mut cfg = TrainConfig::default();
        for (k, v) in flat {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Resolved configuration as flat TOML; parses back to an equal config.
    pub fn to_toml_string(&self) -> String {
        let (optimizer, (b1, b2, eps)) = match self.optimizer {
            OptimizerKind::Sgd => ("sgd", (0.9, 0.999, 1e-8)),
            OptimizerKind::Adam { beta1, beta2, eps } => ("adam", (beta1, beta2, eps)),
        };
        let mut s = String::new();
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "optimizer = \"{optimizer}\"");
        let _ = writeln!(s, "adam_beta1 = {b1:?}");
        let _ = writeln!(s, "adam_beta2 = {b2:?}");
        let _ = writeln!(s, "adam_eps = {eps:?}");
        let _ = writeln!(s, "r_low = {:?}", self.r_low.rate());
        let _ = writeln!(s, "r_high = {:?}", self.r_high.rate());
        let _ = writeln!(s, "loss.temperature = {:?}", self.loss.temperature);
        let _ = writeln!(s, "loss.lambda = {:?}", self.loss.lambda);
        let _ = writeln!(s, "loss.variant = \"{}\"", self.loss.variant);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let path = self
            .checkpoint_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "checkpoint_path = {}", toml::Value::String(path));
        let _ = writeln!(s, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(s, "output_dim = {}", self.output_dim);
        let _ = writeln!(s, "select_best = {}", self.select_best);
        s
    }

    pub fn variant(&self) -> EquivariantLoss {
        self.loss.variant
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let text = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => format!("{f:?}"),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(EsclError::Config(format!(
                    "unsupported value for {key}: {other}"
                )))
            }
        };
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(EsclError::Config(format!("unknown config key '{key}'")));
        }
        out.insert(key, text);
    }
    Ok(())
}
