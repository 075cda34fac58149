//! Run configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::provider::DEFAULT_BATCH_SIZE;
use crate::stimulus::RenderConfig;
use crate::zeroshot::DEFAULT_LOGIT_SCALE;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSpec {
    /// Built-in synthetic encoder. The vocabulary defaults to every label,
    /// word and RSA word of the run; the seed defaults to the run seed.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    /// Encoder process speaking the JSON-lines protocol.
    External { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSelection {
    /// Built-in template ids.
    #[serde(default = "default_prompt_ids")]
    pub ids: Vec<String>,
    /// Extra templates from a JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for PromptSelection {
    fn default() -> Self {
        PromptSelection {
            ids: default_prompt_ids(),
            file: None,
        }
    }
}

fn default_prompt_ids() -> Vec<String> {
    vec!["default".to_string()]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsaSettings {
    #[serde(default)]
    pub enabled: bool,
    /// One word RDM per fixed superimposed word.
    #[serde(default)]
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub word_lists: Vec<PathBuf>,
    #[serde(default)]
    pub prompts: PromptSelection,
    pub provider: ProviderSpec,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_vectors: Option<PathBuf>,
    #[serde(default = "yes")]
    pub include_own_label: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub rsa: RsaSettings,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "yes")]
    pub cache: bool,
    #[serde(default)]
    pub timestamps: bool,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_logit_scale() -> f64 {
    DEFAULT_LOGIT_SCALE
}
fn yes() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_tasks() -> Vec<Task> {
    Task::ALL.to_vec()
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_timeout() -> u64 {
    120
}

/// Command-line overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub provider: Option<ProviderOverride>,
    pub gamma: Option<f64>,
    pub no_cache: bool,
    pub timestamps: bool,
    pub include_own_label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderOverride {
    Synthetic,
    Command(Vec<String>),
}

impl ProviderOverride {
    /// `synthetic` or `cmd:<command line>`; the command line is split with
    /// shell quoting rules.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        if s == "synthetic" {
            return Ok(ProviderOverride::Synthetic);
        }
        let Some(cmd) = s.strip_prefix("cmd:") else {
            return Err(ConfigError::Invalid(format!(
                "provider must be `synthetic` or `cmd:\"...\"`, got {s:?}"
            )));
        };
        let argv = shell_words::split(cmd).map_err(|e| ConfigError::Invalid(format!("provider command: {e}")))?;
        if argv.is_empty() {
            return Err(ConfigError::Invalid("provider command is empty".into()));
        }
        Ok(ProviderOverride::Command(argv))
    }
}

impl RunConfig {
    pub fn from_json(data: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(data).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Read a config and resolve its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let data = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&data, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        self.word_lists.iter_mut().for_each(fix);
        if let Some(p) = self.prompts.file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.word_vectors.as_mut() {
            fix(p);
        }
        fix(&mut self.out_dir);
        // the built-in font path is absolute; a relative one is the user's
        fix(&mut self.render.font_file);
    }

    /// Apply overrides. Flags win over the file.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
            if let ProviderSpec::Synthetic { seed: s, .. } = &mut self.provider {
                *s = Some(seed);
            }
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
        match &o.provider {
            Some(ProviderOverride::Command(argv)) => {
                self.provider = ProviderSpec::External { command: argv.clone() };
            }
            Some(ProviderOverride::Synthetic) if !matches!(self.provider, ProviderSpec::Synthetic { .. }) => {
                let gamma = o.gamma.ok_or_else(|| {
                    ConfigError::Invalid("switching to the synthetic provider needs --gamma".into())
                })?;
                self.provider = ProviderSpec::Synthetic {
                    vocabulary: None,
                    seed: o.seed,
                    gamma,
                    dim: None,
                };
            }
            Some(ProviderOverride::Synthetic) | None => {}
        }
        if let Some(g) = o.gamma {
            match &mut self.provider {
                ProviderSpec::Synthetic { gamma, .. } => *gamma = g,
                ProviderSpec::External { .. } => {
                    return Err(ConfigError::Invalid("--gamma only applies to the synthetic provider".into()))
                }
            }
        }
        if o.no_cache {
            self.cache = false;
        }
        if o.timestamps {
            self.timestamps = true;
        }
        if let Some(v) = o.include_own_label {
            self.include_own_label = v;
        }
        Ok(())
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.word_lists.is_empty() {
            return bad("word_lists is empty".into());
        }
        if self.prompts.ids.is_empty() && self.prompts.file.is_none() {
            return bad("no prompt templates selected".into());
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return bad(format!("logit_scale must be positive, got {}", self.logit_scale));
        }
        if self.tasks.is_empty() {
            return bad("tasks is empty".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive".into());
        }
        match &self.provider {
            ProviderSpec::Synthetic { gamma, dim, vocabulary, .. } => {
                if !(0.0..=1.0).contains(gamma) {
                    return bad(format!("gamma must be in [0, 1], got {gamma}"));
                }
                if dim.is_some_and(|d| d < 2) {
                    return bad("synthetic dim must be at least 2".into());
                }
                if vocabulary.as_ref().is_some_and(Vec::is_empty) {
                    return bad("synthetic vocabulary is empty".into());
                }
            }
            ProviderSpec::External { command } => {
                if command.is_empty() {
                    return bad("external provider command is empty".into());
                }
            }
        }
        self.render.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "manifest": "manifest.csv",
        "word_lists": ["words/sup.json"],
        "provider": {"kind": "synthetic", "gamma": 0.75}
    }"#;

    fn minimal() -> RunConfig {
        RunConfig::from_json(MINIMAL, Path::new("run.json")).unwrap()
    }

    #[test]
    fn defaults() {
        let c = minimal();
        assert_eq!(c.logit_scale, 100.0);
        assert!(c.include_own_label);
        assert_eq!(c.prompts.ids, ["default"]);
        assert_eq!(c.tasks, Task::ALL);
        assert_eq!(c.batch_size, 32);
        assert!(c.cache && !c.timestamps);
        c.validate().unwrap();
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut c = minimal();
        c.resolve_paths(Path::new("/data/exp"));
        assert_eq!(c.manifest, Path::new("/data/exp/manifest.csv"));
        assert_eq!(c.word_lists[0], Path::new("/data/exp/words/sup.json"));
        assert_eq!(c.out_dir, Path::new("/data/exp/out"));
        assert!(c.render.font_file.is_absolute());
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = MINIMAL.replace("\"manifest\"", "\"manifesto\": 1, \"manifest\"");
        assert!(matches!(
            RunConfig::from_json(&bad, Path::new("x")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn flags_win() {
        let mut c = minimal();
        c.apply(&Overrides {
            seed: Some(9),
            gamma: Some(0.0),
            no_cache: true,
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.seed, 9);
        assert!(!c.cache);
        assert_eq!(
            c.provider,
            ProviderSpec::Synthetic {
                vocabulary: None,
                seed: Some(9),
                gamma: 0.0,
                dim: None
            }
        );

        c.apply(&Overrides {
            provider: Some(ProviderOverride::parse("cmd:python adapter.py --model 'clip vit'").unwrap()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(
            c.provider,
            ProviderSpec::External {
                command: vec!["python".into(), "adapter.py".into(), "--model".into(), "clip vit".into()]
            }
        );
        assert!(c
            .apply(&Overrides {
                gamma: Some(0.5),
                ..Overrides::default()
            })
            .is_err());
        assert!(c
            .apply(&Overrides {
                provider: Some(ProviderOverride::Synthetic),
                ..Overrides::default()
            })
            .is_err());
    }

    #[test]
    fn provider_override_syntax() {
        assert_eq!(ProviderOverride::parse("synthetic").unwrap(), ProviderOverride::Synthetic);
        assert!(ProviderOverride::parse("clip").is_err());
        assert!(ProviderOverride::parse("cmd:").is_err());
    }

    #[test]
    fn validation_errors() {
        let mut c = minimal();
        c.logit_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.provider = ProviderSpec::Synthetic {
            vocabulary: None,
            seed: None,
            gamma: 1.5,
            dim: None,
        };
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.render.rel_height = 0.0;
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.word_lists.clear();
        assert!(c.validate().is_err());
    }
}
