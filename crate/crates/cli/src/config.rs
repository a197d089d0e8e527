use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use forge_core::gateway::{BackendConfig, BackendKind, Gateway, TemplateSet};

use crate::Invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub k: usize,
    pub temperature: f64,
    /// Maximum loop iterations per seed.
    pub budget: usize,
    pub knowledge_requests: usize,
    pub steps_per_iteration: usize,
    pub easy_fraction: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub window: usize,
    pub phase_len: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            k: forge_core::preference::DEFAULT_K,
            temperature: forge_core::preference::DEFAULT_TEMPERATURE,
            budget: 4,
            knowledge_requests: 2,
            steps_per_iteration: 8,
            easy_fraction: forge_core::questions::DEFAULT_EASY_FRACTION,
            tau: forge_core::foundry::DEFAULT_TAU,
            epsilon: forge_core::mixer::DEFAULT_EPSILON,
            eta: forge_core::mixer::DEFAULT_ETA,
            window: forge_core::mixer::DEFAULT_WINDOW,
            phase_len: 1000,
        }
    }
}

/// Which backend plays each pipeline role when no flag says otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roles {
    pub reasoning: Option<String>,
    pub reflection: Option<String>,
    pub narrator: Option<String>,
    pub rewriter: Option<String>,
    pub sampler: Option<String>,
    pub judge: Option<String>,
    pub foundry: Option<String>,
    pub eval: Option<String>,
    pub panel: Vec<String>,
}

impl Roles {
    fn referenced(&self) -> impl Iterator<Item = (&'static str, &str)> {
        [
            ("reasoning", &self.reasoning),
            ("reflection", &self.reflection),
            ("narrator", &self.narrator),
            ("rewriter", &self.rewriter),
            ("sampler", &self.sampler),
            ("judge", &self.judge),
            ("foundry", &self.foundry),
            ("eval", &self.eval),
        ]
        .into_iter()
        .filter_map(|(role, id)| id.as_deref().map(|id| (role, id)))
        .chain(self.panel.iter().map(|id| ("panel", id.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeConfig {
    pub backends: Vec<BackendConfig>,
    pub templates_dir: Option<PathBuf>,
    pub defaults: Defaults,
    pub roles: Roles,
    pub service: ServiceConfig,
}

impl ForgeConfig {
    pub fn check(&self) -> Result<(), Invalid> {
        let mut ids = BTreeSet::new();
        for b in &self.backends {
            b.check().map_err(|e| Invalid(e.to_string()))?;
            if !ids.insert(b.id.as_str()) {
                return Err(Invalid(format!("backend `{}` is declared twice", b.id)));
            }
        }
        for (role, id) in self.roles.referenced() {
            if !ids.contains(id) {
                return Err(Invalid(format!("role {role} references unknown backend `{id}`")));
            }
        }
        if !(1..=65535).contains(&self.service.port) {
            return Err(Invalid(format!(
                "service port {} outside [1, 65535]",
                self.service.port
            )));
        }
        let d = &self.defaults;
        if d.k < 2 {
            return Err(Invalid("defaults.k must be >= 2".into()));
        }
        if !d.temperature.is_finite() || d.temperature < 0.0 {
            return Err(Invalid("defaults.temperature must be finite and >= 0".into()));
        }
        if d.budget < 1 || d.steps_per_iteration < 1 {
            return Err(Invalid(
                "defaults.budget and defaults.steps_per_iteration must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&d.easy_fraction) {
            return Err(Invalid("defaults.easy_fraction must be in [0, 1]".into()));
        }
        if !(d.tau > 0.0 && d.tau <= 1.0) {
            return Err(Invalid("defaults.tau must be in (0, 1]".into()));
        }
        if d.phase_len == 0 {
            return Err(Invalid("defaults.phase_len must be positive".into()));
        }
        Ok(())
    }
}

/// A checked configuration and where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ForgeConfig,
    pub path: Option<PathBuf>,
    pub base_dir: PathBuf,
    pub digest: String,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Invalid> {
        let (config, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Invalid(format!("{}: {e}", p.display())))?;
                let config: ForgeConfig =
                    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
            None => (ForgeConfig::default(), PathBuf::from(".")),
        };
        config.check()?;
        let canonical = serde_json::to_vec(&config).expect("config serializes");
        Ok(LoadedConfig {
            digest: sha256_hex(&canonical),
            config,
            path: path.map(Path::to_path_buf),
            base_dir,
        })
    }

    pub fn gateway(&self) -> Result<Gateway, Invalid> {
        let gateway =
            Gateway::from_configs(&self.config.backends, &self.base_dir).map_err(|e| Invalid(e.to_string()))?;
        let templates = match &self.config.templates_dir {
            Some(dir) => TemplateSet::with_overrides(&self.base_dir.join(dir)).map_err(|e| Invalid(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        Ok(gateway.with_templates(templates))
    }

    /// Mock reply scripts, which a run depends on as much as on its inputs.
    pub fn script_paths(&self) -> Vec<PathBuf> {
        self.config
            .backends
            .iter()
            .filter(|b| b.kind == BackendKind::Mock)
            .filter_map(|b| b.script.as_ref().map(|s| self.base_dir.join(s)))
            .collect()
    }

    /// Resolves the backend for a role: explicit flag, then the configured
    /// role, then the only declared backend.
    pub fn backend_for(&self, flag: Option<&str>, role: &str, configured: Option<&str>) -> Result<String, Invalid> {
        let id = match (flag, configured, self.config.backends.as_slice()) {
            (Some(id), _, _) | (None, Some(id), _) => id.to_string(),
            (None, None, [only]) => only.id.clone(),
            _ => {
                return Err(Invalid(format!(
                    "no backend for role {role}: pass a backend flag or set roles.{role} in the config"
                )))
            }
        };
        if !self.config.backends.iter().any(|b| b.id == id) {
            return Err(Invalid(format!("unknown backend `{id}` for role {role}")));
        }
        Ok(id)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
