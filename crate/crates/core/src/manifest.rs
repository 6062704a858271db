//! Declarative registry description.
//!
//! A manifest lists registration sources; the CLI builds registries from it
//! and isolated-mode workers rebuild their replicas from it.
//!
//! ```json
//! {
//!   "separator": ".",
//!   "sources": [
//!     {"type": "hub", "toolset": "calculator", "namespace": true},
//!     {"type": "openapi", "spec": "http://127.0.0.1:8000",
//!      "client": {"base_url": "http://127.0.0.1:8000"}, "namespace": true},
//!     {"type": "mcp", "endpoint": {"transport": "sse", "url": "http://127.0.0.1:8001/sse"},
//!      "namespace": "math"}
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mcp::McpEndpoint;
use crate::openapi::HttpClientConfig;
use crate::registry::ToolRegistry;

/// Namespace choice for a registration: none, the source's default name, or
/// an explicit prefix. Serialized as `false`, `true` or a string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Namespace {
    #[default]
    None,
    Default,
    Named(String),
}

impl Namespace {
    /// The prefix to use given the source's declared name.
    pub fn resolve(&self, declared: &str) -> Option<String> {
        match self {
            Namespace::None => None,
            Namespace::Default => Some(default_namespace(declared)),
            Namespace::Named(n) => Some(n.clone()),
        }
    }
}

/// Lowercases a declared name and replaces whitespace runs with `_`.
pub fn default_namespace(declared: &str) -> String {
    declared.split_whitespace().collect::<Vec<_>>().join("_").to_lowercase()
}

impl From<bool> for Namespace {
    fn from(b: bool) -> Self {
        if b {
            Namespace::Default
        } else {
            Namespace::None
        }
    }
}

impl From<&str> for Namespace {
    fn from(s: &str) -> Self {
        Namespace::Named(s.to_string())
    }
}

impl Serialize for Namespace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Namespace::None => s.serialize_bool(false),
            Namespace::Default => s.serialize_bool(true),
            Namespace::Named(n) => s.serialize_str(n),
        }
    }
}

impl<'de> Deserialize<'de> for Namespace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Flag(bool),
            Name(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Flag(b) => b.into(),
            Raw::Name(n) => Namespace::Named(n),
        })
    }
}

/// One registration source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Source {
    Hub {
        toolset: String,
        #[serde(default)]
        namespace: Namespace,
    },
    OpenApi {
        /// URL, file path, or inline JSON/YAML document.
        spec: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<HttpClientConfig>,
        #[serde(default)]
        namespace: Namespace,
    },
    Mcp {
        endpoint: McpEndpoint,
        #[serde(default)]
        namespace: Namespace,
    },
}

impl Source {
    /// Registers this source into `registry`.
    pub fn register_into(&self, registry: &mut ToolRegistry) -> Result<Vec<String>, crate::manifest::ManifestError> {
        match self {
            Source::Hub { toolset, namespace } => Ok(registry.register_hub(toolset, namespace)?),
            Source::OpenApi { spec, client, namespace } => {
                let loaded = crate::openapi::load_openapi_spec(spec)?;
                let client = match client {
                    Some(c) => c.clone(),
                    None => HttpClientConfig::new(&loaded.default_base_url(spec)?)?,
                };
                Ok(crate::openapi::register_from_openapi(registry, &client, &loaded, namespace)?)
            }
            Source::Mcp { endpoint, namespace } => Ok(crate::mcp::register_from_mcp(registry, endpoint, namespace)?),
        }
    }

    /// Cheap reachability check for external sources.
    pub fn probe(&self) -> Result<(), String> {
        match self {
            Source::Hub { toolset, .. } => {
                crate::hub::toolset(toolset).map(|_| ()).ok_or_else(|| format!("unknown hub toolset {toolset:?}"))
            }
            Source::OpenApi { spec, .. } => crate::openapi::load_openapi_spec(spec).map(|_| ()).map_err(|e| e.to_string()),
            Source::Mcp { endpoint, .. } => crate::mcp::probe(endpoint).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Registry(#[from] crate::registry::RegistryError),
    #[error(transparent)]
    OpenApi(#[from] crate::openapi::OpenApiError),
    #[error(transparent)]
    Mcp(#[from] crate::mcp::McpError),
}

fn default_separator() -> char {
    '.'
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_separator")]
    pub separator: char,
    #[serde(default)]
    pub sources: Vec<Source>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self { separator: '.', sources: Vec::new() }
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, ManifestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// Builds a registry with default executor settings.
    pub fn build(&self) -> Result<ToolRegistry, ManifestError> {
        let mut registry = ToolRegistry::with_separator(self.separator);
        self.build_into(&mut registry)?;
        Ok(registry)
    }

    pub fn build_into(&self, registry: &mut ToolRegistry) -> Result<(), ManifestError> {
        for source in &self.sources {
            source.register_into(registry)?;
        }
        Ok(())
    }
}
