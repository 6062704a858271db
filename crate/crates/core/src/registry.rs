//! Named tool store with namespace algebra and registration pathways.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde_json::Value;

use crate::executor::{Executor, ExecutorConfig};
use crate::manifest::{Namespace, Source};
use crate::model::{
    conform_name, render_tool_name, ApiFormat, ExecutionMode, Invoker, NameConstraint, NameError, Origin, Replica,
    SignatureDescriptor, Tool, ToolCall, ToolCallResult,
};
use crate::schema::{render_schema_with, SchemaError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("a tool named {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("unknown namespace {0:?}")]
    UnknownNamespace(String),
    #[error("expected exactly one namespace, found {0:?}")]
    MultipleNamespaces(Vec<String>),
    #[error("registry has no namespace to reduce")]
    NoNamespace,
    #[error("removing the namespace would make {0:?} collide with an existing tool")]
    WouldCollide(String),
    #[error("separator mismatch: {0:?} vs {1:?}")]
    SeparatorMismatch(char, char),
    #[error("unknown hub toolset {0:?}")]
    UnknownToolset(String),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// How [`ToolRegistry::merge`] resolves name conflicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictPolicy {
    Error,
    KeepExisting,
    PreferIncoming,
}

impl std::str::FromStr for ConflictPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(ConflictPolicy::Error),
            "keep-existing" => Ok(ConflictPolicy::KeepExisting),
            "prefer-incoming" => Ok(ConflictPolicy::PreferIncoming),
            other => Err(format!("unknown conflict policy {other:?}")),
        }
    }
}

/// A named collection of tools registered together, like the methods of a
/// class. `hub_key` is set for built-in toolsets that worker processes can
/// rebuild by name.
#[derive(Clone)]
pub struct Toolset {
    pub name: String,
    pub members: Vec<(SignatureDescriptor, Invoker)>,
    pub hub_key: Option<String>,
    /// Members that terminate their host and may only run in worker processes.
    pub isolated_only: Vec<String>,
}

impl Toolset {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), members: Vec::new(), hub_key: None, isolated_only: Vec::new() }
    }

    pub fn member(mut self, descriptor: SignatureDescriptor, invoker: Invoker) -> Self {
        self.members.push((descriptor, invoker));
        self
    }
}

/// Name → [`Tool`] store. Lookups are O(1); the namespace set is derived from
/// the tool names and kept in sync on every mutation.
pub struct ToolRegistry {
    tools: HashMap<String, Tool>,
    sub_namespaces: BTreeSet<String>,
    aliases: HashMap<String, Option<String>>,
    separator: char,
    naming: NameConstraint,
    executor: Arc<Executor>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.list_tools(None, None))
            .field("separator", &self.separator)
            .field("mode", &self.execution_mode())
            .finish()
    }
}

impl PartialEq for ToolRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.separator == other.separator && self.tools == other.tools && self.sub_namespaces == other.sub_namespaces
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::with_config('.', ExecutorConfig::default())
    }

    pub fn with_separator(separator: char) -> Self {
        Self::with_config(separator, ExecutorConfig::default())
    }

    pub fn with_config(separator: char, config: ExecutorConfig) -> Self {
        Self {
            tools: HashMap::new(),
            sub_namespaces: BTreeSet::new(),
            aliases: HashMap::new(),
            separator,
            naming: NameConstraint::permissive(),
            executor: Arc::new(Executor::new(config)),
        }
    }

    pub fn separator(&self) -> char {
        self.separator
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn sub_namespaces(&self) -> &BTreeSet<String> {
        &self.sub_namespaces
    }

    pub fn executor(&self) -> &Arc<Executor> {
        &self.executor
    }

    pub fn tools(&self) -> impl Iterator<Item = &Tool> {
        self.tools.values()
    }

    /// Registers a prepared tool, optionally under a namespace.
    pub fn register(&mut self, tool: Tool, namespace: Option<&str>) -> Result<String, RegistryError> {
        let name = self.render(tool.name(), namespace)?;
        if self.tools.contains_key(&name) {
            return Err(RegistryError::DuplicateName(name));
        }
        self.insert(tool.with_name(name.clone()));
        self.refresh_namespaces();
        Ok(name)
    }

    /// Registers a native callable described by `descriptor`.
    pub fn register_fn(
        &mut self,
        descriptor: &SignatureDescriptor,
        invoker: Invoker,
        namespace: Option<&str>,
    ) -> Result<String, RegistryError> {
        let tool = Tool::from_descriptor(descriptor, invoker)?;
        self.register(tool, namespace)
    }

    /// Registers every member of a toolset atomically. With
    /// `Namespace::Default` the namespace is the toolset name lowercased.
    pub fn register_from_toolset(
        &mut self,
        toolset: &Toolset,
        namespace: &Namespace,
    ) -> Result<Vec<String>, RegistryError> {
        let ns = namespace.resolve(&toolset.name);
        let mut tools = Vec::with_capacity(toolset.members.len());
        for (descriptor, invoker) in &toolset.members {
            let tool = Tool::from_descriptor(descriptor, invoker.clone())?
                .with_origin(Origin::Toolset)
                .isolated_only(toolset.isolated_only.contains(&descriptor.tool_name));
            tools.push(tool);
        }
        let replica_source = toolset
            .hub_key
            .as_ref()
            .map(|key| Source::Hub { toolset: key.clone(), namespace: namespace.clone() });
        self.register_batch(tools, ns.as_deref(), replica_source)
    }

    /// Registers a built-in hub toolset by key (`calculator`, `timing`, `faults`).
    pub fn register_hub(&mut self, key: &str, namespace: &Namespace) -> Result<Vec<String>, RegistryError> {
        let toolset = crate::hub::toolset(key).ok_or_else(|| RegistryError::UnknownToolset(key.into()))?;
        self.register_from_toolset(&toolset, namespace)
    }

    /// Renders and inserts a group of tools; nothing is inserted unless every
    /// name is free. When `replica_source` is given, each tool is marked as
    /// rebuildable from it.
    pub fn register_batch(
        &mut self,
        tools: Vec<Tool>,
        namespace: Option<&str>,
        replica_source: Option<Source>,
    ) -> Result<Vec<String>, RegistryError> {
        let mut staged = Vec::with_capacity(tools.len());
        let mut names = BTreeSet::new();
        for tool in tools {
            let name = self.render(tool.name(), namespace)?;
            if self.tools.contains_key(&name) || !names.insert(name.clone()) {
                return Err(RegistryError::DuplicateName(name));
            }
            let mut tool = tool.with_name(name.clone());
            if let Some(source) = &replica_source {
                tool = tool.with_replica(Replica { source: source.clone(), name: name.clone() });
            }
            staged.push(tool);
        }
        let out: Vec<String> = staged.iter().map(|t| t.name().to_string()).collect();
        for tool in staged {
            self.insert(tool);
        }
        self.refresh_namespaces();
        Ok(out)
    }

    fn render(&self, raw: &str, namespace: Option<&str>) -> Result<String, NameError> {
        render_tool_name(raw, namespace, self.separator, &self.naming)
    }

    fn insert(&mut self, tool: Tool) {
        self.tools.insert(tool.name().to_string(), tool);
    }

    fn refresh_namespaces(&mut self) {
        let sep = self.separator;
        self.sub_namespaces = self
            .tools
            .keys()
            .filter_map(|name| name.split_once(sep).map(|(prefix, _)| prefix.to_string()))
            .collect();
        // names a strict-charset provider may echo back, e.g. `calculator_add`
        let strict = NameConstraint::openai_strict();
        let mut aliases: HashMap<String, Option<String>> = HashMap::new();
        for name in self.tools.keys() {
            if let Ok(alias) = conform_name(name, sep, &strict) {
                if alias != *name && !self.tools.contains_key(&alias) {
                    aliases
                        .entry(alias)
                        .and_modify(|slot| *slot = None)
                        .or_insert_with(|| Some(name.clone()));
                }
            }
        }
        self.aliases = aliases;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn get_tool(&self, name: &str) -> Result<&Tool, RegistryError> {
        self.tools.get(name).ok_or_else(|| RegistryError::UnknownTool(name.to_string()))
    }

    pub fn get_invoker(&self, name: &str) -> Result<&Invoker, RegistryError> {
        self.get_tool(name).map(Tool::invoker)
    }

    /// Looks a tool up by its registered name or by the unambiguous name it
    /// was rendered as for a strict provider charset.
    pub fn resolve(&self, name: &str) -> Option<&Tool> {
        self.tools
            .get(name)
            .or_else(|| self.aliases.get(name).and_then(|a| a.as_ref()).and_then(|n| self.tools.get(n)))
    }

    /// Sorted tool names; filters are conjunctive.
    pub fn list_tools(&self, prefix: Option<&str>, origin: Option<Origin>) -> Vec<String> {
        let full_prefix = prefix.map(|p| format!("{p}{}", self.separator));
        let mut names: Vec<String> = self
            .tools
            .values()
            .filter(|t| full_prefix.as_ref().is_none_or(|p| t.name().starts_with(p.as_str())))
            .filter(|t| origin.is_none_or(|o| t.origin() == o))
            .map(|t| t.name().to_string())
            .collect();
        names.sort();
        names
    }

    /// Adds `other`'s tools to this registry; `other` is left untouched.
    pub fn merge(&mut self, other: &ToolRegistry, policy: ConflictPolicy) -> Result<(), RegistryError> {
        if other.separator != self.separator {
            return Err(RegistryError::SeparatorMismatch(self.separator, other.separator));
        }
        if policy == ConflictPolicy::Error {
            let mut clashes: Vec<&String> = other.tools.keys().filter(|n| self.tools.contains_key(*n)).collect();
            clashes.sort();
            if let Some(first) = clashes.first() {
                return Err(RegistryError::DuplicateName((*first).clone()));
            }
        }
        for (name, tool) in &other.tools {
            if policy == ConflictPolicy::KeepExisting && self.tools.contains_key(name) {
                continue;
            }
            self.tools.insert(name.clone(), tool.clone());
        }
        self.refresh_namespaces();
        Ok(())
    }

    /// Moves every tool under `prefix` into a new registry with the same
    /// separator and execution configuration.
    pub fn spinoff(&mut self, prefix: &str) -> Result<ToolRegistry, RegistryError> {
        if !self.sub_namespaces.contains(prefix) {
            return Err(RegistryError::UnknownNamespace(prefix.to_string()));
        }
        let full = format!("{prefix}{}", self.separator);
        let moved: Vec<String> = self.tools.keys().filter(|n| n.starts_with(&full)).cloned().collect();
        let mut out = ToolRegistry::with_config(self.separator, self.executor.config());
        out.executor.set_mode(self.execution_mode());
        for name in moved {
            if let Some(tool) = self.tools.remove(&name) {
                out.tools.insert(name, tool);
            }
        }
        self.refresh_namespaces();
        out.refresh_namespaces();
        Ok(out)
    }

    /// Strips the single remaining namespace prefix from every tool.
    pub fn reduce_namespace(&mut self) -> Result<(), RegistryError> {
        let prefix = match self.sub_namespaces.len() {
            0 => return Err(RegistryError::NoNamespace),
            1 => self.sub_namespaces.iter().next().cloned().unwrap_or_default(),
            _ => return Err(RegistryError::MultipleNamespaces(self.sub_namespaces.iter().cloned().collect())),
        };
        let full = format!("{prefix}{}", self.separator);
        let mut renamed = HashMap::with_capacity(self.tools.len());
        for (name, tool) in &self.tools {
            let new_name = name.strip_prefix(&full).unwrap_or(name).to_string();
            if renamed.contains_key(&new_name) {
                return Err(RegistryError::WouldCollide(new_name));
            }
            renamed.insert(new_name.clone(), tool.clone().with_name(new_name));
        }
        self.tools = renamed;
        self.refresh_namespaces();
        Ok(())
    }

    /// One rendered schema per tool, in `list_tools` order.
    pub fn get_tools_json(&self, format: ApiFormat) -> Result<Value, RegistryError> {
        self.get_tools_json_with(format, &self.naming)
    }

    pub fn get_tools_json_with(&self, format: ApiFormat, constraint: &NameConstraint) -> Result<Value, RegistryError> {
        let mut out = Vec::with_capacity(self.tools.len());
        for name in self.list_tools(None, None) {
            out.push(render_schema_with(&self.tools[&name], format, self.separator, constraint)?);
        }
        Ok(Value::Array(out))
    }

    /// Checks referential integrity and that the namespace set matches the
    /// tool names.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (key, tool) in &self.tools {
            if key != tool.name() {
                return Err(format!("key {key:?} maps to tool named {:?}", tool.name()));
            }
        }
        let expected: BTreeSet<String> = self
            .tools
            .keys()
            .filter_map(|n| n.split_once(self.separator).map(|(p, _)| p.to_string()))
            .collect();
        if expected != self.sub_namespaces {
            return Err(format!("namespaces {:?} != derived {:?}", self.sub_namespaces, expected));
        }
        Ok(())
    }

    /// Lightweight liveness probe for external-protocol tools: reports
    /// `(name, problem)` for tools whose backing source cannot be reached.
    pub fn health_check(&self) -> Vec<(String, String)> {
        let mut seen: Vec<&Source> = Vec::new();
        let mut problems = Vec::new();
        for name in self.list_tools(None, None) {
            let Some(replica) = self.tools[&name].replica() else { continue };
            if seen.contains(&&replica.source) {
                continue;
            }
            seen.push(&replica.source);
            if let Err(e) = replica.source.probe() {
                problems.push((name, e));
            }
        }
        problems
    }

    pub fn execution_mode(&self) -> ExecutionMode {
        self.executor.mode()
    }

    /// Sets the mode used by subsequent batches that do not override it.
    pub fn set_execution_mode(&self, mode: ExecutionMode) {
        self.executor.set_mode(mode);
    }

    /// Executes a batch from synchronous code. Safe to call from inside an
    /// async context.
    pub fn execute_tool_calls(&self, calls: &[ToolCall], mode: Option<ExecutionMode>) -> Vec<ToolCallResult> {
        self.executor.execute_blocking(self, calls, mode)
    }

    pub async fn execute_tool_calls_async(
        &self,
        calls: &[ToolCall],
        mode: Option<ExecutionMode>,
    ) -> Vec<ToolCallResult> {
        self.executor.execute(self, calls, mode).await
    }
}
