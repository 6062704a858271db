//! Protocol-agnostic tool management for LLM function calling.
//!
//! Tools from native closures, toolsets, OpenAPI services and MCP servers are
//! registered into a [`ToolRegistry`], described with one internal JSON Schema
//! dialect, rendered for the OpenAI wire formats, and executed concurrently by
//! the registry's executor in either shared or isolated mode.
//!
//! ```text
//!   registration   register / register_from_toolset / register_from_openapi / register_from_mcp
//!        │
//!   ToolRegistry   name → Tool, namespaces, merge / spinoff / reduce_namespace
//!        │
//!   executor       validate → dispatch (shared pool | worker processes) → retry → ToolCallResult
//!        │
//!   compat         provider payload ⇄ ToolCall, results → tool messages
//! ```

pub mod bench;
pub mod cli;
pub mod compat;
pub mod executor;
pub mod fixtures;
pub mod hub;
pub mod manifest;
pub mod mcp;
pub mod model;
pub mod openapi;
pub mod registry;
pub mod runtime;
pub mod schema;

pub use compat::{convert_tool_calls, recover_assistant_message, recover_tool_message, ChatMessage};
pub use executor::{ExecutorConfig, RetryPolicy};
pub use manifest::{Manifest, Namespace, Source};
pub use model::{
    render_tool_name, ApiFormat, CallError, ErrorCategory, ExecutionMode, Invoker, NameConstraint,
    NameError, Origin, ParamKind, ParamSpec, SignatureDescriptor, Tool, ToolCall, ToolCallResult,
    ToolError, ToolErrorKind,
};
pub use registry::{ConflictPolicy, RegistryError, ToolRegistry, Toolset};
pub use schema::{derive_schema, render_schema, validate_arguments, JsonSchema, SchemaError, ValidatedArguments};
