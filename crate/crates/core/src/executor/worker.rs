//! The worker side of isolated execution. See [`super::frame`] for the wire
//! format.

use std::io::{self, Read, Write};

use serde_json::{json, Value};

use super::frame::{read_frame, write_frame};
use crate::manifest::Manifest;
use crate::model::{ToolError, ToolErrorKind};
use crate::schema::ValidatedArguments;

/// Serves requests until `input` reaches end of stream.
pub fn serve<R: Read, W: Write>(mut input: R, mut output: W) -> io::Result<()> {
    let Some(hello) = read_frame(&mut input)? else {
        return Ok(());
    };
    let manifest = hello
        .get("manifest")
        .ok_or_else(|| "handshake frame has no manifest".to_string())
        .and_then(|m| serde_json::from_value::<Manifest>(m.clone()).map_err(|e| e.to_string()))
        .and_then(|m| m.build().map_err(|e| e.to_string()));
    let registry = match manifest {
        Ok(r) => r,
        Err(error) => {
            write_frame(&mut output, &json!({"status": "failed", "error": error}))?;
            return Ok(());
        }
    };
    let mut names: Vec<&str> = registry.tools().map(|t| t.name()).collect();
    names.sort_unstable();
    write_frame(&mut output, &json!({"status": "ready", "tools": names}))?;

    while let Some(request) = read_frame(&mut input)? {
        let id = request.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
        let name = request.get("name").and_then(Value::as_str).unwrap_or_default();
        let arguments = request.get("arguments").cloned().unwrap_or_else(|| json!({}));
        let reply = match registry.get_tool(name) {
            Err(_) => super::error_frame(
                &id,
                &ToolError::new(ToolErrorKind::UnknownTool, format!("unknown tool: {name}")),
                &[],
            ),
            Ok(tool) => {
                let outcome = ValidatedArguments::check(tool.parameters(), arguments)
                    .map_err(|e| ToolError::new(ToolErrorKind::InvalidArguments, e.to_string()))
                    .and_then(|args| super::run_single(tool, &args));
                match outcome {
                    Ok(value) => json!({"id": id, "status": "ok", "value": value}),
                    Err(e) => super::error_frame(&id, &e, tool.redactions()),
                }
            }
        };
        write_frame(&mut output, &reply)?;
    }
    Ok(())
}
