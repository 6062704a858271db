//! Length-prefixed JSON framing used between the executor and its worker
//! processes.
//!
//! Every frame is a 4-byte big-endian unsigned length followed by that many
//! bytes of UTF-8 JSON. The exchange on a worker's stdin/stdout is:
//!
//! ```text
//! host   → {"manifest": <Manifest>}
//! worker → {"status":"ready","tools":[...]}   | {"status":"failed","error":"..."}
//! host   → {"id":"c1","name":"calculator.add","arguments":{"a":1,"b":2}}
//! worker → {"id":"c1","status":"ok","value":3}
//!        | {"id":"c1","status":"error","error":{"category":"permanent","message":"..."}}
//! ```
//!
//! A worker serves one request at a time; the host never pipelines.

use std::io::{self, Read, Write};

use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};

/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME: usize = 64 * 1024 * 1024;

fn too_large(len: usize) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit"))
}

pub fn encode(value: &Value) -> Vec<u8> {
    let body = serde_json::to_vec(value).expect("JSON values serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_frame<W: Write>(w: &mut W, value: &Value) -> io::Result<()> {
    w.write_all(&encode(value))?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Value>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(too_large(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub async fn write_frame_async<W: tokio::io::AsyncWrite + Unpin>(w: &mut W, value: &Value) -> io::Result<()> {
    w.write_all(&encode(value)).await?;
    w.flush().await
}

pub async fn read_frame_async<R: tokio::io::AsyncRead + Unpin>(r: &mut R) -> io::Result<Option<Value>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(too_large(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).await?;
    serde_json::from_slice(&body).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
