//! PNPD framing for out-of-process denoisers.
//!
//! All integers are little-endian `u32`, payloads are little-endian `f32` in
//! C-order over `(C, H, W)`.
//!
//! ```text
//! request : "PNPD" | version=1 | type=1 | t_start | t_stop | ndim=3 | C | H | W | payload
//! ok      : "PNPD" | version=1 | type=2 | ndim=3 | C | H | W | payload
//! error   : "PNPD" | version=1 | type=3 | err_len | utf-8 message
//! ```
//!
//! The server runs its own reverse steps from `t_start` down to `t_stop` and
//! answers with the resulting image.

use std::io::{self, Read, Write};
use std::time::Duration;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PNPD";
pub const VERSION: u32 = 1;
pub const MSG_REQUEST: u32 = 1;
pub const MSG_OK: u32 = 2;
pub const MSG_ERROR: u32 = 3;

const MAX_ELEMENTS: usize = 1 << 28;
const MAX_ERROR_LEN: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad frame magic {0:02x?}, expected \"PNPD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected message type {0}")]
    UnexpectedMessage(u32),
    #[error("unsupported tensor rank {0}, expected 3")]
    BadRank(u32),
    #[error("tensor dims {0:?} exceed the frame size limit")]
    Oversized([u32; 3]),
    #[error("response dims {actual:?} differ from request dims {expected:?}")]
    DimsMismatch { expected: [u32; 3], actual: [u32; 3] },
    #[error("error message is not valid UTF-8")]
    BadUtf8,
    #[error("denoiser server reported: {0}")]
    Remote(String),
    #[error("denoiser server closed the stream")]
    Closed,
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("failed to start denoiser server `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("transport error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub t_start: u32,
    pub t_stop: u32,
    /// `(C, H, W)`.
    pub dims: [u32; 3],
    pub payload: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Ok { dims: [u32; 3], payload: Vec<f32> },
    Error(String),
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, dims: [u32; 3], payload: &[f32]) {
    put_u32(buf, 3);
    for d in dims {
        put_u32(buf, d);
    }
    buf.reserve(payload.len() * 4);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn header(msg_type: u32) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, msg_type);
    buf
}

pub fn encode_request(req: &Request) -> Vec<u8> {
    let mut buf = header(MSG_REQUEST);
    put_u32(&mut buf, req.t_start);
    put_u32(&mut buf, req.t_stop);
    put_tensor(&mut buf, req.dims, &req.payload);
    buf
}

pub fn encode_response(resp: &Response) -> Vec<u8> {
    match resp {
        Response::Ok { dims, payload } => {
            let mut buf = header(MSG_OK);
            put_tensor(&mut buf, *dims, payload);
            buf
        }
        Response::Error(msg) => {
            let mut buf = header(MSG_ERROR);
            put_u32(&mut buf, msg.len() as u32);
            buf.extend_from_slice(msg.as_bytes());
            buf
        }
    }
}

pub fn write_request<W: Write>(w: &mut W, req: &Request) -> io::Result<()> {
    w.write_all(&encode_request(req))?;
    w.flush()
}

pub fn write_response<W: Write>(w: &mut W, resp: &Response) -> io::Result<()> {
    w.write_all(&encode_response(resp))?;
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ProtocolError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ProtocolError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Closed,
        _ => ProtocolError::Io(e),
    })
}

/// Reads magic, version and message type. `Ok(None)` on a clean end of
/// stream before the first byte.
fn read_header<R: Read>(r: &mut R) -> Result<Option<u32>, ProtocolError> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut magic[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Closed),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ProtocolError::UnsupportedVersion(version));
    }
    Ok(Some(read_u32(r)?))
}

fn read_tensor<R: Read>(r: &mut R) -> Result<([u32; 3], Vec<f32>), ProtocolError> {
    let ndim = read_u32(r)?;
    if ndim != 3 {
        return Err(ProtocolError::BadRank(ndim));
    }
    let dims = [read_u32(r)?, read_u32(r)?, read_u32(r)?];
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(ProtocolError::Oversized(dims))?;
    let mut bytes = vec![0u8; count * 4];
    read_exact(r, &mut bytes)?;
    let payload = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims, payload))
}

/// Reads one request frame; `Ok(None)` when the client closed the stream.
pub fn read_request<R: Read>(r: &mut R) -> Result<Option<Request>, ProtocolError> {
    let Some(msg_type) = read_header(r)? else {
        return Ok(None);
    };
    if msg_type != MSG_REQUEST {
        return Err(ProtocolError::UnexpectedMessage(msg_type));
    }
    let t_start = read_u32(r)?;
    let t_stop = read_u32(r)?;
    let (dims, payload) = read_tensor(r)?;
    Ok(Some(Request {
        t_start,
        t_stop,
        dims,
        payload,
    }))
}

pub fn read_response<R: Read>(r: &mut R) -> Result<Response, ProtocolError> {
    let msg_type = read_header(r)?.ok_or(ProtocolError::Closed)?;
    match msg_type {
        MSG_OK => {
            let (dims, payload) = read_tensor(r)?;
            Ok(Response::Ok { dims, payload })
        }
        MSG_ERROR => {
            let len = read_u32(r)? as usize;
            if len > MAX_ERROR_LEN {
                return Err(ProtocolError::Oversized([len as u32, 0, 0]));
            }
            let mut bytes = vec![0u8; len];
            read_exact(r, &mut bytes)?;
            String::from_utf8(bytes)
                .map(Response::Error)
                .map_err(|_| ProtocolError::BadUtf8)
        }
        other => Err(ProtocolError::UnexpectedMessage(other)),
    }
}

/// Serves requests until the client closes the stream.
///
/// `handler` maps a request to the output payload or an error message that is
/// sent back as an error frame. Malformed request frames end the loop with
/// an error after replying with an error frame.
pub fn serve<R, W, F>(reader: &mut R, writer: &mut W, mut handler: F) -> Result<(), ProtocolError>
where
    R: Read,
    W: Write,
    F: FnMut(&Request) -> Result<Vec<f32>, String>,
{
    loop {
        let req = match read_request(reader) {
            Ok(Some(req)) => req,
            Ok(None) => return Ok(()),
            Err(e) => {
                let _ = write_response(writer, &Response::Error(e.to_string()));
                return Err(e);
            }
        };
        let resp = match handler(&req) {
            Ok(payload) => Response::Ok {
                dims: req.dims,
                payload,
            },
            Err(msg) => Response::Error(msg),
        };
        write_response(writer, &resp)?;
    }
}
