//! Denoiser served by a child process over the PNPD protocol.

use std::io::{BufReader, BufWriter};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::RngCore;

use crate::denoiser::{check_run_bounds, StochasticDenoiser};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::protocol::{self, ProtocolError, Request, Response};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

struct Session {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    responses: Receiver<std::result::Result<Response, ProtocolError>>,
}

impl Drop for Session {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved server exit on its own
        self.stdin.take();
        if let Ok(None) = self.child.try_wait() {
            thread::sleep(Duration::from_millis(20));
            if let Ok(None) = self.child.try_wait() {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// One child process, one request in flight at a time.
pub struct ExternalDenoiser {
    session: Mutex<Session>,
    steps: usize,
    timeout: Duration,
    command: String,
}

impl ExternalDenoiser {
    /// Starts `command[0]` with the remaining entries as arguments.
    pub fn spawn(command: &[String], steps: usize, timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Parameter("external denoiser command is empty".into()))?;
        let display = command.join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ProtocolError::Spawn {
                command: display.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");

        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("pnpd-reader".into())
            .spawn(move || {
                let mut reader = BufReader::new(stdout);
                loop {
                    let frame = protocol::read_response(&mut reader);
                    let stop = frame.is_err();
                    if tx.send(frame).is_err() || stop {
                        break;
                    }
                }
            })?;

        Ok(Self {
            session: Mutex::new(Session {
                child,
                stdin: Some(BufWriter::new(stdin)),
                responses: rx,
            }),
            steps,
            timeout,
            command: display,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends one raw request and waits for the matching response payload.
    pub fn request(&self, req: &Request) -> std::result::Result<Vec<f32>, ProtocolError> {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let stdin = session.stdin.as_mut().ok_or(ProtocolError::Closed)?;
        protocol::write_request(stdin, req)?;
        let frame = match session.responses.recv_timeout(self.timeout) {
            Ok(frame) => frame?,
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
        };
        match frame {
            Response::Ok { dims, payload } => {
                if dims != req.dims {
                    return Err(ProtocolError::DimsMismatch {
                        expected: req.dims,
                        actual: dims,
                    });
                }
                Ok(payload)
            }
            Response::Error(msg) => Err(ProtocolError::Remote(msg)),
        }
    }
}

impl StochasticDenoiser for ExternalDenoiser {
    fn run_reverse(
        &self,
        u_start: &Image,
        t_start: usize,
        t_stop: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Image> {
        check_run_bounds(t_start, t_stop, self.steps)?;
        if t_start == t_stop {
            return Ok(u_start.clone());
        }
        let shape = u_start.shape();
        let req = Request {
            t_start: t_start as u32,
            t_stop: t_stop as u32,
            dims: [shape.channels as u32, shape.height as u32, shape.width as u32],
            payload: u_start.as_slice().iter().map(|&v| v as f32).collect(),
        };
        let payload = self.request(&req)?;
        let data = payload.into_iter().map(f64::from).collect();
        Image::from_vec(Shape::new(shape.channels, shape.height, shape.width), data).map_err(|e| {
            Error::Contract(format!("external denoiser returned an invalid image: {e}"))
        })
    }
}
