//! PNPD server that answers every request with its own payload.
//!
//! `--bad-magic` corrupts the magic of every response frame, for exercising
//! client-side protocol errors.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;

use pnp_sgs::protocol::{self, Response};

fn main() -> ExitCode {
    let bad_magic = std::env::args().skip(1).any(|a| a == "--bad-magic");
    let mut reader = BufReader::new(io::stdin().lock());
    let mut writer = BufWriter::new(io::stdout().lock());

    let result = if bad_magic {
        loop {
            match protocol::read_request(&mut reader) {
                Ok(Some(req)) => {
                    let mut frame = protocol::encode_response(&Response::Ok {
                        dims: req.dims,
                        payload: req.payload,
                    });
                    frame[..4].copy_from_slice(b"XXXX");
                    if writer.write_all(&frame).and_then(|_| writer.flush()).is_err() {
                        break Ok(());
                    }
                }
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            }
        }
    } else {
        protocol::serve(&mut reader, &mut writer, |req| Ok(req.payload.clone()))
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnpd-identity: {e}");
            ExitCode::FAILURE
        }
    }
}
