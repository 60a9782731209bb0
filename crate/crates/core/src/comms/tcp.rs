//! TCP transport: a broker server wrapping an [`InProcessHub`]
//! and a client speaking request/response frames over one shared socket.
//!
//! Control frames reuse the wire header with kinds from `0x10` upward:
//! register, send, drain and close requests, answered by ok, error or batch
//! frames. A batch body is a u32 count followed by complete message frames.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use tracing::{debug, warn};

use super::codec::{decode, decode_frame, encode, encode_frame, CodecError, Frame, HEADER_LEN};
use super::hub::{CommError, HubConfig, InProcessHub, Transport};
use super::message::Message;
use crate::agent::AgentId;

const REGISTER: u8 = 0x10;
const SEND: u8 = 0x11;
const DRAIN: u8 = 0x12;
const CLOSE: u8 = 0x13;
const OK: u8 = 0x20;
const ERR: u8 = 0x21;
const BATCH: u8 = 0x22;

fn read_frame(stream: &mut TcpStream) -> std::io::Result<Frame> {
    let mut header = [0u8; HEADER_LEN];
    stream.read_exact(&mut header)?;
    let body_len = match decode_frame(&header) {
        Err(CodecError::Incomplete { needed }) => needed,
        Ok(_) => 0,
        Err(e) => return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
    };
    let mut buf = header.to_vec();
    buf.resize(HEADER_LEN + body_len, 0);
    stream.read_exact(&mut buf[HEADER_LEN..])?;
    decode_frame(&buf)
        .map(|(f, _)| f)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn error_body(e: &CommError) -> Vec<u8> {
    let (code, a, b) = match e {
        CommError::Closed => (1u8, 0u64, 0u64),
        CommError::Oversized { size, max } => (2, *size as u64, *max as u64),
        CommError::UnknownReceiver(id) => (3, u64::from(*id), 0),
        _ => (4, 0, 0),
    };
    let text = e.to_string();
    let mut out = vec![code];
    out.extend_from_slice(&a.to_be_bytes());
    out.extend_from_slice(&b.to_be_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

fn parse_error(body: &[u8]) -> CommError {
    if body.len() < 17 {
        return CommError::Rejected("short error frame".into());
    }
    let a = u64::from_be_bytes(body[1..9].try_into().expect("8 bytes"));
    let b = u64::from_be_bytes(body[9..17].try_into().expect("8 bytes"));
    match body[0] {
        1 => CommError::Closed,
        2 => CommError::Oversized { size: a as usize, max: b as usize },
        3 => CommError::UnknownReceiver(a as AgentId),
        _ => CommError::Rejected(String::from_utf8_lossy(&body[17..]).into_owned()),
    }
}

fn id_from(body: &[u8]) -> Result<AgentId, CommError> {
    body.try_into()
        .map(u32::from_be_bytes)
        .map_err(|_| CommError::Rejected("expected a 4-byte agent id".into()))
}

/// Broker listening on a TCP socket; every connection may register, send
/// and drain on the shared hub.
pub struct TcpBroker {
    addr: SocketAddr,
    hub: Arc<InProcessHub>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl TcpBroker {
    pub fn bind(addr: impl ToSocketAddrs, config: HubConfig) -> Result<Self, CommError> {
        let listener = TcpListener::bind(addr).map_err(|e| CommError::Io(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| CommError::Io(e.to_string()))?;
        let hub = Arc::new(InProcessHub::new(config));
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let hub = hub.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(stream) => {
                            let hub = hub.clone();
                            std::thread::spawn(move || serve(stream, hub));
                        }
                        Err(e) => warn!(error = %e, "broker accept failed"),
                    }
                }
            })
        };
        debug!(%addr, "broker listening");
        Ok(Self { addr, hub, stop, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn hub(&self) -> &Arc<InProcessHub> {
        &self.hub
    }

    pub fn shutdown(&mut self) {
        if let Some(handle) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Unblock the accept loop.
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

impl Drop for TcpBroker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve(mut stream: TcpStream, hub: Arc<InProcessHub>) {
    let _ = stream.set_nodelay(true);
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(_) => return,
        };
        let reply = match frame.kind {
            REGISTER => id_from(&frame.body).and_then(|id| hub.register(id)).map(|_| encode_frame(OK, &[])),
            SEND => decode(&frame.body)
                .map_err(CommError::from)
                .and_then(|(m, _)| hub.send(m))
                .map(|_| encode_frame(OK, &[])),
            DRAIN => id_from(&frame.body).and_then(|id| hub.receive_pending(id)).map(|batch| {
                let mut body = (batch.len() as u32).to_be_bytes().to_vec();
                for m in &batch {
                    body.extend(encode(m));
                }
                encode_frame(BATCH, &body)
            }),
            CLOSE => {
                hub.close();
                Ok(encode_frame(OK, &[]))
            }
            k => Err(CommError::Codec(CodecError::UnknownKind(k))),
        };
        let bytes = reply.unwrap_or_else(|e| encode_frame(ERR, &error_body(&e)));
        if stream.write_all(&bytes).is_err() {
            return;
        }
    }
}

/// Client side of the broker protocol.
#[derive(Debug)]
pub struct TcpTransport {
    stream: Mutex<Option<TcpStream>>,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, CommError> {
        let stream = TcpStream::connect(addr).map_err(|e| CommError::Io(e.to_string()))?;
        let _ = stream.set_nodelay(true);
        Ok(Self { stream: Mutex::new(Some(stream)) })
    }

    fn request(&self, kind: u8, body: &[u8]) -> Result<Frame, CommError> {
        let mut guard = self.stream.lock().unwrap_or_else(|e| e.into_inner());
        let stream = guard.as_mut().ok_or(CommError::Closed)?;
        stream.write_all(&encode_frame(kind, body)).map_err(|e| CommError::Io(e.to_string()))?;
        let frame = read_frame(stream).map_err(|e| CommError::Io(e.to_string()))?;
        match frame.kind {
            ERR => Err(parse_error(&frame.body)),
            _ => Ok(frame),
        }
    }
}

impl Transport for TcpTransport {
    fn register(&self, id: AgentId) -> Result<(), CommError> {
        self.request(REGISTER, &id.to_be_bytes()).map(|_| ())
    }

    fn send(&self, message: Message) -> Result<(), CommError> {
        self.request(SEND, &encode(&message)).map(|_| ())
    }

    fn receive_pending(&self, receiver: AgentId) -> Result<Vec<Message>, CommError> {
        let frame = self.request(DRAIN, &receiver.to_be_bytes())?;
        if frame.kind != BATCH || frame.body.len() < 4 {
            return Err(CommError::Rejected(format!("unexpected reply kind {:#04x}", frame.kind)));
        }
        let count = u32::from_be_bytes(frame.body[..4].try_into().expect("4 bytes")) as usize;
        let mut rest = &frame.body[4..];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let (m, used) = decode(rest)?;
            out.push(m);
            rest = &rest[used..];
        }
        Ok(out)
    }

    /// Drops the socket; later calls fail with [`CommError::Closed`] without
    /// writing anything. The broker's hub stays open for other clients.
    fn close(&self) {
        let mut guard = self.stream.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = guard.take() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}
