//! Length-prefixed binary frames.
//!
//! ```text
//! offset 0  magic    4 bytes  "MASM"
//! offset 4  version  1 byte   1
//! offset 5  kind     1 byte   payload kind (1..=4) or control kind (>= 0x10)
//! offset 6  length   u32 BE   body length
//! offset 10 body     length bytes
//! ```
//!
//! Message bodies use a fixed field order, all integers and floats big-endian:
//! `sender u32 | recipient tag u8 (0 agent, 1 broadcast) | recipient u32 |
//! seq u64 | sim_time f64 | payload`. Vectors and strings are prefixed by a
//! u32 element or byte count.

use thiserror::Error;

use super::message::{Message, Payload, Recipient, TaskAction, TaskMessage};
use crate::agent::{AwarenessVector, IntentSample, KnowledgeValue};

pub const MAGIC: [u8; 4] = *b"MASM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    /// The buffer holds a frame prefix; `needed` more bytes complete it.
    #[error("incomplete frame: {needed} more bytes needed")]
    Incomplete { needed: usize },
    #[error("corrupt stream: bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown frame kind {0:#04x}")]
    UnknownKind(u8),
    #[error("malformed body: {0}")]
    Malformed(String),
}

/// Raw frame: kind byte plus body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub body: Vec<u8>,
}

pub fn encode_frame(kind: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Decodes one frame from the front of `buf`, returning it and the number of
/// bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(Frame, usize), CodecError> {
    if buf.len() >= 4 && buf[..4] != MAGIC {
        return Err(CodecError::BadMagic(buf[..4].try_into().expect("4 bytes")));
    }
    if buf.len() < HEADER_LEN {
        if buf.iter().zip(MAGIC).any(|(a, b)| *a != b) {
            let mut m = [0; 4];
            m[..buf.len().min(4)].copy_from_slice(&buf[..buf.len().min(4)]);
            return Err(CodecError::BadMagic(m));
        }
        return Err(CodecError::Incomplete { needed: HEADER_LEN - buf.len() });
    }
    if buf[4] != VERSION {
        return Err(CodecError::UnsupportedVersion(buf[4]));
    }
    let len = u32::from_be_bytes(buf[6..10].try_into().expect("4 bytes")) as usize;
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(CodecError::Incomplete { needed: total - buf.len() });
    }
    Ok((Frame { kind: buf[5], body: buf[HEADER_LEN..total].to_vec() }, total))
}

pub fn encode(msg: &Message) -> Vec<u8> {
    encode_frame(msg.payload.kind(), &encode_body(msg))
}

/// Decodes one message frame from the front of `buf`.
pub fn decode(buf: &[u8]) -> Result<(Message, usize), CodecError> {
    let (frame, used) = decode_frame(buf)?;
    Ok((decode_message(&frame)?, used))
}

pub fn decode_message(frame: &Frame) -> Result<Message, CodecError> {
    let mut r = Reader { buf: &frame.body, pos: 0 };
    let sender = r.u32()?;
    let tag = r.u8()?;
    let id = r.u32()?;
    let recipient = match tag {
        0 => Recipient::Agent(id),
        1 => Recipient::Broadcast,
        t => return Err(CodecError::Malformed(format!("recipient tag {t}"))),
    };
    let seq = r.u64()?;
    let sim_time = r.f64()?;
    let payload = match frame.kind {
        1 => Payload::Awareness(read_awareness(&mut r)?),
        2 => {
            let n = r.u32()? as usize;
            let mut entries = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let key = r.string()?;
                entries.push((key, read_knowledge(&mut r)?));
            }
            Payload::Knowledge(entries)
        }
        3 => Payload::Epsilon(r.f64()?),
        4 => {
            let task_id = r.u64()?;
            let action = match r.u8()? {
                0 => TaskAction::Announce { spec: r.string()? },
                1 => TaskAction::Bid { risk: r.f64()? },
                2 => TaskAction::Award { winner: r.u32()? },
                t => return Err(CodecError::Malformed(format!("task action {t}"))),
            };
            Payload::Task(TaskMessage { task_id, action })
        }
        k => return Err(CodecError::UnknownKind(k)),
    };
    if r.pos != r.buf.len() {
        return Err(CodecError::Malformed(format!("{} trailing bytes", r.buf.len() - r.pos)));
    }
    Ok(Message { sender, recipient, seq, sim_time, payload })
}

/// Canonical body bytes of a message (no frame header).
pub fn encode_body(msg: &Message) -> Vec<u8> {
    let mut w = Vec::with_capacity(64);
    w.extend_from_slice(&msg.sender.to_be_bytes());
    match msg.recipient {
        Recipient::Agent(id) => {
            w.push(0);
            w.extend_from_slice(&id.to_be_bytes());
        }
        Recipient::Broadcast => {
            w.push(1);
            w.extend_from_slice(&0u32.to_be_bytes());
        }
    }
    w.extend_from_slice(&msg.seq.to_be_bytes());
    w.extend_from_slice(&msg.sim_time.to_be_bytes());
    match &msg.payload {
        Payload::Awareness(a) => write_awareness(&mut w, a),
        Payload::Knowledge(entries) => {
            put_len(&mut w, entries.len());
            for (k, v) in entries {
                put_str(&mut w, k);
                write_knowledge(&mut w, v);
            }
        }
        Payload::Epsilon(v) => w.extend_from_slice(&v.to_be_bytes()),
        Payload::Task(t) => {
            w.extend_from_slice(&t.task_id.to_be_bytes());
            match &t.action {
                TaskAction::Announce { spec } => {
                    w.push(0);
                    put_str(&mut w, spec);
                }
                TaskAction::Bid { risk } => {
                    w.push(1);
                    w.extend_from_slice(&risk.to_be_bytes());
                }
                TaskAction::Award { winner } => {
                    w.push(2);
                    w.extend_from_slice(&winner.to_be_bytes());
                }
            }
        }
    }
    w
}

fn put_len(w: &mut Vec<u8>, n: usize) {
    w.extend_from_slice(&(n as u32).to_be_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_bytes(w, s.as_bytes());
}

fn put_bytes(w: &mut Vec<u8>, b: &[u8]) {
    put_len(w, b.len());
    w.extend_from_slice(b);
}

fn put_vec(w: &mut Vec<u8>, v: &[f64]) {
    put_len(w, v.len());
    for x in v {
        w.extend_from_slice(&x.to_be_bytes());
    }
}

fn write_awareness(w: &mut Vec<u8>, a: &AwarenessVector) {
    put_vec(w, a.belief());
    put_len(w, a.intent().len());
    for s in a.intent() {
        w.extend_from_slice(&s.time.to_be_bytes());
        put_vec(w, &s.state);
        put_vec(w, &s.input);
    }
    put_vec(w, a.uncertainty());
    w.extend_from_slice(&a.risk().to_be_bytes());
}

fn write_knowledge(w: &mut Vec<u8>, v: &KnowledgeValue) {
    match v {
        KnowledgeValue::Scalar(x) => {
            w.push(0);
            w.extend_from_slice(&x.to_be_bytes());
        }
        KnowledgeValue::Vector(x) => {
            w.push(1);
            put_vec(w, x);
        }
        KnowledgeValue::Formula(s) => {
            w.push(2);
            put_str(w, s);
        }
        KnowledgeValue::Task(s) => {
            w.push(3);
            put_str(w, s);
        }
        KnowledgeValue::Text(s) => {
            w.push(4);
            put_str(w, s);
        }
        KnowledgeValue::Blob(b) => {
            w.push(5);
            put_bytes(w, b);
        }
    }
}

fn read_awareness(r: &mut Reader<'_>) -> Result<AwarenessVector, CodecError> {
    let belief = r.vec()?;
    let n = r.u32()? as usize;
    let mut intent = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        intent.push(IntentSample { time: r.f64()?, state: r.vec()?, input: r.vec()? });
    }
    let uncertainty = r.vec()?;
    let risk = r.f64()?;
    AwarenessVector::from_parts(belief, intent, uncertainty, risk).map_err(|e| CodecError::Malformed(e.to_string()))
}

fn read_knowledge(r: &mut Reader<'_>) -> Result<KnowledgeValue, CodecError> {
    Ok(match r.u8()? {
        0 => KnowledgeValue::Scalar(r.f64()?),
        1 => KnowledgeValue::Vector(r.vec()?),
        2 => KnowledgeValue::Formula(r.string()?),
        3 => KnowledgeValue::Task(r.string()?),
        4 => KnowledgeValue::Text(r.string()?),
        5 => KnowledgeValue::Blob(r.bytes()?.to_vec()),
        t => return Err(CodecError::Malformed(format!("knowledge tag {t}"))),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Malformed(format!("body truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|e| CodecError::Malformed(e.to_string()))
    }

    fn vec(&mut self) -> Result<Vec<f64>, CodecError> {
        let n = self.u32()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(CodecError::Malformed(format!("vector of {n} elements exceeds body")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(v: f64) -> Message {
        Message { sender: 3, recipient: Recipient::Agent(1), seq: 9, sim_time: 0.5, payload: Payload::Epsilon(v) }
    }

    #[test]
    fn round_trip_epsilon() {
        let m = eps(-0.25);
        let bytes = encode(&m);
        assert_eq!(decode(&bytes).unwrap(), (m, bytes.len()));
    }

    #[test]
    fn truncated_frame_needs_more() {
        let bytes = encode(&eps(1.0));
        for cut in 0..bytes.len() {
            match decode(&bytes[..cut]) {
                Err(CodecError::Incomplete { needed }) => assert!(needed > 0),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn flipped_magic_is_corrupt() {
        let mut bytes = encode(&eps(1.0));
        bytes[0] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(CodecError::BadMagic(_))));
        let mut bytes = encode(&eps(1.0));
        bytes[4] = 7;
        assert_eq!(decode(&bytes), Err(CodecError::UnsupportedVersion(7)));
    }

    #[test]
    fn frames_are_self_delimiting() {
        let mut stream = encode(&eps(1.0));
        stream.extend(encode(&eps(2.0)));
        let (a, used) = decode(&stream).unwrap();
        let (b, rest) = decode(&stream[used..]).unwrap();
        assert_eq!(used + rest, stream.len());
        assert_eq!((a.payload, b.payload), (Payload::Epsilon(1.0), Payload::Epsilon(2.0)));
    }
}
