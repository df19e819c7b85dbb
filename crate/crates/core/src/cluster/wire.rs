use std::io::{self, Read, Write};

use super::{ClusterError, Result};
use crate::numerics::DenseMatrix;

pub const WIRE_MAGIC: [u8; 4] = *b"CDO1";
pub const HEADER_LEN: usize = 17;
pub const MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    LoadPartition = 1,
    Broadcast = 2,
    GradientReply = 3,
    LineSearchRequest = 4,
    LineSearchReply = 5,
    Shutdown = 6,
    Ack = 7,
    Error = 8,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::LoadPartition,
            2 => Self::Broadcast,
            3 => Self::GradientReply,
            4 => Self::LineSearchRequest,
            5 => Self::LineSearchReply,
            6 => Self::Shutdown,
            7 => Self::Ack,
            8 => Self::Error,
            other => return Err(ClusterError::UnknownType(other)),
        })
    }
}

/// A raw frame: header fields plus undecoded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub round: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    LoadPartition {
        node_id: u32,
        nodes: u32,
        x: DenseMatrix,
        y: Vec<f64>,
        seed: u64,
        delay_spec: String,
    },
    Broadcast { round: u32, w: Vec<f64> },
    GradientReply { round: u32, node_id: u32, g: Vec<f64> },
    LineSearchRequest { round: u32, d: Vec<f64> },
    LineSearchReply { round: u32, node_id: u32, value: f64 },
    Shutdown,
    Ack { round: u32, node_id: u32 },
    Error { round: u32, message: String },
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::LoadPartition { .. } => MessageType::LoadPartition,
            Message::Broadcast { .. } => MessageType::Broadcast,
            Message::GradientReply { .. } => MessageType::GradientReply,
            Message::LineSearchRequest { .. } => MessageType::LineSearchRequest,
            Message::LineSearchReply { .. } => MessageType::LineSearchReply,
            Message::Shutdown => MessageType::Shutdown,
            Message::Ack { .. } => MessageType::Ack,
            Message::Error { .. } => MessageType::Error,
        }
    }

    pub fn round(&self) -> u32 {
        match self {
            Message::Broadcast { round, .. }
            | Message::GradientReply { round, .. }
            | Message::LineSearchRequest { round, .. }
            | Message::LineSearchReply { round, .. }
            | Message::Ack { round, .. }
            | Message::Error { round, .. } => *round,
            Message::LoadPartition { .. } | Message::Shutdown => 0,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut p = Vec::new();
        match self {
            Message::LoadPartition {
                node_id,
                nodes,
                x,
                y,
                seed,
                delay_spec,
            } => {
                p.extend_from_slice(&node_id.to_le_bytes());
                p.extend_from_slice(&nodes.to_le_bytes());
                p.extend_from_slice(&(x.rows() as u64).to_le_bytes());
                p.extend_from_slice(&(x.cols() as u64).to_le_bytes());
                put_f64s(&mut p, x.data());
                put_f64s(&mut p, y);
                p.extend_from_slice(&seed.to_le_bytes());
                p.extend_from_slice(&(delay_spec.len() as u32).to_le_bytes());
                p.extend_from_slice(delay_spec.as_bytes());
            }
            Message::Broadcast { w: v, .. } | Message::LineSearchRequest { d: v, .. } => put_f64s(&mut p, v),
            Message::GradientReply { node_id, g, .. } => {
                p.extend_from_slice(&node_id.to_le_bytes());
                put_f64s(&mut p, g);
            }
            Message::LineSearchReply { node_id, value, .. } => {
                p.extend_from_slice(&node_id.to_le_bytes());
                p.extend_from_slice(&value.to_le_bytes());
            }
            Message::Shutdown => {}
            Message::Ack { node_id, .. } => p.extend_from_slice(&node_id.to_le_bytes()),
            Message::Error { message, .. } => p.extend_from_slice(message.as_bytes()),
        }
        Frame {
            msg_type: self.msg_type(),
            round: self.round(),
            payload: p,
        }
    }

    pub fn from_frame(frame: &Frame) -> Result<Self> {
        let mut c = Cursor::new(&frame.payload);
        let round = frame.round;
        let msg = match frame.msg_type {
            MessageType::LoadPartition => {
                let node_id = c.u32()?;
                let nodes = c.u32()?;
                let rows = c.u64()?;
                let cols = c.u64()?;
                let count = rows
                    .checked_mul(cols)
                    .filter(|&n| n <= MAX_PAYLOAD / 8)
                    .ok_or_else(|| ClusterError::Malformed("partition too large".into()))?;
                let data = c.f64s(count as usize)?;
                let x = DenseMatrix::new(rows as usize, cols as usize, data)
                    .map_err(|e| ClusterError::Malformed(e.to_string()))?;
                let y = c.f64s(rows as usize)?;
                let seed = c.u64()?;
                let len = c.u32()? as usize;
                let delay_spec = String::from_utf8(c.bytes(len)?.to_vec())
                    .map_err(|_| ClusterError::Malformed("delay spec is not UTF-8".into()))?;
                Message::LoadPartition {
                    node_id,
                    nodes,
                    x,
                    y,
                    seed,
                    delay_spec,
                }
            }
            MessageType::Broadcast => Message::Broadcast {
                round,
                w: c.rest_f64s()?,
            },
            MessageType::LineSearchRequest => Message::LineSearchRequest {
                round,
                d: c.rest_f64s()?,
            },
            MessageType::GradientReply => Message::GradientReply {
                round,
                node_id: c.u32()?,
                g: c.rest_f64s()?,
            },
            MessageType::LineSearchReply => Message::LineSearchReply {
                round,
                node_id: c.u32()?,
                value: c.f64()?,
            },
            MessageType::Shutdown => Message::Shutdown,
            MessageType::Ack => Message::Ack {
                round,
                node_id: c.u32()?,
            },
            MessageType::Error => Message::Error {
                round,
                message: String::from_utf8_lossy(c.bytes(frame.payload.len())?).into_owned(),
            },
        };
        if c.pos != frame.payload.len() {
            return Err(ClusterError::Malformed(format!(
                "{} trailing payload bytes",
                frame.payload.len() - c.pos
            )));
        }
        Ok(msg)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ClusterError::Malformed("payload shorter than declared fields".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n.checked_mul(8).ok_or_else(|| ClusterError::Malformed("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn rest_f64s(&mut self) -> Result<Vec<f64>> {
        let rest = self.buf.len() - self.pos;
        if !rest.is_multiple_of(8) {
            return Err(ClusterError::Malformed("float array length not a multiple of 8".into()));
        }
        self.f64s(rest / 8)
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.round.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

fn parse_header(h: &[u8]) -> Result<(MessageType, u32, u64)> {
    if h[..4] != WIRE_MAGIC {
        return Err(ClusterError::BadMagic);
    }
    let msg_type = MessageType::from_byte(h[4])?;
    let round = u32::from_le_bytes(h[5..9].try_into().expect("4 bytes"));
    let len = u64::from_le_bytes(h[9..17].try_into().expect("8 bytes"));
    if len > MAX_PAYLOAD {
        return Err(ClusterError::Oversize(len));
    }
    Ok((msg_type, round, len))
}

/// Decodes one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < HEADER_LEN {
        return Err(ClusterError::Truncated);
    }
    let (msg_type, round, len) = parse_header(&bytes[..HEADER_LEN])?;
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < len {
        return Err(ClusterError::Truncated);
    }
    if body.len() as u64 > len {
        return Err(ClusterError::Malformed("bytes after frame end".into()));
    }
    Ok(Frame {
        msg_type,
        round,
        payload: body.to_vec(),
    })
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    encode_frame(&msg.to_frame())
}

pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    Message::from_frame(&decode_frame(bytes)?)
}

fn map_eof(e: io::Error) -> ClusterError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        ClusterError::Truncated
    } else {
        ClusterError::Io(e)
    }
}

/// Reads one message; `Ok(None)` on a clean end of stream before a header.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ClusterError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ClusterError::Io(e)),
        }
    }
    let (msg_type, round, len) = parse_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(map_eof)?;
    Message::from_frame(&Frame {
        msg_type,
        round,
        payload,
    })
    .map(Some)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn broadcast_layout() {
        let bytes = encode_message(&Message::Broadcast { round: 1, w: vec![1.0] });
        assert_eq!(
            bytes,
            vec![
                0x43, 0x44, 0x4F, 0x31, 0x02, 0x01, 0x00, 0x00, 0x00, 0x08, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                0xF0, 0x3F
            ]
        );
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(matches!(decode_message(&[1, 2, 3]), Err(ClusterError::Truncated)));
        let mut bytes = encode_message(&Message::Shutdown);
        bytes[0] = b'X';
        assert!(matches!(decode_message(&bytes), Err(ClusterError::BadMagic)));
        let mut bytes = encode_message(&Message::Broadcast { round: 0, w: vec![1.0, 2.0] });
        bytes.pop();
        assert!(matches!(decode_message(&bytes), Err(ClusterError::Truncated)));
        let mut bytes = encode_message(&Message::Shutdown);
        bytes[9..17].copy_from_slice(&(MAX_PAYLOAD + 1).to_le_bytes());
        assert!(matches!(decode_message(&bytes), Err(ClusterError::Oversize(_))));
        let mut bytes = encode_message(&Message::Shutdown);
        bytes[4] = 9;
        assert!(matches!(decode_message(&bytes), Err(ClusterError::UnknownType(9))));
        let mut r: &[u8] = &[];
        assert!(read_message(&mut r).unwrap().is_none());
    }

    fn floats(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(any::<f64>().prop_filter("not NaN", |x| !x.is_nan()), 0..max)
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u32>(), any::<u32>(), 1usize..4, 1usize..4, any::<u64>(), "[a-z0-9:,.+]{0,12}", any::<u64>()).prop_map(
                |(node_id, nodes, rows, cols, seed, delay_spec, s)| {
                    let x = crate::numerics::gaussian_matrix(rows, cols, 1.0, s).unwrap();
                    let y = crate::numerics::gaussian_vector(rows, 1.0, s ^ 1).unwrap();
                    Message::LoadPartition { node_id, nodes, x, y, seed, delay_spec }
                }
            ),
            (any::<u32>(), floats(16)).prop_map(|(round, w)| Message::Broadcast { round, w }),
            (any::<u32>(), any::<u32>(), floats(16)).prop_map(|(round, node_id, g)| Message::GradientReply { round, node_id, g }),
            (any::<u32>(), floats(16)).prop_map(|(round, d)| Message::LineSearchRequest { round, d }),
            (any::<u32>(), any::<u32>(), -1e300f64..1e300).prop_map(|(round, node_id, value)| Message::LineSearchReply { round, node_id, value }),
            Just(Message::Shutdown),
            (any::<u32>(), any::<u32>()).prop_map(|(round, node_id)| Message::Ack { round, node_id }),
            (any::<u32>(), "[ -~]{0,40}").prop_map(|(round, message)| Message::Error { round, message }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn codec_round_trips(msg in message()) {
            let bytes = encode_message(&msg);
            prop_assert_eq!(decode_message(&bytes).unwrap(), msg.clone());
            let mut reader = bytes.as_slice();
            prop_assert_eq!(read_message(&mut reader).unwrap().unwrap(), msg);
        }
    }
}
