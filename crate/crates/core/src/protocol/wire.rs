//! Length-prefixed frames over a duplex byte stream.
//!
//! ```text
//! payload_len u32 | type u8 | session u64 | seq u64 | payload
//! ```
//! Little-endian throughout. Sequence numbers start at 0 and increase by
//! one per frame in each direction.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 4 + 1 + 8 + 8;
/// Frames above this size are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    PubKeys = 2,
    EncWeightsAck = 3,
    FwdOut = 4,
    BoundaryGrad = 5,
    RefreshReq = 6,
    RefreshResp = 7,
    EpochDone = 8,
    Shutdown = 9,
    Data = 10,
}

impl MsgType {
    pub fn from_u8(t: u8) -> Result<Self> {
        Ok(match t {
            1 => MsgType::Hello,
            2 => MsgType::PubKeys,
            3 => MsgType::EncWeightsAck,
            4 => MsgType::FwdOut,
            5 => MsgType::BoundaryGrad,
            6 => MsgType::RefreshReq,
            7 => MsgType::RefreshResp,
            8 => MsgType::EpochDone,
            9 => MsgType::Shutdown,
            10 => MsgType::Data,
            other => return Err(Error::Protocol(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MsgType,
    pub session: u64,
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.session.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Frame> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("frame payload of {len} bytes exceeds limit")));
        }
        let kind = MsgType::from_u8(header[4])?;
        let session = u64::from_le_bytes(header[5..13].try_into().unwrap());
        let seq = u64::from_le_bytes(header[13..21].try_into().unwrap());
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Frame { kind, session, seq, payload })
    }
}

/// A duplex frame carrier with one reader and one writer.
pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(TcpTransport { reader, writer: BufWriter::new(stream) })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.writer.write_all(&frame.encode())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        Frame::read_from(&mut self.reader)
    }
}

/// In-process transport; frames are passed as encoded bytes so both ends
/// exercise the same codec as TCP.
pub struct PipeTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn pipe() -> (PipeTransport, PipeTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (PipeTransport { tx: a_tx, rx: a_rx }, PipeTransport { tx: b_tx, rx: b_rx })
}

impl Transport for PipeTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.tx
            .send(frame.encode())
            .map_err(|_| Error::Protocol("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self.rx.recv().map_err(|_| Error::Protocol("peer hung up".into()))?;
        Frame::read_from(&mut bytes.as_slice())
    }
}

/// Byte and message counters of one side of a session.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

/// A transport bound to a session: stamps outgoing sequence numbers and
/// checks incoming ones.
pub struct Channel {
    transport: Box<dyn Transport>,
    session: u64,
    next_send: u64,
    next_recv: u64,
    pub stats: TrafficStats,
}

impl Channel {
    pub fn new(transport: Box<dyn Transport>, session: u64) -> Self {
        Channel { transport, session, next_send: 0, next_recv: 0, stats: TrafficStats::default() }
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn send(&mut self, kind: MsgType, payload: Vec<u8>) -> Result<()> {
        let frame = Frame { kind, session: self.session, seq: self.next_send, payload };
        self.transport.send(&frame)?;
        self.next_send += 1;
        self.stats.bytes_sent += (HEADER_LEN + frame.payload.len()) as u64;
        self.stats.frames_sent += 1;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Frame> {
        let frame = self.transport.recv()?;
        if frame.session != self.session {
            return Err(Error::Protocol(format!(
                "frame for session {} on session {}",
                frame.session, self.session
            )));
        }
        if frame.seq != self.next_recv {
            return Err(Error::Protocol(format!("expected sequence {}, got {}", self.next_recv, frame.seq)));
        }
        self.next_recv += 1;
        self.stats.bytes_received += (HEADER_LEN + frame.payload.len()) as u64;
        self.stats.frames_received += 1;
        Ok(frame)
    }

    /// Receives a frame of the given type. A `Shutdown` frame carrying a
    /// reason turns into an error.
    pub fn expect(&mut self, kind: MsgType) -> Result<Vec<u8>> {
        let frame = self.recv()?;
        if frame.kind == kind {
            return Ok(frame.payload);
        }
        if frame.kind == MsgType::Shutdown {
            return Err(Error::Protocol(format!(
                "peer aborted: {}",
                String::from_utf8_lossy(&frame.payload)
            )));
        }
        Err(Error::Protocol(format!("expected {kind:?}, got {:?}", frame.kind)))
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;

    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame { kind: MsgType::FwdOut, session: 0xABCD, seq: 7, payload: vec![1, 2, 3] };
        let bytes = f.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 3);
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(bytes[4], 4);
        assert_eq!(Frame::read_from(&mut bytes.as_slice()).unwrap(), f);
        assert!(Frame::read_from(&mut &bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 99;
        assert!(Frame::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn channel_checks_sequence_and_session() {
        let (a, b) = pipe();
        let mut ca = Channel::new(Box::new(a), 5);
        let mut cb = Channel::new(Box::new(b), 5);
        ca.send(MsgType::Hello, vec![9]).unwrap();
        ca.send(MsgType::PubKeys, vec![]).unwrap();
        assert_eq!(cb.expect(MsgType::Hello).unwrap(), vec![9]);
        assert!(cb.expect(MsgType::Hello).is_err());
        assert_eq!(ca.stats.bytes_sent, (2 * HEADER_LEN + 1) as u64);
        assert_eq!(cb.stats.frames_received, 2);

        let (a, mut raw) = pipe();
        let mut ca = Channel::new(Box::new(a), 5);
        raw.send(&Frame { kind: MsgType::Hello, session: 5, seq: 3, payload: vec![] }).unwrap();
        assert!(ca.recv().is_err());

        let (a, mut raw) = pipe();
        let mut ca = Channel::new(Box::new(a), 1);
        raw.send(&Frame { kind: MsgType::Hello, session: 2, seq: 0, payload: vec![] }).unwrap();
        assert!(ca.recv().is_err());

        let (a, mut raw) = pipe();
        let mut ca = Channel::new(Box::new(a), 1);
        raw.send(&Frame { kind: MsgType::Shutdown, session: 1, seq: 0, payload: b"boom".to_vec() }).unwrap();
        let err = ca.expect(MsgType::FwdOut).unwrap_err().to_string();
        assert!(err.contains("boom"), "{err}");
    }

    #[test]
    fn tcp_transport() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut c = Channel::new(Box::new(TcpTransport::new(s).unwrap()), 1);
            let p = c.expect(MsgType::Hello).unwrap();
            c.send(MsgType::Hello, p.iter().rev().copied().collect()).unwrap();
        });
        let mut c = Channel::new(Box::new(TcpTransport::new(TcpStream::connect(addr).unwrap()).unwrap()), 1);
        c.send(MsgType::Hello, vec![1, 2, 3]).unwrap();
        assert_eq!(c.expect(MsgType::Hello).unwrap(), vec![3, 2, 1]);
        h.join().unwrap();
    }
}
