//! Binary encoding of [`InterferenceMessage`]s.
//!
//! ```text
//! offset  size  field
//!      0     8  round     (u64, little-endian)
//!      8     4  sender    (u32)
//!     12     4  receiver  (u32)
//!     16     4  kind      (u32, see MessageKind::code)
//!     20     4  rows      (u32)
//!     24     4  cols      (u32)
//!     28     4  reserved  (u32, must be zero)
//!     32   16·rows·cols  payload, row-major, (re, im) f64 pairs
//! ```
//!
//! Decoded messages carry [`Provenance::Unverified`](super::Provenance).

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use super::{InterferenceMessage, MessageKind};
use crate::CMatrix;

pub const HEADER_LEN: usize = 32;
/// Largest payload accepted by the decoder, in complex entries.
pub const MAX_ENTRIES: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("reserved header field is {0:#x}, expected 0")]
    Reserved(u32),
    #[error("unknown message kind {0}")]
    UnknownKind(u32),
    #[error("sender and receiver are both {0}")]
    SelfAddressed(u32),
    #[error("payload of {rows}x{cols} exceeds the frame limit")]
    TooLarge { rows: u32, cols: u32 },
    #[error("non-finite payload value at entry {0}")]
    NonFinite(usize),
    #[error("field does not fit the wire format: {0}")]
    Overflow(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn to_u32(v: usize, field: &'static str) -> Result<u32, WireError> {
    u32::try_from(v).map_err(|_| WireError::Overflow(field))
}

pub fn encode(msg: &InterferenceMessage) -> Result<Vec<u8>, WireError> {
    let p = msg.payload();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * p.len());
    out.extend_from_slice(&(msg.round() as u64).to_le_bytes());
    out.extend_from_slice(&to_u32(msg.sender(), "sender")?.to_le_bytes());
    out.extend_from_slice(&to_u32(msg.receiver(), "receiver")?.to_le_bytes());
    out.extend_from_slice(&msg.kind().code().to_le_bytes());
    out.extend_from_slice(&to_u32(p.nrows(), "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(p.ncols(), "cols")?.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for r in 0..p.nrows() {
        for c in 0..p.ncols() {
            let z = p[(r, c)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

struct Header {
    round: u64,
    sender: u32,
    receiver: u32,
    kind: MessageKind,
    rows: u32,
    cols: u32,
}

impl Header {
    fn payload_len(&self) -> usize {
        16 * self.rows as usize * self.cols as usize
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4-byte slice"))
}

fn parse_header(b: &[u8]) -> Result<Header, WireError> {
    if b.len() < HEADER_LEN {
        return Err(WireError::Truncated { needed: HEADER_LEN, have: b.len() });
    }
    let round = u64::from_le_bytes(b[0..8].try_into().expect("8-byte slice"));
    let sender = u32_at(b, 8);
    let receiver = u32_at(b, 12);
    let kind_code = u32_at(b, 16);
    let rows = u32_at(b, 20);
    let cols = u32_at(b, 24);
    let reserved = u32_at(b, 28);
    if reserved != 0 {
        return Err(WireError::Reserved(reserved));
    }
    let kind = MessageKind::from_code(kind_code).ok_or(WireError::UnknownKind(kind_code))?;
    if sender == receiver {
        return Err(WireError::SelfAddressed(sender));
    }
    let entries = u64::from(rows) * u64::from(cols);
    if entries > MAX_ENTRIES as u64 {
        return Err(WireError::TooLarge { rows, cols });
    }
    Ok(Header { round, sender, receiver, kind, rows, cols })
}

fn build(h: &Header, payload: &[u8]) -> Result<InterferenceMessage, WireError> {
    let rows = h.rows as usize;
    let cols = h.cols as usize;
    let mut m = CMatrix::zeros(rows, cols);
    for (i, chunk) in payload.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8-byte slice"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8-byte slice"));
        if !(re.is_finite() && im.is_finite()) {
            return Err(WireError::NonFinite(i));
        }
        m[(i / cols, i % cols)] = Complex64::new(re, im);
    }
    let round = usize::try_from(h.round).map_err(|_| WireError::Overflow("round"))?;
    InterferenceMessage::unverified(round, h.sender as usize, h.receiver as usize, h.kind, m)
        .map_err(|_| WireError::SelfAddressed(h.sender))
}

/// Decode exactly one frame; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<InterferenceMessage, WireError> {
    let h = parse_header(bytes)?;
    let needed = HEADER_LEN + h.payload_len();
    if bytes.len() < needed {
        return Err(WireError::Truncated { needed, have: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(WireError::Trailing(bytes.len() - needed));
    }
    build(&h, &bytes[HEADER_LEN..])
}

pub fn write_frame<W: Write>(w: &mut W, msg: &InterferenceMessage) -> Result<(), WireError> {
    w.write_all(&encode(msg)?)?;
    Ok(())
}

/// Read one frame from a stream. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<InterferenceMessage>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        let got = r.read(&mut header[filled..])?;
        if got == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(WireError::Truncated { needed: HEADER_LEN, have: filled })
            };
        }
        filled += got;
    }
    let h = parse_header(&header)?;
    let mut payload = vec![0u8; h.payload_len()];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated {
            needed: HEADER_LEN + h.payload_len(),
            have: HEADER_LEN,
        },
        _ => WireError::Io(e),
    })?;
    build(&h, &payload).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::{TcpListener, TcpStream};

    fn sample() -> InterferenceMessage {
        let p = CMatrix::from_fn(2, 3, |i, j| Complex64::new(i as f64 + 0.5, -(j as f64)));
        InterferenceMessage::unverified(7, 1, 0, MessageKind::MudStripped, p).unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 6);
        assert_eq!(&bytes[0..8], &7u64.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &3u32.to_le_bytes());
        assert_eq!(&bytes[28..32], &[0; 4]);
        // Row-major: entry (0,1) follows (0,0).
        assert_eq!(&bytes[48..56], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[56..64], &(-1.0f64).to_le_bytes());
    }

    #[test]
    fn decode_rejects_malformed_frames() {
        let good = encode(&sample()).unwrap();
        assert_eq!(decode(&good).unwrap().payload(), sample().payload());
        assert!(matches!(decode(&good[..40]), Err(WireError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(WireError::Trailing(1))));
        let mut bad = good.clone();
        bad[28] = 1;
        assert!(matches!(decode(&bad), Err(WireError::Reserved(1))));
        let mut bad = good.clone();
        bad[16] = 99;
        assert!(matches!(decode(&bad), Err(WireError::UnknownKind(99))));
        let mut bad = good.clone();
        bad[8] = 0;
        assert!(matches!(decode(&bad), Err(WireError::SelfAddressed(0))));
        let mut bad = good;
        bad[32..40].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&bad), Err(WireError::NonFinite(0))));
    }

    #[test]
    fn frames_survive_a_localhost_socket() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let sent = vec![sample(), sample()];
        let to_send = sent.clone();
        let writer = std::thread::spawn(move || {
            let mut s = TcpStream::connect(addr).unwrap();
            for m in &to_send {
                write_frame(&mut s, m).unwrap();
            }
        });
        let (mut conn, _) = listener.accept().unwrap();
        let mut got = Vec::new();
        while let Some(m) = read_frame(&mut conn).unwrap() {
            got.push(m);
        }
        writer.join().unwrap();
        assert_eq!(got, sent);
    }
}
