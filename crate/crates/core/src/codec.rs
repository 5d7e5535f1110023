//! Minimal DNS wire format: A/AAAA queries out, response summaries in.
//!
//! Only what the racing resolver needs: exact datagram sizes for traffic
//! accounting, transaction-id matching, the response code, and any A/AAAA
//! addresses in the answer section. Other answer records are counted and
//! skipped; the authority and additional sections are not walked.

use std::collections::HashSet;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER_LEN: usize = 12;
pub const MAX_LABEL_LEN: usize = 63;
pub const MAX_NAME_LEN: usize = 255;

const CLASS_IN: u16 = 1;
const TYPE_A: u16 = 1;
const TYPE_NULL: u16 = 10;
const TYPE_AAAA: u16 = 28;
const FLAG_QR: u16 = 0x8000;
const FLAG_TC: u16 = 0x0200;
const FLAG_RD: u16 = 0x0100;
const FLAG_RA: u16 = 0x0080;
/// Compression pointer to the question name, which always starts right after the header.
const POINTER_TO_QNAME: [u8; 2] = [0xC0, HEADER_LEN as u8];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("query name is empty")]
    EmptyName,
    #[error("empty label in {0:?}")]
    EmptyLabel(String),
    #[error("label of {0} bytes exceeds the 63-byte limit")]
    LabelTooLong(usize),
    #[error("encoded name of {0} bytes exceeds the 255-byte limit")]
    NameTooLong(usize),
    #[error("datagram truncated: needed {needed} bytes, have {len}")]
    Truncated { needed: usize, len: usize },
    #[error("not a response (QR bit clear)")]
    NotAResponse,
    #[error("not a query (QR bit set)")]
    NotAQuery,
    #[error("transaction id mismatch: expected {expected:#06x}, got {found:#06x}")]
    IdMismatch { expected: u16, found: u16 },
    #[error("compression pointer loop at offset {0}")]
    PointerLoop(usize),
    #[error("reserved label type {byte:#04x} at offset {offset}")]
    BadLabel { offset: usize, byte: u8 },
    #[error("query must carry exactly one A or AAAA question")]
    UnsupportedQuestion,
    #[error("padded size {0} is below the 12-byte header")]
    PadTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryType {
    A,
    #[serde(rename = "AAAA")]
    Aaaa,
}

impl QueryType {
    pub fn code(self) -> u16 {
        match self {
            QueryType::A => TYPE_A,
            QueryType::Aaaa => TYPE_AAAA,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            TYPE_A => Some(QueryType::A),
            TYPE_AAAA => Some(QueryType::Aaaa),
            _ => None,
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryType::A => "A",
            QueryType::Aaaa => "AAAA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub qname: String,
    pub qtype: QueryType,
    pub id: u16,
    pub recursion_desired: bool,
}

impl QuerySpec {
    pub fn new(qname: impl Into<String>, qtype: QueryType, id: u16) -> Self {
        QuerySpec {
            qname: qname.into(),
            qtype,
            id,
            recursion_desired: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub qname: String,
    pub qtype: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub id: u16,
    pub rcode: u8,
    /// TC flag; set when the server truncated the answer to fit a datagram.
    pub truncated: bool,
    pub answer_count: u16,
    pub addresses: Vec<IpAddr>,
    /// Exact datagram length.
    pub wire_bytes: usize,
    /// First question echoed by the server, if any.
    pub question: Option<Question>,
}

fn encode_name(name: &str, out: &mut Vec<u8>) -> Result<(), CodecError> {
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    if trimmed.is_empty() {
        return Err(CodecError::EmptyName);
    }
    let start = out.len();
    for label in trimmed.split('.') {
        if label.is_empty() {
            return Err(CodecError::EmptyLabel(name.to_string()));
        }
        if label.len() > MAX_LABEL_LEN {
            return Err(CodecError::LabelTooLong(label.len()));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
    let encoded = out.len() - start;
    if encoded > MAX_NAME_LEN {
        return Err(CodecError::NameTooLong(encoded));
    }
    Ok(())
}

fn push_header(out: &mut Vec<u8>, id: u16, flags: u16, counts: [u16; 4]) {
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&flags.to_be_bytes());
    for c in counts {
        out.extend_from_slice(&c.to_be_bytes());
    }
}

/// Standard query datagram: header, one question, class IN, no EDNS.
pub fn encode_query(q: &QuerySpec) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(HEADER_LEN + q.qname.len() + 6);
    let flags = if q.recursion_desired { FLAG_RD } else { 0 };
    push_header(&mut out, q.id, flags, [1, 0, 0, 0]);
    encode_name(&q.qname, &mut out)?;
    out.extend_from_slice(&q.qtype.code().to_be_bytes());
    out.extend_from_slice(&CLASS_IN.to_be_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn need(&self, offset: usize, n: usize) -> Result<(), CodecError> {
        match offset.checked_add(n) {
            Some(end) if end <= self.buf.len() => Ok(()),
            _ => Err(CodecError::Truncated {
                needed: offset.saturating_add(n),
                len: self.buf.len(),
            }),
        }
    }

    fn u16_at(&self, offset: usize) -> Result<u16, CodecError> {
        self.need(offset, 2)?;
        Ok(u16::from_be_bytes([self.buf[offset], self.buf[offset + 1]]))
    }

    /// Reads a possibly compressed name; returns it and the offset just past
    /// its in-place encoding.
    fn name_at(&self, offset: usize) -> Result<(String, usize), CodecError> {
        let mut name = String::new();
        let mut pos = offset;
        let mut resume = None;
        let mut visited = HashSet::new();
        let mut wire_len = 0usize;
        loop {
            self.need(pos, 1)?;
            let len = self.buf[pos];
            match len & 0xC0 {
                0xC0 => {
                    self.need(pos, 2)?;
                    let target = usize::from(u16::from_be_bytes([len & 0x3F, self.buf[pos + 1]]));
                    if !visited.insert(target) {
                        return Err(CodecError::PointerLoop(target));
                    }
                    resume.get_or_insert(pos + 2);
                    pos = target;
                }
                0x00 => {
                    let len = usize::from(len);
                    wire_len += len + 1;
                    if wire_len > MAX_NAME_LEN {
                        return Err(CodecError::NameTooLong(wire_len));
                    }
                    if len == 0 {
                        if name.is_empty() {
                            name.push('.');
                        }
                        return Ok((name, resume.unwrap_or(pos + 1)));
                    }
                    self.need(pos + 1, len)?;
                    if !name.is_empty() {
                        name.push('.');
                    }
                    for &b in &self.buf[pos + 1..pos + 1 + len] {
                        if b.is_ascii_graphic() && b != b'.' && b != b'\\' {
                            name.push(char::from(b));
                        } else {
                            name.push_str(&format!("\\{b:03}"));
                        }
                    }
                    pos += 1 + len;
                }
                _ => return Err(CodecError::BadLabel { offset: pos, byte: len }),
            }
        }
    }
}

struct Header {
    id: u16,
    flags: u16,
    qdcount: u16,
    ancount: u16,
}

fn read_header(r: &Reader<'_>) -> Result<Header, CodecError> {
    r.need(0, HEADER_LEN)?;
    Ok(Header {
        id: r.u16_at(0)?,
        flags: r.u16_at(2)?,
        qdcount: r.u16_at(4)?,
        ancount: r.u16_at(6)?,
    })
}

/// Parses a response datagram sent for transaction `expected_id`.
pub fn decode_response(datagram: &[u8], expected_id: u16) -> Result<ResponseSummary, CodecError> {
    let r = Reader { buf: datagram };
    let header = read_header(&r)?;
    if header.flags & FLAG_QR == 0 {
        return Err(CodecError::NotAResponse);
    }
    if header.id != expected_id {
        return Err(CodecError::IdMismatch {
            expected: expected_id,
            found: header.id,
        });
    }

    let mut pos = HEADER_LEN;
    let mut question = None;
    for _ in 0..header.qdcount {
        let (qname, next) = r.name_at(pos)?;
        let qtype = r.u16_at(next)?;
        r.need(next, 4)?;
        question.get_or_insert(Question { qname, qtype });
        pos = next + 4;
    }

    let mut addresses = Vec::new();
    for _ in 0..header.ancount {
        let (_, next) = r.name_at(pos)?;
        r.need(next, 10)?;
        let rtype = r.u16_at(next)?;
        let class = r.u16_at(next + 2)?;
        let rdlen = usize::from(r.u16_at(next + 8)?);
        let rdata = next + 10;
        r.need(rdata, rdlen)?;
        let bytes = &datagram[rdata..rdata + rdlen];
        match (rtype, class, rdlen) {
            (TYPE_A, CLASS_IN, 4) => {
                addresses.push(IpAddr::V4(Ipv4Addr::new(bytes[0], bytes[1], bytes[2], bytes[3])));
            }
            (TYPE_AAAA, CLASS_IN, 16) => {
                let octets: [u8; 16] = bytes.try_into().expect("length checked");
                addresses.push(IpAddr::V6(Ipv6Addr::from(octets)));
            }
            _ => {}
        }
        pos = rdata + rdlen;
    }

    Ok(ResponseSummary {
        id: header.id,
        rcode: (header.flags & 0x000F) as u8,
        truncated: header.flags & FLAG_TC != 0,
        answer_count: header.ancount,
        addresses,
        wire_bytes: datagram.len(),
        question,
    })
}

/// Parses a query datagram carrying a single A or AAAA question.
pub fn decode_query(datagram: &[u8]) -> Result<QuerySpec, CodecError> {
    let r = Reader { buf: datagram };
    let header = read_header(&r)?;
    if header.flags & FLAG_QR != 0 {
        return Err(CodecError::NotAQuery);
    }
    if header.qdcount != 1 {
        return Err(CodecError::UnsupportedQuestion);
    }
    let (qname, next) = r.name_at(HEADER_LEN)?;
    let qtype = QueryType::from_code(r.u16_at(next)?).ok_or(CodecError::UnsupportedQuestion)?;
    if r.u16_at(next + 2)? != CLASS_IN {
        return Err(CodecError::UnsupportedQuestion);
    }
    Ok(QuerySpec {
        qname,
        qtype,
        id: header.id,
        recursion_desired: header.flags & FLAG_RD != 0,
    })
}

/// Builds a response to `query`. Addresses become A or AAAA answers that
/// point back at the question name.
///
/// With `pad_to`, the datagram is exactly that many bytes: answers that do
/// not fit are dropped, leftover room of 12 bytes or more is filled with a
/// NULL record, and anything smaller with trailing zero bytes.
pub fn encode_response(
    query: &QuerySpec,
    rcode: u8,
    addresses: &[IpAddr],
    pad_to: Option<usize>,
) -> Result<Vec<u8>, CodecError> {
    let mut question = Vec::new();
    encode_name(&query.qname, &mut question)?;
    question.extend_from_slice(&query.qtype.code().to_be_bytes());
    question.extend_from_slice(&CLASS_IN.to_be_bytes());

    let answers: Vec<Vec<u8>> = addresses
        .iter()
        .map(|addr| {
            let (rtype, rdata) = match addr {
                IpAddr::V4(a) => (TYPE_A, a.octets().to_vec()),
                IpAddr::V6(a) => (TYPE_AAAA, a.octets().to_vec()),
            };
            let mut rr = POINTER_TO_QNAME.to_vec();
            rr.extend_from_slice(&rtype.to_be_bytes());
            rr.extend_from_slice(&CLASS_IN.to_be_bytes());
            rr.extend_from_slice(&300u32.to_be_bytes());
            rr.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
            rr.extend_from_slice(&rdata);
            rr
        })
        .collect();

    let limit = match pad_to {
        Some(n) if n < HEADER_LEN => return Err(CodecError::PadTooSmall(n)),
        Some(n) => n,
        None => usize::MAX,
    };

    let mut body = Vec::new();
    let with_question = HEADER_LEN + question.len() <= limit;
    if with_question {
        body.extend_from_slice(&question);
    }
    let mut ancount = 0u16;
    if with_question {
        for rr in &answers {
            if HEADER_LEN + body.len() + rr.len() > limit {
                break;
            }
            body.extend_from_slice(rr);
            ancount += 1;
        }
    }
    if let Some(n) = pad_to {
        let room = n - HEADER_LEN - body.len();
        let owner: &[u8] = if with_question { &POINTER_TO_QNAME } else { &[0] };
        let fixed = owner.len() + 10;
        if room >= fixed {
            body.extend_from_slice(owner);
            body.extend_from_slice(&TYPE_NULL.to_be_bytes());
            body.extend_from_slice(&CLASS_IN.to_be_bytes());
            body.extend_from_slice(&0u32.to_be_bytes());
            body.extend_from_slice(&((room - fixed) as u16).to_be_bytes());
            body.resize(body.len() + (room - fixed), 0);
            ancount += 1;
        } else {
            body.resize(body.len() + room, 0);
        }
    }

    let mut flags = FLAG_QR | FLAG_RA | u16::from(rcode & 0x0F);
    if query.recursion_desired {
        flags |= FLAG_RD;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    push_header(&mut out, query.id, flags, [u16::from(with_question), ancount, 0, 0]);
    out.extend_from_slice(&body);
    Ok(out)
}
