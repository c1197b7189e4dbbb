//! The public classical channel.
//!
//! Everything sent here is visible to an eavesdropper: basis announcements,
//! disclosed check bits and detector arrival times. Messages are framed as
//! length-prefixed binary records:
//!
//! ```text
//! u32 LE body length | u8 tag | u8 sender | payload
//! tag 1 basis:    u64 LE index | u8 basis (0 = +, 1 = x)
//! tag 2 bit:      u64 LE index | u8 bit
//! tag 3 arrivals: u32 LE count | count * i64 LE timestamp_ns
//! ```

use alloc::vec::Vec;
use core::fmt;

use crate::qkd::{Basis, Bit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Party {
    Alice,
    Bob,
    Leader,
}

impl Party {
    fn code(self) -> u8 {
        match self {
            Party::Alice => 0,
            Party::Bob => 1,
            Party::Leader => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Party::Alice),
            1 => Some(Party::Bob),
            2 => Some(Party::Leader),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Message {
    Basis { from: Party, index: u64, basis: Basis },
    Bit { from: Party, index: u64, bit: Bit },
    ArrivalTimes { from: Party, timestamps_ns: Vec<i64> },
}

impl Message {
    pub fn sender(&self) -> Party {
        match self {
            Message::Basis { from, .. }
            | Message::Bit { from, .. }
            | Message::ArrivalTimes { from, .. } => *from,
        }
    }

    /// Append the framed record to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let mut body = Vec::new();
        match self {
            Message::Basis { from, index, basis } => {
                body.push(1);
                body.push(from.code());
                body.extend_from_slice(&index.to_le_bytes());
                body.push(match basis {
                    Basis::Plus => 0,
                    Basis::Cross => 1,
                });
            }
            Message::Bit { from, index, bit } => {
                body.push(2);
                body.push(from.code());
                body.extend_from_slice(&index.to_le_bytes());
                body.push(bit.as_u8());
            }
            Message::ArrivalTimes { from, timestamps_ns } => {
                body.push(3);
                body.push(from.code());
                body.extend_from_slice(&(timestamps_ns.len() as u32).to_le_bytes());
                for t in timestamps_ns {
                    body.extend_from_slice(&t.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelError {
    Closed,
    /// A record could not be decoded; carries the byte offset of the record.
    Malformed(usize),
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelError::Closed => f.write_str("classical channel is closed"),
            ChannelError::Malformed(at) => write!(f, "malformed channel record at byte {at}"),
        }
    }
}

impl core::error::Error for ChannelError {}

/// A lossless, authenticated-by-assumption broadcast channel with a full
/// transcript.
#[derive(Clone, Debug, Default)]
pub struct PublicChannel {
    transcript: Vec<Message>,
    closed: bool,
}

impl PublicChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, msg: Message) -> Result<(), ChannelError> {
        if self.closed {
            return Err(ChannelError::Closed);
        }
        self.transcript.push(msg);
        Ok(())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Everything an eavesdropper on the classical channel has seen.
    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for m in &self.transcript {
            m.encode_into(&mut out);
        }
        out
    }
}

fn take<const N: usize>(buf: &[u8], at: &mut usize) -> Option<[u8; N]> {
    let bytes = buf.get(*at..*at + N)?;
    *at += N;
    bytes.try_into().ok()
}

/// Decode a stream of framed records.
pub fn decode_records(bytes: &[u8]) -> Result<Vec<Message>, ChannelError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let start = pos;
        let bad = || ChannelError::Malformed(start);
        let len = u32::from_le_bytes(take::<4>(bytes, &mut pos).ok_or_else(bad)?) as usize;
        let body = bytes.get(pos..pos + len).ok_or_else(bad)?;
        pos += len;

        let mut at = 0;
        let [tag, sender] = take::<2>(body, &mut at).ok_or_else(bad)?;
        let from = Party::from_code(sender).ok_or_else(bad)?;
        let msg = match tag {
            1 => {
                let index = u64::from_le_bytes(take::<8>(body, &mut at).ok_or_else(bad)?);
                let basis = match take::<1>(body, &mut at).ok_or_else(bad)? {
                    [0] => Basis::Plus,
                    [1] => Basis::Cross,
                    _ => return Err(bad()),
                };
                Message::Basis { from, index, basis }
            }
            2 => {
                let index = u64::from_le_bytes(take::<8>(body, &mut at).ok_or_else(bad)?);
                let bit = match take::<1>(body, &mut at).ok_or_else(bad)? {
                    [0] => Bit::Zero,
                    [1] => Bit::One,
                    _ => return Err(bad()),
                };
                Message::Bit { from, index, bit }
            }
            3 => {
                let count = u32::from_le_bytes(take::<4>(body, &mut at).ok_or_else(bad)?);
                let timestamps_ns = (0..count)
                    .map(|_| take::<8>(body, &mut at).map(i64::from_le_bytes))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(bad)?;
                Message::ArrivalTimes { from, timestamps_ns }
            }
            _ => return Err(bad()),
        };
        if at != body.len() {
            return Err(bad());
        }
        out.push(msg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn arb_message() -> impl Strategy<Value = Message> {
        let party = prop_oneof![Just(Party::Alice), Just(Party::Bob), Just(Party::Leader)];
        prop_oneof![
            (party.clone(), any::<u64>(), any::<bool>()).prop_map(|(from, index, b)| {
                Message::Basis { from, index, basis: if b { Basis::Cross } else { Basis::Plus } }
            }),
            (party.clone(), any::<u64>(), any::<bool>())
                .prop_map(|(from, index, b)| Message::Bit { from, index, bit: Bit::from(b) }),
            (party, proptest::collection::vec(any::<i64>(), 0..20))
                .prop_map(|(from, timestamps_ns)| Message::ArrivalTimes { from, timestamps_ns }),
        ]
    }

    proptest! {
        #[test]
        fn framing_round_trips(msgs in proptest::collection::vec(arb_message(), 0..30)) {
            let mut ch = PublicChannel::new();
            for m in &msgs {
                ch.send(m.clone()).unwrap();
            }
            prop_assert_eq!(decode_records(&ch.encode()).unwrap(), msgs);
        }
    }

    #[test]
    fn basis_record_layout() {
        let mut out = Vec::new();
        Message::Basis { from: Party::Bob, index: 7, basis: Basis::Cross }.encode_into(&mut out);
        assert_eq!(out, vec![11, 0, 0, 0, 1, 1, 7, 0, 0, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn closed_channel_rejects() {
        let mut ch = PublicChannel::new();
        ch.close();
        let msg = Message::ArrivalTimes { from: Party::Alice, timestamps_ns: vec![] };
        assert_eq!(ch.send(msg), Err(ChannelError::Closed));
    }

    #[test]
    fn truncated_record_is_malformed() {
        let mut out = Vec::new();
        Message::Bit { from: Party::Alice, index: 1, bit: Bit::One }.encode_into(&mut out);
        out.pop();
        assert_eq!(decode_records(&out), Err(ChannelError::Malformed(0)));
        assert_eq!(decode_records(&[3, 0, 0, 0, 9, 0, 0]), Err(ChannelError::Malformed(0)));
    }
}
