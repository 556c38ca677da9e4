//! Communication accounting over recorded session transcripts.

use alloc::vec::Vec;

use crate::model::Phase;
use crate::wire::{count_elements, query_shape, Frame, MsgType, WireError};

/// One request/response exchange with one server (0-based index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub server: usize,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

/// Every frame a session sent and received, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, server: usize, request: Vec<u8>, response: Vec<u8>) {
        self.entries.push(TranscriptEntry { server, request, response });
    }

    /// Requests addressed to one server.
    pub fn inbound(&self, server: usize) -> impl Iterator<Item = &[u8]> + '_ {
        self.entries.iter().filter(move |e| e.server == server).map(|e| e.request.as_slice())
    }
}

/// Field elements moved per phase, framing excluded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostReport {
    /// Indexed by phase: membership, distance, single.
    pub upload: [u64; 3],
    pub download: [u64; 3],
}

impl CostReport {
    pub fn upload_total(&self) -> u64 {
        self.upload.iter().sum()
    }

    pub fn download_total(&self) -> u64 {
        self.download.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.upload_total() + self.download_total()
    }

    pub fn phase(&self, phase: Phase) -> (u64, u64) {
        (self.upload[phase.slot()], self.download[phase.slot()])
    }
}

/// Counts QUERY and ANSWER elements. Handshakes and the plaintext FETCH
/// are not part of the retrieval cost.
pub fn count_cost(transcript: &Transcript) -> Result<CostReport, WireError> {
    let mut report = CostReport::default();
    for e in &transcript.entries {
        let req = Frame::decode(&e.request)?;
        if req.msg_type != MsgType::Query {
            continue;
        }
        let (phase, up) = query_shape(&req.payload)?;
        report.upload[phase.slot()] += up;
        let resp = Frame::decode(&e.response)?;
        if resp.msg_type == MsgType::Answer {
            report.download[phase.slot()] += count_elements(&resp.payload)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldVector, PrimeModulus};
    use crate::wire::{encode_query, encode_vectors};
    use alloc::vec;

    #[test]
    fn counts_only_query_and_answer_elements() {
        let q = PrimeModulus::new(29).unwrap();
        let v = |n| FieldVector::zeros(q, n);
        let mut t = Transcript::default();
        t.push(0, Frame::new(MsgType::Hello, [0; 16], vec![1]).encode(), Frame::new(MsgType::HelloOk, [0; 16], vec![0; 33]).encode());
        t.push(
            0,
            Frame::new(MsgType::Query, [0; 16], encode_query(Phase::Membership, &[v(3), v(3)])).encode(),
            Frame::new(MsgType::Answer, [0; 16], encode_vectors(&[v(5)])).encode(),
        );
        t.push(
            1,
            Frame::new(MsgType::Query, [0; 16], encode_query(Phase::Distance, &[v(5), v(3)])).encode(),
            Frame::new(MsgType::Answer, [0; 16], encode_vectors(&[v(5)])).encode(),
        );
        t.push(1, Frame::new(MsgType::Fetch, [0; 16], vec![0; 4]).encode(), Frame::new(MsgType::FetchOk, [0; 16], encode_vectors(&[v(3)])).encode());
        let c = count_cost(&t).unwrap();
        assert_eq!(c.phase(Phase::Membership), (6, 5));
        assert_eq!(c.phase(Phase::Distance), (8, 5));
        assert_eq!(c.total(), 24);
        assert_eq!(t.inbound(1).count(), 2);
    }
}
