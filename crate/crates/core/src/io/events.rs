//! Binary event-log sidecar.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "PCEVLOG1"
//! n_sites    u64
//! n_branches u64
//! root       n_sites bytes, one allele index per site
//! records    n_sites * n_branches, site-major, each:
//!              count   LEB128 varint
//!              count * (offset f64, mark f64, allele u8)
//! ```

use crate::error::{Error, Result};
use crate::mutation::{Event, EventLog};

const MAGIC: &[u8; 8] = b"PCEVLOG1";

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn encode_event_log(log: &EventLog) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + log.n_sites() + 17 * log.total_events());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(log.n_sites() as u64).to_le_bytes());
    out.extend_from_slice(&(log.n_branches() as u64).to_le_bytes());
    out.extend_from_slice(log.root_alleles());
    for site in 0..log.n_sites() {
        for b in 0..log.n_branches() {
            let events = log.events(site, b);
            put_varint(&mut out, events.len() as u64);
            for e in events {
                out.extend_from_slice(&e.offset.to_le_bytes());
                out.extend_from_slice(&e.mark.to_le_bytes());
                out.push(e.allele);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Parse("event log is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Parse("varint too long".into()))
    }
}

pub fn decode_event_log(buf: &[u8]) -> Result<EventLog> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Parse("not an event log (bad magic)".into()));
    }
    let n_sites = usize::try_from(r.u64()?).map_err(|_| Error::Parse("site count overflow".into()))?;
    let n_branches = usize::try_from(r.u64()?).map_err(|_| Error::Parse("branch count overflow".into()))?;
    if n_sites > buf.len() || n_sites.saturating_mul(n_branches) > buf.len() {
        return Err(Error::Parse("event log header is inconsistent with its size".into()));
    }
    let root = r.take(n_sites)?.to_vec();
    let mut events = Vec::with_capacity(n_sites * n_branches);
    for _ in 0..n_sites * n_branches {
        let count = r.varint()? as usize;
        if count > (buf.len() - r.pos) / 17 {
            return Err(Error::Parse("event log is truncated".into()));
        }
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let offset = r.f64()?;
            let mark = r.f64()?;
            let allele = r.take(1)?[0];
            list.push(Event { offset, mark, allele });
        }
        events.push(list);
    }
    if r.pos != buf.len() {
        return Err(Error::Parse("trailing bytes after event log".into()));
    }
    EventLog::new(n_branches, root, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::{simulate_sites, MutationModel};
    use crate::priors::Prior;
    use crate::seed;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = seed::rng_from(&[5]);
        let t = Prior::kingman(5).unwrap().sample(&mut rng);
        let m = MutationModel::jukes_cantor(0.7).unwrap();
        let d = simulate_sites(&t, &m, 50, 9).unwrap();
        let log = d.event_log().unwrap();
        let bytes = encode_event_log(log);
        assert_eq!(&decode_event_log(&bytes).unwrap(), log);
        assert!(decode_event_log(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_event_log(&bad).is_err());
    }

    #[test]
    fn varint_boundaries() {
        for v in [0u64, 127, 128, 300, u64::MAX] {
            let mut out = Vec::new();
            put_varint(&mut out, v);
            assert_eq!(Reader { buf: &out, pos: 0 }.varint().unwrap(), v);
        }
    }
}
