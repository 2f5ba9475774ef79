//! `KAC1` binary snapshots: little-endian header, bit-packed spins, trailing CRC32.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{KacError, Result};

pub const MAGIC: &[u8; 4] = b"KAC1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    /// `γ = gamma_num / gamma_den`.
    pub gamma_num: u64,
    pub gamma_den: u64,
    pub lambda: f64,
    pub beta: f64,
    pub start: i64,
    pub end: i64,
    pub step: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub spins: Vec<i8>,
}

impl Snapshot {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        if h.end - h.start != self.spins.len() as i64 {
            return Err(KacError::Format(format!(
                "bounds [{}, {}) do not match {} spins",
                h.start,
                h.end,
                self.spins.len()
            )));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.spins.len().div_ceil(8) + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&h.gamma_num.to_le_bytes());
        out.extend_from_slice(&h.gamma_den.to_le_bytes());
        out.extend_from_slice(&h.lambda.to_le_bytes());
        out.extend_from_slice(&h.beta.to_le_bytes());
        out.extend_from_slice(&h.start.to_le_bytes());
        out.extend_from_slice(&h.end.to_le_bytes());
        out.extend_from_slice(&h.step.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        for chunk in self.spins.chunks(8) {
            let mut byte = 0u8;
            for (k, &s) in chunk.iter().enumerate() {
                if s > 0 {
                    byte |= 1 << k;
                }
            }
            out.push(byte);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(KacError::Format(format!("{} bytes is shorter than a header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(KacError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(KacError::UnsupportedVersion(version));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(KacError::Crc { stored, computed });
        }
        let word = |k: usize| -> [u8; 8] { bytes[6 + 8 * k..14 + 8 * k].try_into().expect("8 bytes") };
        let header = SnapshotHeader {
            gamma_num: u64::from_le_bytes(word(0)),
            gamma_den: u64::from_le_bytes(word(1)),
            lambda: f64::from_le_bytes(word(2)),
            beta: f64::from_le_bytes(word(3)),
            start: i64::from_le_bytes(word(4)),
            end: i64::from_le_bytes(word(5)),
            step: u64::from_le_bytes(word(6)),
            seed: u64::from_le_bytes(word(7)),
        };
        let n = header.end.checked_sub(header.start).filter(|&n| n >= 0).ok_or_else(|| {
            KacError::Format(format!("invalid bounds [{}, {})", header.start, header.end))
        })? as usize;
        let packed = &body[HEADER_LEN..];
        if packed.len() != n.div_ceil(8) {
            return Err(KacError::Format(format!("expected {} spin bytes, found {}", n.div_ceil(8), packed.len())));
        }
        let spins = (0..n).map(|i| if packed[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 }).collect();
        Ok(Self { header, spins })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.encode()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::decode(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(spins: Vec<i8>) -> Snapshot {
        Snapshot {
            header: SnapshotHeader {
                gamma_num: 1,
                gamma_den: 32,
                lambda: 5.0,
                beta: 3.0,
                start: -7,
                end: -7 + spins.len() as i64,
                step: 123_456,
                seed: 42,
            },
            spins,
        }
    }

    #[test]
    fn layout_is_fixed() {
        let bytes = sample(vec![1, -1, -1, 1, 1, 1, 1, 1, -1, 1]).encode().unwrap();
        assert_eq!(&bytes[..4], b"KAC1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes.len(), HEADER_LEN + 2 + 4);
        assert_eq!(bytes[HEADER_LEN], 0b1111_1001);
        assert_eq!(bytes[HEADER_LEN + 1], 0b10);
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let mut bytes = sample(vec![1; 20]).encode().unwrap();
        bytes[HEADER_LEN] ^= 0x04;
        assert!(matches!(Snapshot::decode(&bytes), Err(KacError::Crc { .. })));
        let mut bytes = sample(vec![1; 20]).encode().unwrap();
        bytes[4] = 2;
        assert_eq!(Snapshot::decode(&bytes), Err(KacError::UnsupportedVersion(2)));
        let mut bytes = sample(vec![1; 20]).encode().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Snapshot::decode(&bytes), Err(KacError::Format(_))));
        assert!(Snapshot::decode(&bytes[..10]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.kac");
        let s = sample(vec![-1, 1, 1, -1, 1]);
        s.save(&path).unwrap();
        assert_eq!(Snapshot::load(&path).unwrap(), s);
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let s = sample(bits.iter().map(|&b| if b { 1 } else { -1 }).collect());
            let bytes = s.encode().unwrap();
            let back = Snapshot::decode(&bytes).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.encode().unwrap(), bytes);
        }
    }
}
