//! Packed lattice trajectories.
//!
//! Binary layout (all multi-byte fields little-endian):
//!
//! | offset | size | field                                                     |
//! |--------|------|-----------------------------------------------------------|
//! | 0      | 2    | magic `b"RW"`                                             |
//! | 2      | 1    | format version, currently `1`                             |
//! | 3      | 1    | bits 0-1: topology (0 = unbounded lattice, 1 = torus);    |
//! |        |      | bits 2-5: reserved, zero; bits 6-7: padding codes in the  |
//! |        |      | final body byte (0..=3)                                   |
//! | 4      | 4    | torus side `n` as u32 (0 for the unbounded lattice)       |
//! | 8      | ...  | body: 2-bit step codes, four per byte, first step in the  |
//! |        |      | two least significant bits                                |
//!
//! Step codes are 0: +x, 1: -x, 2: +y, 3: -y. The start position is not
//! stored; lattice walks start at the origin and torus walks at the start
//! vertex recorded by the caller (experiments always use `(0, 0)`).

use std::io::{Read, Write};

use crate::error::{LabError, Result};

pub const MAGIC: [u8; 2] = *b"RW";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpTopology {
    Lattice,
    Torus(u32),
}

/// Growable packed sequence of 2-bit step codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepRecorder {
    bytes: Vec<u8>,
    len: u64,
}

impl StepRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, code: u8) {
        debug_assert!(code < 4);
        let shift = (self.len % 4) * 2;
        if shift == 0 {
            self.bytes.push(0);
        }
        *self.bytes.last_mut().expect("byte pushed above") |= (code & 3) << shift;
        self.len += 1;
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn codes(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| (self.bytes[(i / 4) as usize] >> ((i % 4) * 2)) & 3)
    }

    pub fn write_to<W: Write>(&self, topology: DumpTopology, mut out: W) -> Result<()> {
        let (kind, side) = match topology {
            DumpTopology::Lattice => (0u8, 0u32),
            DumpTopology::Torus(n) => (1u8, n),
        };
        let padding = ((4 - self.len % 4) % 4) as u8;
        let mut header = [0u8; HEADER_LEN];
        header[..2].copy_from_slice(&MAGIC);
        header[2] = VERSION;
        header[3] = kind | (padding << 6);
        header[4..].copy_from_slice(&side.to_le_bytes());
        out.write_all(&header)?;
        out.write_all(&self.bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<(DumpTopology, StepRecorder)> {
        let mut header = [0u8; HEADER_LEN];
        input.read_exact(&mut header)?;
        if header[..2] != MAGIC {
            return Err(LabError::usage("not a trajectory dump (bad magic)"));
        }
        if header[2] != VERSION {
            return Err(LabError::usage(format!("unsupported trajectory version {}", header[2])));
        }
        let side = u32::from_le_bytes(header[4..].try_into().expect("4-byte slice"));
        let topology = match header[3] & 0b11 {
            0 => DumpTopology::Lattice,
            1 => DumpTopology::Torus(side),
            other => return Err(LabError::usage(format!("unknown topology code {other}"))),
        };
        let padding = u64::from(header[3] >> 6);
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let len = (bytes.len() as u64 * 4)
            .checked_sub(padding)
            .ok_or_else(|| LabError::usage("padding exceeds body length"))?;
        Ok((topology, StepRecorder { bytes, len }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let mut rec = StepRecorder::new();
        for c in [0, 1, 2, 3, 3] {
            rec.push(c);
        }
        let mut buf = Vec::new();
        rec.write_to(DumpTopology::Torus(64), &mut buf).unwrap();
        assert_eq!(&buf[..8], &[b'R', b'W', 1, 1 | (3 << 6), 64, 0, 0, 0]);
        assert_eq!(&buf[8..], &[0b11_10_01_00, 0b11]);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(StepRecorder::read_from(&b"XX\x01\x00\x00\x00\x00\x00"[..]).is_err());
        assert!(StepRecorder::read_from(&b"RW\x09\x00\x00\x00\x00\x00"[..]).is_err());
    }

    proptest! {
        #[test]
        fn dump_round_trips(codes in proptest::collection::vec(0u8..4, 0..200), side in 3u32..1000) {
            let mut rec = StepRecorder::new();
            for &c in &codes {
                rec.push(c);
            }
            let mut buf = Vec::new();
            rec.write_to(DumpTopology::Torus(side), &mut buf).unwrap();
            let (topo, back) = StepRecorder::read_from(&buf[..]).unwrap();
            prop_assert_eq!(topo, DumpTopology::Torus(side));
            prop_assert_eq!(back.codes().collect::<Vec<_>>(), codes);
        }
    }
}
