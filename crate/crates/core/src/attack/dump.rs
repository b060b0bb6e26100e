use std::collections::BTreeMap;

use crate::addr::{LINE_SIZE, NUM_SETS, PAGE_SIZE};

use super::{attack_read, attack_write, stitch, Access, AttackError, AttackOptions, LeakHistogram, Session};

/// Pair offsets sampled per line: 0..=62, covering all 64 bytes.
pub const DUMP_OFFSETS: usize = LINE_SIZE - 1;

/// Page-relative view of everything leaked: a candidate histogram per byte
/// and the stitched best guess.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageDump {
    candidates: Vec<BTreeMap<u8, u64>>,
    bytes: Vec<Option<u8>>,
    agree: Vec<bool>,
}

impl PageDump {
    /// Build from raw samples. An all-zero pair is what an empty buffer
    /// forwards, so it is dropped as carrying no information.
    pub fn from_histogram(h: &LeakHistogram) -> Self {
        let mut candidates = vec![BTreeMap::new(); PAGE_SIZE];
        let mut bytes = vec![None; PAGE_SIZE];
        let mut agree = vec![false; PAGE_SIZE];
        for set in 0..NUM_SETS {
            let samples: Vec<_> = h
                .line_samples(set)
                .into_iter()
                .filter(|s| s.pair() != (0, 0) && (s.offset as usize) < DUMP_OFFSETS)
                .collect();
            let base = set * LINE_SIZE;
            for s in &samples {
                let k = base + s.offset as usize;
                *candidates[k].entry(s.b0).or_default() += s.count;
                *candidates[k + 1].entry(s.b1).or_default() += s.count;
            }
            let st = stitch(&samples);
            for (j, (b, a)) in st.bytes.iter().zip(&st.agree).enumerate() {
                bytes[base + j] = *b;
                agree[base + j] = *a;
            }
        }
        Self {
            candidates,
            bytes,
            agree,
        }
    }

    pub fn candidates(&self, index: usize) -> &BTreeMap<u8, u64> {
        &self.candidates[index]
    }

    /// Most frequent candidate for one byte; ties go to the lower value.
    pub fn modal(&self, index: usize) -> Option<u8> {
        let mut best: Option<(u8, u64)> = None;
        for (b, c) in &self.candidates[index] {
            if best.is_none_or(|(_, bc)| *c > bc) {
                best = Some((*b, *c));
            }
        }
        best.map(|(b, _)| b)
    }

    /// Stitched bytes for the whole page.
    pub fn bytes(&self) -> &[Option<u8>] {
        &self.bytes
    }

    pub fn agree(&self) -> &[bool] {
        &self.agree
    }

    /// Fraction of page bytes with at least one candidate.
    pub fn coverage(&self) -> f64 {
        self.candidates.iter().filter(|c| !c.is_empty()).count() as f64 / PAGE_SIZE as f64
    }
}

/// Sweep every set and pair offset of the victim page.
///
/// Returns the dump together with the raw histogram it was built from.
pub fn dump_page(
    session: &mut Session,
    access: Access,
    iterations_per_offset: usize,
    opts: &AttackOptions,
) -> Result<(PageDump, LeakHistogram), AttackError> {
    let mut hist = LeakHistogram::new();
    for set in 0..NUM_SETS {
        for offset in 0..DUMP_OFFSETS {
            let h = match access {
                Access::Write => attack_write(session, set, offset, iterations_per_offset, opts)?,
                Access::Read => attack_read(session, set, offset, iterations_per_offset, opts)?,
            };
            hist.merge(&h);
        }
    }
    Ok((PageDump::from_histogram(&hist), hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::Addr;
    use crate::attack::ThreadMode;
    use crate::sim::{Domain, MachineState, NoiseConfig};
    use crate::victims::VictimProgram;

    #[test]
    fn one_touched_line_gives_one_line_of_coverage() {
        let mut line = [0u8; 64];
        for (i, b) in line.iter_mut().enumerate() {
            *b = (i as u8).wrapping_mul(37) | 1;
        }
        let victim = VictimProgram::line_writer(Domain::process(2), Addr::from_parts(0x7000_0000, 12, 0), line);
        let m = MachineState::new(5, NoiseConfig::off()).unwrap();
        let mut s = Session::new(m, victim, ThreadMode::SameThread).unwrap();
        let (d, _) = dump_page(&mut s, Access::Write, 1, &AttackOptions::default()).unwrap();
        assert_eq!(d.coverage(), 64.0 / 4096.0);
        let got: Vec<u8> = d.bytes()[12 * 64..13 * 64].iter().map(|b| b.unwrap()).collect();
        assert_eq!(got, line);
        assert!((0..64).all(|i| d.modal(12 * 64 + i) == Some(line[i])));
    }
}
