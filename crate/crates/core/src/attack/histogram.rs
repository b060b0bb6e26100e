use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

/// One histogram cell: how often a byte pair was recovered for a given
/// (set, offset).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakSample {
    pub set: u8,
    pub offset: u8,
    pub b0: u8,
    pub b1: u8,
    pub count: u64,
}

impl LeakSample {
    pub fn pair(&self) -> (u8, u8) {
        (self.b0, self.b1)
    }
}

/// Sparse (set, offset, b0, b1) -> count histogram.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeakHistogram {
    cells: BTreeMap<(u8, u8, u8, u8), u64>,
}

impl LeakHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, set: usize, offset: usize, pair: (u8, u8)) {
        self.add_n(set, offset, pair, 1);
    }

    pub fn add_n(&mut self, set: usize, offset: usize, pair: (u8, u8), n: u64) {
        if n > 0 {
            *self.cells.entry((set as u8, offset as u8, pair.0, pair.1)).or_default() += n;
        }
    }

    pub fn merge(&mut self, other: &LeakHistogram) {
        for (k, v) in &other.cells {
            *self.cells.entry(*k).or_default() += v;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn count(&self, set: usize, offset: usize, pair: (u8, u8)) -> u64 {
        self.cells
            .get(&(set as u8, offset as u8, pair.0, pair.1))
            .copied()
            .unwrap_or(0)
    }

    /// All pairs seen at one (set, offset).
    pub fn cell(&self, set: usize, offset: usize) -> impl Iterator<Item = ((u8, u8), u64)> + '_ {
        let (s, o) = (set as u8, offset as u8);
        self.cells
            .range((s, o, 0, 0)..=(s, o, 255, 255))
            .map(|((_, _, b0, b1), c)| ((*b0, *b1), *c))
    }

    pub fn cell_total(&self, set: usize, offset: usize) -> u64 {
        self.cell(set, offset).map(|(_, c)| c).sum()
    }

    /// Most frequent pair at (set, offset); ties go to the lower pair.
    pub fn modal(&self, set: usize, offset: usize) -> Option<((u8, u8), u64)> {
        self.cell(set, offset).fold(None, |best, (p, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((p, c)),
        })
    }

    pub fn samples(&self) -> Vec<LeakSample> {
        self.cells
            .iter()
            .map(|((set, offset, b0, b1), count)| LeakSample {
                set: *set,
                offset: *offset,
                b0: *b0,
                b1: *b1,
                count: *count,
            })
            .collect()
    }

    /// Samples of one set, i.e. one line of the victim page.
    pub fn line_samples(&self, set: usize) -> Vec<LeakSample> {
        let s = set as u8;
        self.cells
            .range((s, 0, 0, 0)..=(s, 255, 255, 255))
            .map(|((set, offset, b0, b1), count)| LeakSample {
                set: *set,
                offset: *offset,
                b0: *b0,
                b1: *b1,
                count: *count,
            })
            .collect()
    }

    /// `set,offset,b0,b1,count` rows with a header.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for s in self.samples() {
            wr.serialize(s)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> csv::Result<Self> {
        let mut h = Self::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let s: LeakSample = row?;
            h.add_n(s.set as usize, s.offset as usize, s.pair(), s.count);
        }
        Ok(h)
    }
}

impl FromIterator<LeakSample> for LeakHistogram {
    fn from_iter<I: IntoIterator<Item = LeakSample>>(iter: I) -> Self {
        let mut h = Self::new();
        for s in iter {
            h.add_n(s.set as usize, s.offset as usize, s.pair(), s.count);
        }
        h
    }
}
