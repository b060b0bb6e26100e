use std::collections::BTreeMap;

use super::LeakSample;

/// A line rebuilt from overlapping byte pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stitched {
    /// `None` where no pair covered the byte.
    pub bytes: Vec<Option<u8>>,
    /// True where the pairs on both sides of the byte agree on it.
    pub agree: Vec<bool>,
}

impl Stitched {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Modal pair per offset: higher count wins, then the lower pair.
fn modal_pairs(samples: &[LeakSample]) -> BTreeMap<usize, ((u8, u8), u64)> {
    let mut best: BTreeMap<usize, ((u8, u8), u64)> = BTreeMap::new();
    for s in samples {
        let cand = (s.pair(), s.count);
        best.entry(s.offset as usize)
            .and_modify(|b| {
                if cand.1 > b.1 || (cand.1 == b.1 && cand.0 < b.0) {
                    *b = cand;
                }
            })
            .or_insert(cand);
    }
    best
}

/// Chain the pairs sampled at offsets 0..=62 of one line into its bytes.
///
/// Byte `j` is seen as the leading byte of the pair at `j` and the trailing
/// byte of the pair at `j - 1`. When both exist and differ, the pair with
/// the higher count decides, then the lower byte value, and the byte is
/// not flagged as agreeing.
pub fn stitch(samples: &[LeakSample]) -> Stitched {
    let pairs = modal_pairs(samples);
    let Some(&last) = pairs.keys().next_back() else {
        return Stitched::default();
    };
    let len = last + 2;
    let mut out = Stitched {
        bytes: vec![None; len],
        agree: vec![false; len],
    };
    for j in 0..len {
        let lead = pairs.get(&j).map(|((b0, _), c)| (*b0, *c));
        let trail = j.checked_sub(1).and_then(|k| pairs.get(&k)).map(|((_, b1), c)| (*b1, *c));
        let (byte, agree) = match (trail, lead) {
            (Some((a, _)), Some((b, _))) if a == b => (Some(a), true),
            (Some((a, ca)), Some((b, cb))) => {
                let pick = if ca > cb || (ca == cb && a < b) { a } else { b };
                (Some(pick), false)
            }
            (Some((a, _)), None) | (None, Some((a, _))) => (Some(a), false),
            (None, None) => (None, false),
        };
        out.bytes[j] = byte;
        out.agree[j] = agree;
    }
    out
}
