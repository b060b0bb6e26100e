use crate::addr::{Addr, LINE_SIZE, NUM_SETS, NUM_WAYS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheLine {
    /// Base address of the cached line.
    pub tag: u64,
    pub data: [u8; LINE_SIZE],
    pub dirty: bool,
    pub valid: bool,
    /// 0 is most recently used. Only meaningful while `valid`.
    pub lru_rank: u8,
}

impl Default for CacheLine {
    fn default() -> Self {
        Self {
            tag: 0,
            data: [0; LINE_SIZE],
            dirty: false,
            valid: false,
            lru_rank: 0,
        }
    }
}

/// 32 KiB, 8-way, virtually indexed L1 data cache with true LRU.
///
/// Within a set the ranks of valid lines are always `0..n_valid`, so the
/// line holding rank `n_valid - 1` is the replacement victim once the set
/// is full.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct L1DCache {
    sets: Vec<[CacheLine; NUM_WAYS]>,
}

impl Default for L1DCache {
    fn default() -> Self {
        Self::new()
    }
}

impl L1DCache {
    pub fn new() -> Self {
        Self {
            sets: (0..NUM_SETS)
                .map(|_| std::array::from_fn(|_| CacheLine::default()))
                .collect(),
        }
    }

    pub fn set(&self, index: usize) -> &[CacheLine; NUM_WAYS] {
        &self.sets[index]
    }

    pub fn line(&self, set: usize, way: usize) -> &CacheLine {
        &self.sets[set][way]
    }

    pub(crate) fn line_mut(&mut self, set: usize, way: usize) -> &mut CacheLine {
        &mut self.sets[set][way]
    }

    pub fn lookup(&self, line_base: u64) -> Option<usize> {
        let set = Addr(line_base).set_index();
        self.sets[set]
            .iter()
            .position(|l| l.valid && l.tag == line_base)
    }

    pub fn contains(&self, addr: Addr) -> bool {
        self.lookup(addr.line_base()).is_some()
    }

    /// Mark `way` most recently used.
    pub(crate) fn touch(&mut self, set: usize, way: usize) {
        let lines = &mut self.sets[set];
        let rank = lines[way].lru_rank;
        for (i, l) in lines.iter_mut().enumerate() {
            if i != way && l.valid && l.lru_rank < rank {
                l.lru_rank += 1;
            }
        }
        lines[way].lru_rank = 0;
    }

    /// The way a new line for `set` would be placed in: the lowest invalid
    /// way, otherwise the least recently used one.
    pub fn replacement_way(&self, set: usize) -> usize {
        let lines = &self.sets[set];
        if let Some(w) = lines.iter().position(|l| !l.valid) {
            return w;
        }
        lines
            .iter()
            .enumerate()
            .max_by_key(|(_, l)| l.lru_rank)
            .map(|(w, _)| w)
            .expect("a set always has ways")
    }

    /// Install a clean line, returning whatever valid line it displaced.
    pub(crate) fn install(&mut self, line_base: u64, data: [u8; LINE_SIZE]) -> (usize, Option<CacheLine>) {
        let set = Addr(line_base).set_index();
        let way = self.replacement_way(set);
        let n_valid = self.sets[set].iter().filter(|l| l.valid).count() as u8;
        let old = std::mem::take(&mut self.sets[set][way]);
        let displaced = if old.valid { Some(old) } else { None };
        // A fresh way behaves as if it sat just below every valid line.
        self.sets[set][way] = CacheLine {
            tag: line_base,
            data,
            dirty: false,
            valid: true,
            lru_rank: match &displaced {
                Some(d) => d.lru_rank,
                None => n_valid,
            },
        };
        self.touch(set, way);
        (way, displaced)
    }

    pub(crate) fn invalidate(&mut self, set: usize, way: usize) -> CacheLine {
        let old = std::mem::take(&mut self.sets[set][way]);
        if old.valid {
            for l in self.sets[set].iter_mut() {
                if l.valid && l.lru_rank > old.lru_rank {
                    l.lru_rank -= 1;
                }
            }
        }
        old
    }

    /// Invalidate everything, returning the lines that were dirty.
    pub(crate) fn invalidate_all(&mut self) -> Vec<CacheLine> {
        let mut dirty = Vec::new();
        for set in self.sets.iter_mut() {
            for l in set.iter_mut() {
                let old = std::mem::take(l);
                if old.valid && old.dirty {
                    dirty.push(old);
                }
            }
        }
        dirty
    }

    pub fn valid_lines(&self) -> impl Iterator<Item = (usize, usize, &CacheLine)> {
        self.sets.iter().enumerate().flat_map(|(s, ways)| {
            ways.iter()
                .enumerate()
                .filter(|(_, l)| l.valid)
                .map(move |(w, l)| (s, w, l))
        })
    }

    /// Check the structural invariants: distinct dense LRU ranks per set,
    /// dirty implies valid, lines live in their own set.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (s, ways) in self.sets.iter().enumerate() {
            let mut ranks: Vec<u8> = ways.iter().filter(|l| l.valid).map(|l| l.lru_rank).collect();
            ranks.sort_unstable();
            if ranks.iter().enumerate().any(|(i, &r)| r as usize != i) {
                return Err(format!("set {s}: lru ranks {ranks:?} are not dense"));
            }
            for l in ways {
                if l.dirty && !l.valid {
                    return Err(format!("set {s}: dirty line {:#x} is invalid", l.tag));
                }
                if l.valid && Addr(l.tag).set_index() != s {
                    return Err(format!("line {:#x} stored in set {s}", l.tag));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(set: usize, n: u64) -> u64 {
        Addr::from_parts(n * 4096, set, 0).0
    }

    #[test]
    fn fills_invalid_ways_before_evicting() {
        let mut c = L1DCache::new();
        for n in 0..8 {
            let (_, displaced) = c.install(line(3, n), [n as u8; 64]);
            assert!(displaced.is_none());
        }
        let (_, displaced) = c.install(line(3, 8), [8; 64]);
        assert_eq!(displaced.unwrap().tag, line(3, 0));
        c.check_invariants().unwrap();
    }

    #[test]
    fn touch_protects_line_from_eviction() {
        let mut c = L1DCache::new();
        for n in 0..8 {
            c.install(line(0, n), [0; 64]);
        }
        let way = c.lookup(line(0, 0)).unwrap();
        c.touch(0, way);
        let (_, displaced) = c.install(line(0, 9), [0; 64]);
        assert_eq!(displaced.unwrap().tag, line(0, 1));
        c.check_invariants().unwrap();
    }

    #[test]
    fn invalidate_keeps_ranks_dense() {
        let mut c = L1DCache::new();
        for n in 0..5 {
            c.install(line(7, n), [0; 64]);
        }
        let way = c.lookup(line(7, 2)).unwrap();
        c.invalidate(7, way);
        c.check_invariants().unwrap();
        assert!(c.lookup(line(7, 2)).is_none());
    }
}
