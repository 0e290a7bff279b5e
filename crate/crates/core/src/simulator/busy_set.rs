//! Set of busy servers supporting lowest-idle lookup, insertion, and uniform
//! random removal, all without per-server timers.

const WORD: usize = 64;

/// Busy servers among `1..=capacity`.
///
/// Occupancy is a bit array with one summary bit per 64-server block (set
/// when the block is full), so the lowest idle server is found by skipping
/// full blocks a word at a time. A dense list of busy indices with a reverse
/// map gives O(1) uniform selection and swap-removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusySet {
    bits: Vec<u64>,
    full_blocks: Vec<u64>,
    busy_list: Vec<usize>,
    // position of each server in `busy_list`, or `IDLE`; indexed by server - 1
    position: Vec<usize>,
}

const IDLE: usize = usize::MAX;

impl BusySet {
    /// Empty set able to hold at least `capacity` servers before growing.
    pub fn with_capacity(capacity: usize) -> Self {
        let blocks = capacity.max(1).div_ceil(WORD);
        Self {
            bits: vec![0; blocks],
            full_blocks: vec![0; blocks.div_ceil(WORD)],
            busy_list: Vec::with_capacity(capacity),
            position: vec![IDLE; blocks * WORD],
        }
    }

    pub fn capacity(&self) -> usize {
        self.bits.len() * WORD
    }

    pub fn len(&self) -> usize {
        self.busy_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.busy_list.is_empty()
    }

    pub fn busy_list(&self) -> &[usize] {
        &self.busy_list
    }

    pub fn contains(&self, server: usize) -> bool {
        server >= 1
            && server <= self.capacity()
            && self.bits[(server - 1) / WORD] & (1 << ((server - 1) % WORD)) != 0
    }

    /// Smallest server index whose bit is clear. Returns `capacity + 1` when
    /// every tracked server is busy.
    pub fn lowest_idle(&self) -> usize {
        for (s, &summary) in self.full_blocks.iter().enumerate() {
            if summary != u64::MAX {
                let block = s * WORD + (!summary).trailing_zeros() as usize;
                if block >= self.bits.len() {
                    break;
                }
                let bit = (!self.bits[block]).trailing_zeros() as usize;
                return block * WORD + bit + 1;
            }
        }
        self.capacity() + 1
    }

    fn grow_to(&mut self, capacity: usize) {
        let blocks = capacity.div_ceil(WORD);
        if blocks <= self.bits.len() {
            return;
        }
        self.bits.resize(blocks, 0);
        self.full_blocks.resize(blocks.div_ceil(WORD), 0);
        self.position.resize(blocks * WORD, IDLE);
    }

    /// Marks `server` busy, doubling capacity if it lies beyond it.
    pub fn insert(&mut self, server: usize) {
        assert!(server >= 1, "servers are numbered from 1");
        if server > self.capacity() {
            self.grow_to((2 * self.capacity()).max(server));
        }
        let i = server - 1;
        let (block, bit) = (i / WORD, i % WORD);
        assert!(self.bits[block] & (1 << bit) == 0, "server {server} already busy");
        self.bits[block] |= 1 << bit;
        if self.bits[block] == u64::MAX {
            self.full_blocks[block / WORD] |= 1 << (block % WORD);
        }
        self.position[i] = self.busy_list.len();
        self.busy_list.push(server);
        self.debug_check();
    }

    /// Frees the server stored at `slot` of the busy list and returns it.
    pub fn remove_at(&mut self, slot: usize) -> usize {
        let server = self.busy_list.swap_remove(slot);
        if let Some(&moved) = self.busy_list.get(slot) {
            self.position[moved - 1] = slot;
        }
        let i = server - 1;
        let (block, bit) = (i / WORD, i % WORD);
        self.bits[block] &= !(1 << bit);
        self.full_blocks[block / WORD] &= !(1 << (block % WORD));
        self.position[i] = IDLE;
        self.debug_check();
        server
    }

    pub fn remove(&mut self, server: usize) -> bool {
        if !self.contains(server) {
            return false;
        }
        self.remove_at(self.position[server - 1]);
        true
    }

    fn debug_check(&self) {
        debug_assert_eq!(
            self.bits.iter().map(|w| w.count_ones() as usize).sum::<usize>(),
            self.busy_list.len()
        );
    }

    /// Full consistency check of every internal index; O(capacity).
    pub fn check_invariants(&self) -> bool {
        let popcount: usize = self.bits.iter().map(|w| w.count_ones() as usize).sum();
        if popcount != self.busy_list.len() {
            return false;
        }
        let list_ok = self
            .busy_list
            .iter()
            .enumerate()
            .all(|(slot, &server)| self.contains(server) && self.position[server - 1] == slot);
        let idle_ok = (1..=self.capacity())
            .filter(|&s| !self.contains(s))
            .all(|s| self.position[s - 1] == IDLE);
        let summary_ok = self.bits.iter().enumerate().all(|(b, &w)| {
            let flagged = self.full_blocks[b / WORD] & (1 << (b % WORD)) != 0;
            flagged == (w == u64::MAX)
        });
        list_ok && idle_ok && summary_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with(busy: &[usize]) -> BusySet {
        let mut set = BusySet::with_capacity(8);
        for &s in busy {
            set.insert(s);
        }
        set
    }

    #[test]
    fn lowest_idle_examples() {
        assert_eq!(with(&[]).lowest_idle(), 1);
        assert_eq!(with(&[1, 2, 3]).lowest_idle(), 4);
        assert_eq!(with(&[1, 3]).lowest_idle(), 2);
    }

    #[test]
    fn skips_full_blocks() {
        let all: Vec<usize> = (1..=200).collect();
        let mut set = with(&all);
        assert_eq!(set.lowest_idle(), 201);
        set.remove(130);
        assert_eq!(set.lowest_idle(), 130);
        set.remove(7);
        assert_eq!(set.lowest_idle(), 7);
        assert!(set.check_invariants());
    }

    #[test]
    fn full_capacity_reports_next_server() {
        let mut set = BusySet::with_capacity(64);
        for s in 1..=64 {
            set.insert(s);
        }
        assert_eq!(set.capacity(), 64);
        assert_eq!(set.lowest_idle(), 65);
        set.insert(65);
        assert_eq!(set.capacity(), 128);
        assert_eq!(set.lowest_idle(), 66);
    }

    #[test]
    fn removal_keeps_reverse_map() {
        let mut set = with(&[4, 9, 2, 7]);
        assert_eq!(set.remove_at(0), 4);
        assert_eq!(set.busy_list(), &[7, 9, 2]);
        assert!(set.remove(2));
        assert!(!set.remove(2));
        assert!(set.check_invariants());
        assert_eq!(set.len(), 2);
    }

    proptest! {
        // brute-force oracle: linear scan for the first clear index
        #[test]
        fn lowest_idle_matches_linear_scan(
            ops in prop::collection::vec((any::<bool>(), 1usize..400), 0..600)
        ) {
            let mut set = BusySet::with_capacity(16);
            let mut naive = vec![false; 2000];
            for (insert, server) in ops {
                if insert && !naive[server] {
                    set.insert(server);
                    naive[server] = true;
                } else if !insert && naive[server] {
                    prop_assert!(set.remove(server));
                    naive[server] = false;
                }
                let scan = (1..).find(|&s| !naive[s]).unwrap();
                prop_assert_eq!(set.lowest_idle(), scan);
            }
            prop_assert!(set.check_invariants());
            prop_assert_eq!(set.len(), naive.iter().filter(|&&b| b).count());
        }
    }
}
