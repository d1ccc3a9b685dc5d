//! Mutable partition state for the samplers: clusters live in reusable
//! slots, each carrying its member list and likelihood statistics.

use crate::esc::Occupancy;
use crate::likelihood::{ClusterStats, LikTables, RecordTable};
use crate::partition::Partition;

#[derive(Debug, Clone)]
pub struct Slot {
    pub members: Vec<usize>,
    pub stats: ClusterStats,
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    labels: Vec<usize>,
    pos: Vec<usize>,
    slots: Vec<Slot>,
    free: Vec<usize>,
    active: Vec<usize>,
    active_pos: Vec<usize>,
    // occupancy[s] = number of clusters of size s
    occupancy: Vec<usize>,
}

impl ClusterState {
    pub fn new(partition: &Partition, records: &RecordTable, tables: &LikTables) -> Self {
        let n = partition.n();
        let k = partition.k();
        let mut state = Self {
            labels: vec![0; n],
            pos: vec![0; n],
            slots: (0..k)
                .map(|_| Slot {
                    members: Vec::new(),
                    stats: ClusterStats::new(records.l()),
                })
                .collect(),
            free: Vec::new(),
            active: (0..k).collect(),
            active_pos: (0..k).collect(),
            occupancy: vec![0; n + 2],
        };
        for i in 0..n {
            let c = partition.cluster_of(i);
            state.labels[i] = c;
            state.pos[i] = state.slots[c].members.len();
            state.slots[c].members.push(i);
            state.slots[c].stats.add(records.row(i), tables, records.theta());
        }
        for &s in partition.sizes() {
            state.occupancy[s] += 1;
        }
        state
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn slot_of(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn slot(&self, c: usize) -> &Slot {
        &self.slots[c]
    }

    pub fn size(&self, c: usize) -> usize {
        self.slots[c].members.len()
    }

    /// Active slot ids in a deterministic order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn max_size(&self) -> usize {
        self.occupancy.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    pub fn occupancy(&self) -> Occupancy {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| (s, c))
            .collect()
    }

    pub fn stats(&self) -> impl Iterator<Item = &ClusterStats> {
        self.active.iter().map(|&c| &self.slots[c].stats)
    }

    pub fn loglik(&self) -> f64 {
        self.stats().map(ClusterStats::loglik).sum()
    }

    pub fn refresh(&mut self, tables: &LikTables, records: &RecordTable) {
        for &c in &self.active {
            self.slots[c].stats.refresh(tables, records.theta());
        }
    }

    /// Detaches record `i`. Its label is left dangling until `insert`.
    pub fn remove(&mut self, i: usize, records: &RecordTable, tables: &LikTables) {
        let c = self.labels[i];
        let slot = &mut self.slots[c];
        let old = slot.members.len();
        let p = self.pos[i];
        slot.members.swap_remove(p);
        if p < slot.members.len() {
            self.pos[slot.members[p]] = p;
        }
        slot.stats.remove(records.row(i), tables, records.theta());
        self.occupancy[old] -= 1;
        if old > 1 {
            self.occupancy[old - 1] += 1;
        } else {
            let ap = self.active_pos[c];
            self.active.swap_remove(ap);
            if ap < self.active.len() {
                self.active_pos[self.active[ap]] = ap;
            }
            self.free.push(c);
        }
    }

    /// Attaches a detached record to slot `c`, or to a fresh slot if `None`.
    /// Returns the slot used.
    pub fn insert(&mut self, i: usize, target: Option<usize>, records: &RecordTable, tables: &LikTables) -> usize {
        let c = match target {
            Some(c) => c,
            None => {
                let c = match self.free.pop() {
                    Some(c) => c,
                    None => {
                        self.slots.push(Slot {
                            members: Vec::new(),
                            stats: ClusterStats::new(records.l()),
                        });
                        self.active_pos.push(0);
                        self.slots.len() - 1
                    }
                };
                self.active_pos[c] = self.active.len();
                self.active.push(c);
                c
            }
        };
        let slot = &mut self.slots[c];
        let old = slot.members.len();
        self.labels[i] = c;
        self.pos[i] = old;
        slot.members.push(i);
        slot.stats.add(records.row(i), tables, records.theta());
        if old > 0 {
            self.occupancy[old] -= 1;
        }
        self.occupancy[old + 1] += 1;
        c
    }

    pub fn partition(&self) -> Partition {
        Partition::from_allocations(&self.labels).expect("state covers at least one record")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_moves_agree_with_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 30;
        let codes = (0..n * 2).map(|_| rng.random_range(0..4u32)).collect();
        let records = RecordTable::new(n, vec![4, 4], codes).unwrap();
        let tables = LikTables::new(&records, &[0.1, 0.2]);
        let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let mut state = ClusterState::new(&Partition::from_allocations(&z).unwrap(), &records, &tables);
        for _ in 0..2000 {
            let i = rng.random_range(0..n);
            state.remove(i, &records, &tables);
            let target = if rng.random_bool(0.1) || state.k() == 0 {
                None
            } else {
                Some(state.active()[rng.random_range(0..state.k())])
            };
            state.insert(i, target, &records, &tables);
        }
        let p = state.partition();
        let rebuilt = ClusterState::new(&p, &records, &tables);
        assert_eq!(state.k(), p.k());
        assert_eq!(state.occupancy(), *p.occupancy());
        assert_eq!(state.max_size(), p.max_size());
        assert!((state.loglik() - rebuilt.loglik()).abs() < 1e-9);
        let full = crate::likelihood::partition_loglik(&records, &p, &[0.1, 0.2]).unwrap();
        assert!((state.loglik() - full).abs() < 1e-9);
    }
}
