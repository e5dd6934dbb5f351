//! Cluster bookkeeping for the Pólya-urn updates of the density samplers.

/// Distinct latent values with their multiplicities and current partition
/// cell. Cluster ids are dense and may be renumbered when a cluster empties.
#[derive(Debug, Clone)]
pub(crate) struct Urn<T> {
    pub values: Vec<T>,
    pub counts: Vec<usize>,
    /// Flat partition cell of each value under the current K.
    pub cells: Vec<usize>,
    /// Cluster id of each event; `usize::MAX` while detached.
    pub assign: Vec<usize>,
}

pub(crate) const DETACHED: usize = usize::MAX;

impl<T: Copy> Urn<T> {
    pub fn new(n: usize) -> Self {
        Urn {
            values: Vec::new(),
            counts: Vec::new(),
            cells: Vec::new(),
            assign: vec![DETACHED; n],
        }
    }

    pub fn clusters(&self) -> usize {
        self.values.len()
    }

    /// Takes event `i` out of its cluster, dropping the cluster if it empties.
    pub fn detach(&mut self, i: usize) {
        let c = self.assign[i];
        if c == DETACHED {
            return;
        }
        self.assign[i] = DETACHED;
        self.counts[c] -= 1;
        if self.counts[c] == 0 {
            let last = self.values.len() - 1;
            self.values.swap_remove(c);
            self.counts.swap_remove(c);
            self.cells.swap_remove(c);
            if c != last {
                for a in self.assign.iter_mut().filter(|a| **a == last) {
                    *a = c;
                }
            }
        }
    }

    pub fn join(&mut self, i: usize, cluster: usize) {
        self.assign[i] = cluster;
        self.counts[cluster] += 1;
    }

    pub fn open(&mut self, i: usize, value: T, cell: usize) {
        self.values.push(value);
        self.counts.push(1);
        self.cells.push(cell);
        self.assign[i] = self.values.len() - 1;
    }

    pub fn relabel_cells(&mut self, cell_of: impl Fn(T) -> usize) {
        for (cell, v) in self.cells.iter_mut().zip(&self.values) {
            *cell = cell_of(*v);
        }
    }

    /// Per-event latent values.
    pub fn per_event(&self) -> Vec<T> {
        self.assign.iter().map(|&c| self.values[c]).collect()
    }

    /// Event counts per flat cell, over `cells_total` cells.
    pub fn cell_counts(&self, cells_total: usize) -> Vec<usize> {
        let mut out = vec![0; cells_total];
        for (cell, count) in self.cells.iter().zip(&self.counts) {
            out[*cell] += count;
        }
        out
    }
}
