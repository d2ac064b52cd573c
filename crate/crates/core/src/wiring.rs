//! Binary-synapse connectivity. Every neuron has `m` branches of `k`
//! synapse slots; each slot is driven by one of `d` input lines. The
//! integer weight `w[n][j][i]` is the number of slots on branch `j` that
//! listen to line `i`, so every branch row sums to `k`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// N
    pub neurons: usize,
    /// m
    pub branches: usize,
    /// k
    pub synapses_per_branch: usize,
    /// d
    pub inputs: usize,
}

impl Geometry {
    pub fn new(
        neurons: usize,
        branches: usize,
        synapses_per_branch: usize,
        inputs: usize,
    ) -> Result<Self> {
        if neurons == 0 || branches == 0 || synapses_per_branch == 0 || inputs == 0 {
            return Err(param(format!(
                "geometry needs N, m, k, d >= 1 (got {neurons}, {branches}, {synapses_per_branch}, {inputs})"
            )));
        }
        if synapses_per_branch > u16::MAX as usize || inputs > u32::MAX as usize {
            return Err(param("geometry too large"));
        }
        Ok(Self {
            neurons,
            branches,
            synapses_per_branch,
            inputs,
        })
    }

    pub fn with_neurons(self, neurons: usize) -> Self {
        Self { neurons, ..self }
    }

    pub fn n_branches(&self) -> usize {
        self.neurons * self.branches
    }

    pub fn n_slots(&self) -> usize {
        self.neurons * self.branches * self.synapses_per_branch
    }

    #[inline]
    pub fn branch_index(&self, neuron: usize, branch: usize) -> usize {
        neuron * self.branches + branch
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wiring {
    geometry: Geometry,
    /// Input line of every slot, indexed `(n * m + j) * k + p`.
    slot_lines: Vec<u32>,
    /// `w[n][j][i]`, indexed `(n * m + j) * d + i`.
    counts: Vec<u16>,
}

impl Wiring {
    /// Each branch draws its `k` lines uniformly with replacement.
    pub fn random<R: Rng + ?Sized>(geometry: Geometry, rng: &mut R) -> Self {
        let slot_lines = (0..geometry.n_slots())
            .map(|_| rng.random_range(0..geometry.inputs) as u32)
            .collect();
        Self::from_slot_lines(geometry, slot_lines).expect("lines drawn in range")
    }

    pub fn from_slot_lines(geometry: Geometry, slot_lines: Vec<u32>) -> Result<Self> {
        if slot_lines.len() != geometry.n_slots() {
            return Err(Error::Integrity(format!(
                "expected {} slots, got {}",
                geometry.n_slots(),
                slot_lines.len()
            )));
        }
        let mut counts = vec![0u16; geometry.n_branches() * geometry.inputs];
        let k = geometry.synapses_per_branch;
        for (s, &line) in slot_lines.iter().enumerate() {
            let line = line as usize;
            if line >= geometry.inputs {
                return Err(Error::Integrity(format!("slot {s} uses line {line} >= d")));
            }
            counts[(s / k) * geometry.inputs + line] += 1;
        }
        Ok(Self {
            geometry,
            slot_lines,
            counts,
        })
    }

    /// Builds a wiring from per-branch count rows, assigning slots in
    /// ascending line order.
    pub fn from_counts(geometry: Geometry, counts: &[Vec<Vec<u16>>]) -> Result<Self> {
        if counts.len() != geometry.neurons {
            return Err(Error::Integrity(format!(
                "expected {} neurons, got {}",
                geometry.neurons,
                counts.len()
            )));
        }
        let mut slot_lines = Vec::with_capacity(geometry.n_slots());
        for (n, neuron) in counts.iter().enumerate() {
            if neuron.len() != geometry.branches {
                return Err(Error::Integrity(format!(
                    "neuron {n}: expected {} branches",
                    geometry.branches
                )));
            }
            for (j, row) in neuron.iter().enumerate() {
                if row.len() != geometry.inputs {
                    return Err(Error::Integrity(format!(
                        "neuron {n} branch {j}: expected {} inputs",
                        geometry.inputs
                    )));
                }
                let sum: usize = row.iter().map(|&w| w as usize).sum();
                if sum != geometry.synapses_per_branch {
                    return Err(Error::Integrity(format!(
                        "neuron {n} branch {j}: row sums to {sum}, expected k={}",
                        geometry.synapses_per_branch
                    )));
                }
                for (i, &w) in row.iter().enumerate() {
                    slot_lines.extend(std::iter::repeat_n(i as u32, w as usize));
                }
            }
        }
        Self::from_slot_lines(geometry, slot_lines)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn slot_lines(&self) -> &[u32] {
        &self.slot_lines
    }

    #[inline]
    pub fn weight(&self, neuron: usize, branch: usize, line: usize) -> u16 {
        self.counts[self.geometry.branch_index(neuron, branch) * self.geometry.inputs + line]
    }

    pub fn row(&self, neuron: usize, branch: usize) -> &[u16] {
        let d = self.geometry.inputs;
        let b = self.geometry.branch_index(neuron, branch);
        &self.counts[b * d..(b + 1) * d]
    }

    /// Slot lines of one branch.
    pub fn branch_slots(&self, neuron: usize, branch: usize) -> &[u32] {
        let k = self.geometry.synapses_per_branch;
        let b = self.geometry.branch_index(neuron, branch);
        &self.slot_lines[b * k..(b + 1) * k]
    }

    /// Checks that the slot table and count matrix agree and every row sums
    /// to `k`.
    pub fn check_invariants(&self) -> Result<()> {
        let g = &self.geometry;
        for n in 0..g.neurons {
            for j in 0..g.branches {
                let row = self.row(n, j);
                let sum: usize = row.iter().map(|&w| w as usize).sum();
                if sum != g.synapses_per_branch {
                    return Err(Error::Integrity(format!(
                        "neuron {n} branch {j}: row sums to {sum}, expected k={}",
                        g.synapses_per_branch
                    )));
                }
                let mut seen = vec![0u16; g.inputs];
                for &l in self.branch_slots(n, j) {
                    seen[l as usize] += 1;
                }
                if seen != row {
                    return Err(Error::Integrity(format!(
                        "neuron {n} branch {j}: slot table disagrees with weights"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Moves one slot of `(neuron, branch)` from line `from` to line `to`.
    /// The lowest-indexed slot on `from` is the one that moves.
    pub fn swap(&mut self, neuron: usize, branch: usize, from: usize, to: usize) -> Result<()> {
        let g = self.geometry;
        if from >= g.inputs || to >= g.inputs {
            return Err(param(format!("line out of range ({from} -> {to})")));
        }
        let k = g.synapses_per_branch;
        let b = g.branch_index(neuron, branch);
        let slot = self.slot_lines[b * k..(b + 1) * k]
            .iter()
            .position(|&l| l as usize == from)
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "neuron {neuron} branch {branch} has no slot on line {from}"
                ))
            })?;
        self.slot_lines[b * k + slot] = to as u32;
        self.counts[b * g.inputs + from] -= 1;
        self.counts[b * g.inputs + to] += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> WiringSnapshot {
        let g = &self.geometry;
        WiringSnapshot {
            d: g.inputs,
            m: g.branches,
            k: g.synapses_per_branch,
            n: g.neurons,
            neurons: (0..g.neurons)
                .map(|n| (0..g.branches).map(|j| self.row(n, j).to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_snapshot(s: &WiringSnapshot) -> Result<Self> {
        let g = Geometry::new(s.n, s.m, s.k, s.d).map_err(|e| Error::Integrity(e.to_string()))?;
        Self::from_counts(g, &s.neurons)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.snapshot())?;
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let snap: WiringSnapshot = serde_json::from_str(&text)?;
        Self::from_snapshot(&snap)
    }
}

/// JSON form of a wiring: geometry header plus `neurons[n][j][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiringSnapshot {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub neurons: Vec<Vec<Vec<u16>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn random_wiring_respects_row_sums() {
        let g = Geometry::new(5, 25, 4, 100).unwrap();
        let w = Wiring::random(g, &mut stream(1, "w", 0));
        w.check_invariants().unwrap();
        assert!(w.weight(0, 0, 0) <= 4);
    }

    #[test]
    fn swap_moves_one_slot() {
        let g = Geometry::new(1, 2, 3, 4).unwrap();
        let mut w = Wiring::from_slot_lines(g, vec![0, 0, 1, 2, 3, 3]).unwrap();
        w.swap(0, 0, 0, 3).unwrap();
        assert_eq!(w.row(0, 0), &[1, 1, 0, 1]);
        assert_eq!(w.branch_slots(0, 0), &[3, 0, 1]);
        w.check_invariants().unwrap();
        assert!(w.swap(0, 1, 0, 1).is_err());
        // degenerate swap onto itself
        w.swap(0, 1, 3, 3).unwrap();
        assert_eq!(w.row(0, 1), &[0, 0, 1, 2]);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = Geometry::new(3, 5, 4, 20).unwrap();
        let w = Wiring::random(g, &mut stream(2, "w", 0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        w.save_json(&p).unwrap();
        let back = Wiring::load_json(&p).unwrap();
        assert_eq!(back.snapshot(), w.snapshot());
    }

    #[test]
    fn snapshot_with_bad_rows_is_rejected() {
        let mut s =
            Wiring::random(Geometry::new(1, 2, 2, 3).unwrap(), &mut stream(3, "w", 0)).snapshot();
        s.neurons[0][1] = vec![1, 0, 0];
        assert!(matches!(
            Wiring::from_snapshot(&s),
            Err(Error::Integrity(_))
        ));
    }
}
