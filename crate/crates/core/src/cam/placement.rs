use crate::arch::{ArchSpec, OptMode};

/// Physical home of one `rows x cols` data tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileAssignment {
    pub row_tile: usize,
    pub col_tile: usize,
    pub wave: usize,
    pub bank: usize,
    pub mat: usize,
    pub array: usize,
    pub subarray: usize,
    pub row_offset: usize,
    pub rows_active: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPlan {
    pub rows: usize,
    pub cols: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
    /// Column tiles packed per subarray (1 without density packing).
    pub packing: usize,
    /// Subarrays holding data; equals the number of slots.
    pub subarrays: usize,
    /// Banks allocated per wave.
    pub banks: usize,
    /// Sequential rewrite rounds needed when the data exceeds capacity.
    pub waves: usize,
    pub mats_per_bank: usize,
    pub arrays_per_mat: usize,
    pub subarrays_per_array: usize,
    pub assignments: Vec<TileAssignment>,
}

impl PlacementPlan {
    pub fn subarrays_per_bank(&self) -> usize {
        self.mats_per_bank * self.arrays_per_mat * self.subarrays_per_array
    }

    /// Tiles per slot in order of increasing row offset.
    pub fn slot_of_tile(&self, tile: usize) -> (usize, usize) {
        (tile / self.packing, tile % self.packing)
    }
}

/// Decide where each tile of an `n_entries x d` dataset lives.
///
/// Base layout puts one tile per subarray. Density layout (only when the
/// whole dataset fits in one row tile) stacks `max(1, R / n_entries)`
/// column tiles in one subarray at row offsets `j * n_entries`. Slots fill
/// subarrays first, then arrays, mats and banks.
pub fn placement_plan(d: usize, n_entries: usize, arch: &ArchSpec, mode: OptMode) -> PlacementPlan {
    let h = &arch.hierarchy;
    place(
        d,
        n_entries,
        arch.rows() as usize,
        arch.cols() as usize,
        [
            h.mats_per_bank as usize,
            h.arrays_per_mat as usize,
            h.subarrays_per_array as usize,
        ],
        h.banks.map(|b| b as usize),
        mode.packs(),
    )
}

pub(crate) fn place(
    d: usize,
    n: usize,
    rows: usize,
    cols: usize,
    [t, a, s]: [usize; 3],
    banks: Option<usize>,
    pack: bool,
) -> PlacementPlan {
    let row_tiles = n.div_ceil(rows);
    let col_tiles = d.div_ceil(cols);
    let tiles = row_tiles * col_tiles;
    let packing = if pack && n <= rows { (rows / n).max(1) } else { 1 };
    let slots = tiles.div_ceil(packing);
    let spb = t * a * s;
    let needed = slots.div_ceil(spb);
    let (banks, waves) = match banks {
        None => (needed, 1),
        Some(b) => (b.min(needed), slots.div_ceil(b * spb)),
    };
    let per_wave = banks * spb;
    let mut assignments = Vec::with_capacity(tiles);
    for tile in 0..tiles {
        let (slot, j) = (tile / packing, tile % packing);
        let wave = slot / per_wave;
        let local = slot % per_wave;
        let (row_tile, col_tile) = (tile / col_tiles, tile % col_tiles);
        let (row_offset, rows_active) = if packing > 1 {
            (j * n, n)
        } else {
            (0, rows.min(n - row_tile * rows))
        };
        assignments.push(TileAssignment {
            row_tile,
            col_tile,
            wave,
            bank: local / spb,
            mat: local % spb / (a * s),
            array: local / s % a,
            subarray: local % s,
            row_offset,
            rows_active,
        });
    }
    PlacementPlan {
        rows,
        cols,
        row_tiles,
        col_tiles,
        packing,
        subarrays: slots,
        banks,
        waves,
        mats_per_bank: t,
        arrays_per_mat: a,
        subarrays_per_array: s,
        assignments,
    }
}
