//! Bit-chunk occupancy voxel grid with open-addressed spatial hashing.
//!
//! Occupancy is stored per 8×8×8 voxel block as a 512-bit mask, one chunk
//! per block, all chunks in one contiguous open-addressed table. The grid
//! answers point-membership queries and overlap ratios between a stored
//! scan and a posed source cloud; it does no nearest-neighbor work.

use crate::error::{Error, Result};
use crate::se3::Pose;
use nalgebra::Vector3;

pub const DEFAULT_RESOLUTION: f64 = 0.5;

const LOAD_FACTOR: f64 = 0.75;
const INITIAL_SLOTS: usize = 64;
/// Reserved chunk x-coordinate marking an unused slot. A real chunk at
/// x = i32::MIN would need points beyond ±10^9 voxels from the origin;
/// insertion asserts the coordinate never occurs.
const EMPTY_SENTINEL: i32 = i32::MIN;

/// One 8×8×8 voxel block; bit index = ix + 8·iy + 64·iz.
#[derive(Clone, Debug)]
pub struct OccupancyChunk {
    pub coord: [i32; 3],
    pub bits: [u64; 8],
}

impl OccupancyChunk {
    fn empty() -> Self {
        OccupancyChunk { coord: [EMPTY_SENTINEL; 3], bits: [0; 8] }
    }

    fn is_empty(&self) -> bool {
        self.coord[0] == EMPTY_SENTINEL
    }

    /// Sets the bit for intra-chunk voxel (ix, iy, iz); returns true if it
    /// was previously clear.
    pub fn set(&mut self, ix: u32, iy: u32, iz: u32) -> bool {
        let idx = Self::bit_index(ix, iy, iz);
        let word = &mut self.bits[(idx >> 6) as usize];
        let mask = 1u64 << (idx & 63);
        let fresh = *word & mask == 0;
        *word |= mask;
        fresh
    }

    pub fn test(&self, ix: u32, iy: u32, iz: u32) -> bool {
        let idx = Self::bit_index(ix, iy, iz);
        self.bits[(idx >> 6) as usize] & (1u64 << (idx & 63)) != 0
    }

    fn bit_index(ix: u32, iy: u32, iz: u32) -> u32 {
        debug_assert!(ix < 8 && iy < 8 && iz < 8);
        ix + 8 * iy + 64 * iz
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    resolution: f64,
    table: Vec<OccupancyChunk>,
    chunk_count: usize,
    occupied_voxel_count: usize,
}

fn spatial_hash(coord: [i32; 3]) -> u64 {
    let h = (coord[0] as i64).wrapping_mul(73_856_093)
        ^ (coord[1] as i64).wrapping_mul(19_349_663)
        ^ (coord[2] as i64).wrapping_mul(83_492_791);
    h as u64
}

fn voxel_of(p: &Vector3<f64>, resolution: f64) -> [i32; 3] {
    [
        (p.x / resolution).floor() as i32,
        (p.y / resolution).floor() as i32,
        (p.z / resolution).floor() as i32,
    ]
}

impl OccupancyGrid {
    /// Builds a grid whose occupied voxels are exactly the voxels
    /// floor(p/resolution) of the input points.
    pub fn build(points: &[Vector3<f64>], resolution: f64) -> Result<OccupancyGrid> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidResolution(resolution));
        }
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut grid = OccupancyGrid {
            resolution,
            table: (0..INITIAL_SLOTS).map(|_| OccupancyChunk::empty()).collect(),
            chunk_count: 0,
            occupied_voxel_count: 0,
        };
        for p in points {
            grid.insert_voxel(voxel_of(p, resolution));
        }
        Ok(grid)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn occupied_voxel_count(&self) -> usize {
        self.occupied_voxel_count
    }

    pub fn chunk_count(&self) -> usize {
        self.chunk_count
    }

    /// True iff the voxel containing the point is occupied.
    pub fn query(&self, p: &Vector3<f64>) -> bool {
        let v = voxel_of(p, self.resolution);
        let chunk = [v[0].div_euclid(8), v[1].div_euclid(8), v[2].div_euclid(8)];
        let slot = self.find_slot(chunk);
        if self.table[slot].is_empty() {
            return false;
        }
        self.table[slot].test(
            v[0].rem_euclid(8) as u32,
            v[1].rem_euclid(8) as u32,
            v[2].rem_euclid(8) as u32,
        )
    }

    /// Fraction of source points that land in occupied voxels after
    /// applying the pose.
    pub fn overlap(&self, source: &[Vector3<f64>], pose: &Pose) -> Result<f64> {
        self.overlap_strided(source, pose, 1)
    }

    /// Overlap counted over every stride-th source point (stride ≥ 1);
    /// a cheap approximation for very dense clouds.
    pub fn overlap_strided(
        &self,
        source: &[Vector3<f64>],
        pose: &Pose,
        stride: usize,
    ) -> Result<f64> {
        assert!(stride >= 1, "stride must be at least 1");
        if source.is_empty() {
            return Err(Error::EmptySource);
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for p in source.iter().step_by(stride) {
            total += 1;
            if self.query(&pose.transform_point(p)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / total as f64)
    }

    fn insert_voxel(&mut self, v: [i32; 3]) {
        let chunk = [v[0].div_euclid(8), v[1].div_euclid(8), v[2].div_euclid(8)];
        assert!(chunk[0] != EMPTY_SENTINEL, "chunk coordinate collides with the empty sentinel");
        let mut slot = self.find_slot(chunk);
        if self.table[slot].is_empty() {
            if (self.chunk_count + 1) as f64 > LOAD_FACTOR * self.table.len() as f64 {
                self.grow();
                slot = self.find_slot(chunk);
            }
            self.table[slot].coord = chunk;
            self.chunk_count += 1;
        }
        if self.table[slot].set(
            v[0].rem_euclid(8) as u32,
            v[1].rem_euclid(8) as u32,
            v[2].rem_euclid(8) as u32,
        ) {
            self.occupied_voxel_count += 1;
        }
    }

    /// Linear probing from the hash slot; returns the slot holding the
    /// coordinate or the first empty slot. The load factor bound keeps at
    /// least a quarter of the table empty, so probing terminates.
    fn find_slot(&self, chunk: [i32; 3]) -> usize {
        let mask = self.table.len() - 1;
        let mut slot = spatial_hash(chunk) as usize & mask;
        loop {
            let entry = &self.table[slot];
            if entry.is_empty() || entry.coord == chunk {
                return slot;
            }
            slot = (slot + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let new_len = self.table.len() * 2;
        let old = std::mem::replace(
            &mut self.table,
            (0..new_len).map(|_| OccupancyChunk::empty()).collect(),
        );
        for chunk in old.into_iter().filter(|c| !c.is_empty()) {
            let slot = self.find_slot(chunk.coord);
            debug_assert!(self.table[slot].is_empty());
            self.table[slot] = chunk;
        }
    }
}
