//! Voxel grids and the slice mask used for sparse supervision.
//!
//! Convention used everywhere: voxel `(i, j, k)` occupies the unit cube
//! `[i, i+1) x [j, j+1) x [k, k+1)` and its center sits at
//! `(i + 0.5, j + 0.5, k + 0.5)`. Data is stored x-fastest.

use crate::error::Error;
use crate::voxelizer::Axis;
use crate::Result;

/// Binary segmentation mask (values 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub shape: [usize; 3],
    pub data: Vec<u8>,
}

impl VoxelGrid {
    pub fn zeros(shape: [usize; 3]) -> Self {
        VoxelGrid {
            shape,
            data: vec![0; shape[0] * shape[1] * shape[2]],
        }
    }

    pub fn from_data(shape: [usize; 3], data: Vec<u8>) -> Result<Self> {
        if data.len() != shape[0] * shape[1] * shape[2] {
            return Err(Error::InvalidArgument(format!(
                "grid data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "binary grid contains value {v}, expected 0 or 1"
            )));
        }
        Ok(VoxelGrid { shape, data })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: u8) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Center of voxel `(i, j, k)`.
    pub fn center(i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn same_shape(&self, other: &VoxelGrid) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                a: self.shape,
                b: other.shape,
            });
        }
        Ok(())
    }
}

/// Real-valued volume (soft voxelization written to / read from disk).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftVolume {
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

impl SoftVolume {
    pub fn from_data(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if data.len() != shape[0] * shape[1] * shape[2] {
            return Err(Error::InvalidArgument(format!(
                "volume data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(SoftVolume { shape, data })
    }

    /// Binarize at `threshold` (strictly greater than).
    pub fn threshold(&self, threshold: f32) -> VoxelGrid {
        VoxelGrid {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| if v > threshold { 1 } else { 0 })
                .collect(),
        }
    }
}

/// Subset of slices along one axis that carry valid labels.
///
/// Loss sums are restricted to voxels whose index along `axis` is in the
/// mask; everything else is treated as unlabeled, not as background.
#[derive(Debug, Clone)]
pub struct SliceMask {
    pub axis: Axis,
    /// Sorted, deduplicated slice indices.
    pub indices: Vec<usize>,
    membership: Vec<bool>,
}

impl SliceMask {
    pub fn new(axis: Axis, mut indices: Vec<usize>, n_slices: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidArgument(
                "slice mask must keep at least one slice".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= n_slices {
                return Err(Error::InvalidArgument(format!(
                    "slice index {last} out of range for {n_slices} slices"
                )));
            }
        }
        let mut membership = vec![false; n_slices];
        for &i in &indices {
            membership[i] = true;
        }
        Ok(SliceMask {
            axis,
            indices,
            membership,
        })
    }

    #[inline]
    pub fn contains(&self, slice: usize) -> bool {
        self.membership.get(slice).copied().unwrap_or(false)
    }

    /// Total slice positions along the axis (labeled or not).
    pub fn axis_len(&self) -> usize {
        self.membership.len()
    }

    /// Number of labeled slices.
    pub fn n_labeled(&self) -> usize {
        self.indices.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let mut g = VoxelGrid::zeros([3, 4, 5]);
        g.set(1, 2, 3, 1);
        assert_eq!(g.data[1 + 3 * (2 + 4 * 3)], 1);
        assert_eq!(g.get(1, 2, 3), 1);
        assert_eq!(g.count_foreground(), 1);
    }

    #[test]
    fn voxel_centers_sit_at_half_integers() {
        assert_eq!(VoxelGrid::center(0, 0, 0), [0.5, 0.5, 0.5]);
        assert_eq!(VoxelGrid::center(4, 2, 7), [4.5, 2.5, 7.5]);
    }

    #[test]
    fn binary_grid_rejects_other_values() {
        let err = VoxelGrid::from_data([1, 1, 1], vec![2]);
        assert!(err.is_err());
    }

    #[test]
    fn mask_rejects_out_of_range_and_empty() {
        assert!(SliceMask::new(Axis::Z, vec![], 10).is_err());
        assert!(SliceMask::new(Axis::Z, vec![10], 10).is_err());
        let m = SliceMask::new(Axis::Z, vec![3, 1, 3], 10).unwrap();
        assert_eq!(m.indices, vec![1, 3]);
        assert!(m.contains(1) && m.contains(3) && !m.contains(2));
    }
}
