//! Slice extraction, PNG rendering and run-length encoding of masks.
//!
//! A slice along axis `a` fixes coordinate `a`. Its columns run along the
//! lower of the two remaining axes and its rows along the higher one:
//! axis 2 → (x, y), axis 1 → (x, z), axis 0 → (y, z).

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Coord, Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlicePlane {
    pub axis: usize,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    col_axis: usize,
    row_axis: usize,
}

impl SlicePlane {
    pub fn new(dims: Dims, axis: usize, index: usize) -> Result<Self> {
        if axis > 2 {
            return Err(Error::arg(format!("axis must be 0, 1 or 2, got {axis}")));
        }
        if index >= dims.0[axis] {
            return Err(Error::arg(format!(
                "slice index {index} outside 0..{} on axis {axis}",
                dims.0[axis]
            )));
        }
        let (col_axis, row_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        Ok(SlicePlane {
            axis,
            index,
            width: dims.0[col_axis],
            height: dims.0[row_axis],
            col_axis,
            row_axis,
        })
    }

    pub fn voxel(&self, col: usize, row: usize) -> Coord {
        let mut c = [0usize; 3];
        c[self.axis] = self.index;
        c[self.col_axis] = col;
        c[self.row_axis] = row;
        c
    }

    /// `(col, row)` of a voxel lying on this plane.
    pub fn pixel(&self, c: Coord) -> Option<(usize, usize)> {
        (c[self.axis] == self.index).then_some((c[self.col_axis], c[self.row_axis]))
    }
}

/// 8-bit grayscale PNG of a slice, intensities linearly mapped from
/// `[lo, hi]` to `[0, 255]` and clamped.
pub fn slice_png(vol: &Volume, axis: usize, index: usize, window: Option<(f32, f32)>) -> Result<Vec<u8>> {
    let plane = SlicePlane::new(vol.dims(), axis, index)?;
    let (lo, hi) = window.unwrap_or_else(|| vol.min_max());
    if window.is_some() && !(lo < hi) {
        return Err(Error::arg("window needs lo < hi"));
    }
    let scale = if hi > lo { 255.0 / (hi - lo) as f64 } else { 0.0 };
    let mut pixels = Vec::with_capacity(plane.width * plane.height);
    for row in 0..plane.height {
        for col in 0..plane.width {
            let v = vol.get(plane.voxel(col, row)) as f64;
            pixels.push(((v - lo as f64) * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&pixels, plane.width as u32, plane.height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::State(format!("png encoding: {e}")))?;
    Ok(out)
}

/// `(start, length)` runs of set values.
pub fn encode_runs(values: impl IntoIterator<Item = bool>) -> Vec<[usize; 2]> {
    let mut runs = Vec::new();
    let mut start = None;
    let mut i = 0;
    for v in values {
        match (v, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push([s, i - s]);
                start = None;
            }
            _ => {}
        }
        i += 1;
    }
    if let Some(s) = start {
        runs.push([s, i - s]);
    }
    runs
}

pub fn decode_runs(runs: &[[usize; 2]], len: usize) -> Result<Vec<bool>> {
    let mut out = vec![false; len];
    for &[s, n] in runs {
        if s + n > len {
            return Err(Error::arg(format!("run {s}+{n} exceeds length {len}")));
        }
        out[s..s + n].fill(true);
    }
    Ok(out)
}

/// Whole mask, runs over the linear (x-fastest) index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub dims: [usize; 3],
    pub rle: Vec<[usize; 2]>,
}

impl MaskRle {
    pub fn encode(mask: &BinaryMask) -> Self {
        MaskRle {
            dims: mask.dims().0,
            rle: encode_runs(mask.data().iter().copied()),
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let dims = Dims(self.dims);
        BinaryMask::new(dims, decode_runs(&self.rle, dims.len())?)
    }
}

/// One slice of a mask, runs per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRle {
    pub axis: usize,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub rle: Vec<Vec<[usize; 2]>>,
}

impl SliceRle {
    pub fn encode(mask: &BinaryMask, axis: usize, index: usize) -> Result<Self> {
        let plane = SlicePlane::new(mask.dims(), axis, index)?;
        let rle = (0..plane.height)
            .map(|row| encode_runs((0..plane.width).map(|col| mask.get(plane.voxel(col, row)))))
            .collect();
        Ok(SliceRle {
            axis,
            index,
            width: plane.width,
            height: plane.height,
            rle,
        })
    }

    /// Row-major `height x width` pixels.
    pub fn decode(&self) -> Result<Vec<Vec<bool>>> {
        if self.rle.len() != self.height {
            return Err(Error::arg("row count does not match height"));
        }
        self.rle.iter().map(|r| decode_runs(r, self.width)).collect()
    }
}
