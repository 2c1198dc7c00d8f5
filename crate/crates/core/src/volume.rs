//! Dense 3D containers: scalar volumes, label volumes, binary masks and patches.
//!
//! Every container stores its voxels in x-fastest order, i.e. the linear index
//! of `(x, y, z)` is `x + nx * (y + ny * z)`. This is the NIfTI payload order,
//! so file I/O never transposes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel coordinate `(x, y, z)`.
pub type Coord = [usize; 3];

/// Grid extent in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    pub fn cube(n: usize) -> Self {
        Dims([n, n, n])
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.0[0]
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.0[1]
    }

    #[inline]
    pub fn nz(&self) -> usize {
        self.0[2]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, [x, y, z]: Coord) -> usize {
        x + self.0[0] * (y + self.0[1] * z)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> Coord {
        let x = i % self.0[0];
        let r = i / self.0[0];
        [x, r % self.0[1], r / self.0[1]]
    }

    #[inline]
    pub fn contains(&self, c: Coord) -> bool {
        c[0] < self.0[0] && c[1] < self.0[1] && c[2] < self.0[2]
    }

    pub(crate) fn check_coord(&self, c: Coord) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "coordinate {c:?} outside volume of dims {:?}",
                self.0
            )))
        }
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.0.iter().any(|&n| n == 0) {
            return Err(Error::arg(format!("dims must be >= 1, got {:?}", self.0)));
        }
        Ok(())
    }
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Dims(d)
    }
}

/// Physical placement of a grid: extent, voxel size in mm and origin in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: Dims, spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        dims.check_nonzero()?;
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::arg(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::arg(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: Dims) -> Self {
        Geometry {
            dims,
            spacing: [1.0; 3],
            origin: [0.0; 3],
        }
    }
}

/// Dense scalar image (CT intensities, probabilities, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geom: Geometry,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(geom: Geometry, data: Vec<f32>) -> Result<Self> {
        let geom = Geometry::new(geom.dims, geom.spacing, geom.origin)?;
        if data.len() != geom.dims.len() {
            return Err(Error::arg(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims.0
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite value at voxel {:?}",
                geom.dims.coord(i)
            )));
        }
        Ok(Volume { geom, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Volume {
            geom: Geometry::unit(dims),
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(Coord) -> f32) -> Self {
        let data = (0..dims.len()).map(|i| f(dims.coord(i))).collect();
        Volume {
            geom: Geometry::unit(dims),
            data,
        }
    }

    pub fn with_geometry(mut self, spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        self.geom = Geometry::new(self.geom.dims, spacing, origin)?;
        Ok(self)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> Dims {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.geom.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: Coord) -> f32 {
        self.data[self.geom.dims.index(c)]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Voxels strictly above `threshold`.
    pub fn threshold(&self, threshold: f32) -> BinaryMask {
        BinaryMask {
            dims: self.dims(),
            data: self.data.iter().map(|&v| v > threshold).collect(),
        }
    }
}

/// Per-voxel class index; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geom: Geometry,
    data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(geom: Geometry, data: Vec<u32>) -> Result<Self> {
        let geom = Geometry::new(geom.dims, geom.spacing, geom.origin)?;
        if data.len() != geom.dims.len() {
            return Err(Error::arg(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims.0
            )));
        }
        Ok(LabelVolume { geom, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        LabelVolume {
            geom: Geometry::unit(dims),
            data: vec![0; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(Coord) -> u32) -> Self {
        let data = (0..dims.len()).map(|i| f(dims.coord(i))).collect();
        LabelVolume {
            geom: Geometry::unit(dims),
            data,
        }
    }

    pub fn with_geometry(mut self, spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        self.geom = Geometry::new(self.geom.dims, spacing, origin)?;
        Ok(self)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> Dims {
        self.geom.dims
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: Coord) -> u32 {
        self.data[self.geom.dims.index(c)]
    }

    /// Sorted distinct nonzero values.
    pub fn classes(&self) -> Vec<u32> {
        let mut seen = std::collections::BTreeSet::new();
        for &v in &self.data {
            if v != 0 {
                seen.insert(v);
            }
        }
        seen.into_iter().collect()
    }

    pub fn class_mask(&self, class: u32) -> BinaryMask {
        BinaryMask {
            dims: self.dims(),
            data: self.data.iter().map(|&v| v == class).collect(),
        }
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            dims: self.dims(),
            data: self.data.iter().map(|&v| v != 0).collect(),
        }
    }
}

/// Per-voxel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    dims: Dims,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::arg(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                dims.0
            )));
        }
        Ok(BinaryMask { dims, data })
    }

    pub fn empty(dims: Dims) -> Self {
        BinaryMask {
            dims,
            data: vec![false; dims.len()],
        }
    }

    pub fn full(dims: Dims) -> Self {
        BinaryMask {
            dims,
            data: vec![true; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(Coord) -> bool) -> Self {
        let data = (0..dims.len()).map(|i| f(dims.coord(i))).collect();
        BinaryMask { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: Coord) -> bool {
        self.data[self.dims.index(c)]
    }

    #[inline]
    pub fn set(&mut self, c: Coord, v: bool) {
        let i = self.dims.index(c);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::arg(format!(
                "mask dims differ: {:?} vs {:?}",
                self.dims.0, other.dims.0
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        Ok(BinaryMask {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// `self ∧ ¬other`
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn xor(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a != b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    /// Coordinates of set voxels in scan order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.dims.coord(i))
    }

    /// Inclusive bounding box `(min, max)` of set voxels.
    pub fn bbox(&self) -> Option<(Coord, Coord)> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for c in self.coords() {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        any.then_some((lo, hi))
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            geom: Geometry::unit(self.dims),
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Sub-block of a volume, possibly extending past its borders.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Position of the patch's first voxel in the parent grid (may be negative).
    pub origin: [i64; 3],
    pub size: Dims,
    pub data: Vec<f32>,
    /// `true` where the voxel lies outside the parent and was zero-filled.
    pub pad_mask: Vec<bool>,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.size.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size.is_empty()
    }

    /// Parent-grid coordinate of a local voxel, if it lies inside `parent`.
    #[inline]
    pub fn to_parent(&self, local: Coord, parent: Dims) -> Option<Coord> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let g = self.origin[a] + local[a] as i64;
            if g < 0 || g >= parent.0[a] as i64 {
                return None;
            }
            out[a] = g as usize;
        }
        Some(out)
    }

    /// Whether a parent-grid coordinate falls inside the patch window.
    pub fn covers(&self, c: Coord) -> bool {
        (0..3).all(|a| {
            let rel = c[a] as i64 - self.origin[a];
            rel >= 0 && rel < self.size.0[a] as i64
        })
    }

    /// Local coordinate of a parent coordinate covered by the patch.
    pub fn to_local(&self, c: Coord) -> Option<Coord> {
        self.covers(c).then(|| {
            [
                (c[0] as i64 - self.origin[0]) as usize,
                (c[1] as i64 - self.origin[1]) as usize,
                (c[2] as i64 - self.origin[2]) as usize,
            ]
        })
    }
}

/// Copies `size` voxels starting at `origin`; anything outside `vol` is zero
/// and flagged in `pad_mask`.
pub fn crop_patch(vol: &Volume, origin: [i64; 3], size: Dims) -> Result<Patch> {
    if size.0.iter().any(|&s| s == 0) {
        return Err(Error::arg(format!("patch size must be >= 1, got {:?}", size.0)));
    }
    let parent = vol.dims();
    let mut data = vec![0.0f32; size.len()];
    let mut pad_mask = vec![true; size.len()];
    // in-bounds range along each axis, in local coordinates
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let start = (-origin[a]).max(0);
        let end = (parent.0[a] as i64 - origin[a]).min(size.0[a] as i64);
        if end <= start {
            return Ok(Patch {
                origin,
                size,
                data,
                pad_mask,
            });
        }
        lo[a] = start as usize;
        hi[a] = end as usize;
    }
    let src = vol.data();
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            let gy = (origin[1] + y as i64) as usize;
            let gz = (origin[2] + z as i64) as usize;
            let gx0 = (origin[0] + lo[0] as i64) as usize;
            let s = parent.index([gx0, gy, gz]);
            let d = size.index([lo[0], y, z]);
            let n = hi[0] - lo[0];
            data[d..d + n].copy_from_slice(&src[s..s + n]);
            pad_mask[d..d + n].fill(false);
        }
    }
    Ok(Patch {
        origin,
        size,
        data,
        pad_mask,
    })
}

/// Writes the in-bounds part of `values` (laid out like `patch`) back into `dest`.
pub fn paste_patch<T: Copy>(dest: &mut [T], dest_dims: Dims, patch: &Patch, values: &[T]) {
    for i in 0..patch.len() {
        if patch.pad_mask[i] {
            continue;
        }
        if let Some(g) = patch.to_parent(patch.size.coord(i), dest_dims) {
            dest[dest_dims.index(g)] = values[i];
        }
    }
}

/// Interpolation used by [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Output geometry for resampling to `target` spacing, plus the input-index
/// position of each output voxel center along every axis.
fn resample_plan(geom: &Geometry, target: [f64; 3]) -> Result<(Geometry, [Vec<f64>; 3])> {
    if target.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::arg(format!(
            "target spacing must be positive, got {target:?}"
        )));
    }
    let mut dims = [0usize; 3];
    let mut origin = [0.0; 3];
    let mut pos: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let n_in = geom.dims.0[a];
        let scale = target[a] / geom.spacing[a];
        let n = ((n_in as f64 * geom.spacing[a] / target[a]).round() as usize).max(1);
        dims[a] = n;
        // voxel i of the output covers [i*t, (i+1)*t) of the input extent
        pos[a] = (0..n)
            .map(|i| ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64))
            .collect();
        origin[a] = geom.origin[a] + 0.5 * (target[a] - geom.spacing[a]);
    }
    Ok((
        Geometry {
            dims: Dims(dims),
            spacing: target,
            origin,
        },
        pos,
    ))
}

fn nearest_gather<T: Copy>(src: &[T], in_dims: Dims, out_dims: Dims, pos: &[Vec<f64>; 3]) -> Vec<T> {
    let near = |p: &Vec<f64>| p.iter().map(|v| v.round() as usize).collect::<Vec<_>>();
    let (ix, iy, iz) = (near(&pos[0]), near(&pos[1]), near(&pos[2]));
    let mut out = Vec::with_capacity(out_dims.len());
    for &z in &iz {
        for &y in &iy {
            for &x in &ix {
                out.push(src[in_dims.index([x, y, z])]);
            }
        }
    }
    out
}

/// Resamples a scalar volume to `target` spacing.
///
/// Output dims are `round(dims * spacing / target)` (at least 1). Output voxel
/// centers are placed so that the physical extent is preserved.
pub fn resample(vol: &Volume, target: [f64; 3], mode: Interpolation) -> Result<Volume> {
    let (geom, pos) = resample_plan(vol.geometry(), target)?;
    let in_dims = vol.dims();
    let data = match mode {
        Interpolation::Nearest => nearest_gather(vol.data(), in_dims, geom.dims, &pos),
        Interpolation::Trilinear => {
            let split = |p: &Vec<f64>, n: usize| {
                p.iter()
                    .map(|&v| {
                        let i0 = v.floor() as usize;
                        let i1 = (i0 + 1).min(n - 1);
                        (i0, i1, v - i0 as f64)
                    })
                    .collect::<Vec<_>>()
            };
            let sx = split(&pos[0], in_dims.nx());
            let sy = split(&pos[1], in_dims.ny());
            let sz = split(&pos[2], in_dims.nz());
            let src = vol.data();
            let at = |x, y, z| src[in_dims.index([x, y, z])] as f64;
            let mut out = Vec::with_capacity(geom.dims.len());
            for &(z0, z1, fz) in &sz {
                for &(y0, y1, fy) in &sy {
                    for &(x0, x1, fx) in &sx {
                        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
                        let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), fx);
                        let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), fx);
                        let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), fx);
                        let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), fx);
                        let c0 = lerp(c00, c10, fy);
                        let c1 = lerp(c01, c11, fy);
                        out.push(lerp(c0, c1, fz) as f32);
                    }
                }
            }
            out
        }
    };
    Volume::new(geom, data)
}

/// Resamples a label volume; always nearest-neighbour.
pub fn resample_labels(labels: &LabelVolume, target: [f64; 3]) -> Result<LabelVolume> {
    let (geom, pos) = resample_plan(labels.geometry(), target)?;
    let data = nearest_gather(labels.data(), labels.dims(), geom.dims, &pos);
    LabelVolume::new(geom, data)
}
