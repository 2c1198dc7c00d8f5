//! Supervoxels from slice-wise 2D features.
//!
//! The volume is viewed as three stacks of slices (axial, coronal, sagittal).
//! Every slice goes through a 2D feature extractor, the three resulting
//! feature volumes are summed voxelwise, and the sum is partitioned by a 3D
//! SLIC clustering.
//!
//! SLIC conventions used here:
//!
//! * each channel is Gaussian pre-smoothed with std `sigma` voxels;
//! * features are scaled by the inverse of their global value range, so
//!   `compactness` is relative to the feature range;
//! * grid interval `S = (N / n_segments)^(1/3)`; seeds sit at the centres of
//!   a regular grid with at most `n_segments` cells;
//! * distance `d = d_feat + (compactness / S) * d_space`, both Euclidean;
//!   each centre searches a window of radius `2S`;
//! * after the last iteration, fragments are absorbed into the largest
//!   26-adjacent segment so that every segment is connected. A fragment is
//!   anything that is not the largest piece of its cluster, or is smaller than
//!   `min_size_factor * S^3` voxels.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_axis, gaussian_kernel, gaussian_smooth};
use crate::morphology::{label_regions, Connectivity};
use crate::volume::{BinaryMask, Dims, Geometry, LabelVolume, Volume};

/// Multi-channel volume stored voxel-major (`channels` consecutive values per voxel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub dims: Dims,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(dims: Dims, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::arg("feature volume needs at least one channel"));
        }
        if data.len() != dims.len() * channels {
            return Err(Error::arg(format!(
                "feature data length {} != {} voxels x {channels} channels",
                data.len(),
                dims.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("feature volume contains non-finite values"));
        }
        Ok(FeatureVolume { dims, channels, data })
    }

    /// Single-channel view of a scalar volume.
    pub fn from_volume(vol: &Volume) -> Self {
        FeatureVolume {
            dims: vol.dims(),
            channels: 1,
            data: vol.data().to_vec(),
        }
    }

    pub fn zeros(dims: Dims, channels: usize) -> Self {
        FeatureVolume {
            dims,
            channels,
            data: vec![0.0; dims.len() * channels],
        }
    }

    #[inline]
    pub fn voxel(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn get(&self, voxel: usize, channel: usize) -> f32 {
        self.data[voxel * self.channels + channel]
    }

    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// 2D image, row-major with `width` values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Slice-wise feature extractor.
///
/// `extract` returns `height * width * channels()` values, pixel-major
/// (channel fastest), and must be deterministic.
pub trait SliceFeatureExtractor: Send + Sync {
    fn channels(&self) -> usize;
    fn extract(&self, slice: &Slice2D) -> Result<Vec<f32>>;
}

/// `C = 1`, returns the slice itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntensityExtractor;

impl SliceFeatureExtractor for IntensityExtractor {
    fn channels(&self) -> usize {
        1
    }

    fn extract(&self, slice: &Slice2D) -> Result<Vec<f32>> {
        Ok(slice.data.clone())
    }
}

/// One channel per smoothing scale; std 0 is the raw slice.
#[derive(Debug, Clone)]
pub struct GaussPyramidExtractor {
    pub stds: Vec<f64>,
}

impl Default for GaussPyramidExtractor {
    fn default() -> Self {
        GaussPyramidExtractor {
            stds: vec![0.0, 1.0, 2.0, 4.0],
        }
    }
}

impl SliceFeatureExtractor for GaussPyramidExtractor {
    fn channels(&self) -> usize {
        self.stds.len()
    }

    fn extract(&self, slice: &Slice2D) -> Result<Vec<f32>> {
        let dims = Dims::new(slice.width, slice.height, 1);
        let c = self.stds.len();
        let mut out = vec![0f32; slice.data.len() * c];
        for (ch, &std) in self.stds.iter().enumerate() {
            let k = gaussian_kernel(std);
            let mut img = slice.data.clone();
            for axis in 0..2 {
                if dims.0[axis] > 1 {
                    img = convolve_axis(&img, dims, 1, axis, &k);
                }
            }
            for (i, v) in img.into_iter().enumerate() {
                out[i * c + ch] = v;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Intensity,
    #[default]
    GaussPyramid,
}

impl std::str::FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intensity" => Ok(ExtractorKind::Intensity),
            "gauss_pyramid" => Ok(ExtractorKind::GaussPyramid),
            _ => Err(Error::arg(format!(
                "unknown extractor {s:?} (expected intensity or gauss_pyramid)"
            ))),
        }
    }
}

pub fn builtin_extractor(kind: ExtractorKind) -> Box<dyn SliceFeatureExtractor> {
    match kind {
        ExtractorKind::Intensity => Box::new(IntensityExtractor),
        ExtractorKind::GaussPyramid => Box::new(GaussPyramidExtractor::default()),
    }
}

/// Anatomical slicing direction. Axial slices fix z, coronal fix y, sagittal fix x.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 3] = [SliceAxis::Axial, SliceAxis::Coronal, SliceAxis::Sagittal];

    /// (fixed axis, in-plane column axis, in-plane row axis)
    fn axes(self) -> (usize, usize, usize) {
        match self {
            SliceAxis::Axial => (2, 0, 1),
            SliceAxis::Coronal => (1, 0, 2),
            SliceAxis::Sagittal => (0, 1, 2),
        }
    }
}

fn slice_of(vol: &Volume, axis: SliceAxis, k: usize) -> Slice2D {
    let (fixed, u, v) = axis.axes();
    let d = vol.dims();
    let (w, h) = (d.0[u], d.0[v]);
    let mut data = Vec::with_capacity(w * h);
    let mut c = [0usize; 3];
    c[fixed] = k;
    for row in 0..h {
        c[v] = row;
        for col in 0..w {
            c[u] = col;
            data.push(vol.get(c));
        }
    }
    Slice2D { width: w, height: h, data }
}

/// Runs `ex` over every slice of all three stacks and sums the results.
pub fn triaxial_features(vol: &Volume, ex: &dyn SliceFeatureExtractor) -> Result<FeatureVolume> {
    let dims = vol.dims();
    let c = ex.channels();
    if c == 0 {
        return Err(Error::Contract("extractor reports zero channels".into()));
    }
    let mut out = FeatureVolume::zeros(dims, c);
    for axis in SliceAxis::ALL {
        let (fixed, u, v) = axis.axes();
        let n = dims.0[fixed];
        let slices: Vec<Vec<f32>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let s = slice_of(vol, axis, k);
                let f = ex.extract(&s)?;
                if f.len() != s.width * s.height * c {
                    return Err(Error::Contract(format!(
                        "{axis:?} slice {k}: extractor returned {} values, expected {}x{}x{c}",
                        f.len(),
                        s.height,
                        s.width
                    )));
                }
                Ok(f)
            })
            .collect::<Result<_>>()?;
        // A, then C, then S: fixed summation order per voxel
        let mut coord = [0usize; 3];
        for (k, f) in slices.iter().enumerate() {
            coord[fixed] = k;
            for row in 0..dims.0[v] {
                coord[v] = row;
                for col in 0..dims.0[u] {
                    coord[u] = col;
                    let src = (row * dims.0[u] + col) * c;
                    let dst = dims.index(coord) * c;
                    for ch in 0..c {
                        out.data[dst + ch] += f[src + ch];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub n_segments: usize,
    pub compactness: f64,
    /// Gaussian pre-smoothing std, in voxels.
    pub sigma: f64,
    pub max_iter: usize,
    /// Fragments below `min_size_factor * S^3` voxels are absorbed.
    pub min_size_factor: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_segments: 100,
            compactness: 0.1,
            sigma: 3.0,
            max_iter: 10,
            min_size_factor: 0.25,
        }
    }
}

/// Full partition of a volume into supervoxels with ids `1..=n_segments_actual`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervoxelMap {
    pub dims: Dims,
    pub labels: Vec<u32>,
    pub n_segments_requested: usize,
    pub n_segments_actual: usize,
}

impl SupervoxelMap {
    /// Wraps an existing partition (e.g. read from disk), validating ids.
    pub fn from_labels(labels: &LabelVolume) -> Result<Self> {
        let n = labels.data().iter().copied().max().unwrap_or(0) as usize;
        let mut seen = vec![false; n + 1];
        for &l in labels.data() {
            if l == 0 {
                return Err(Error::arg("supervoxel map has unlabeled voxels"));
            }
            seen[l as usize] = true;
        }
        if !seen[1..].iter().all(|&s| s) {
            return Err(Error::arg("supervoxel ids are not contiguous"));
        }
        Ok(SupervoxelMap {
            dims: labels.dims(),
            labels: labels.data().to_vec(),
            n_segments_requested: n,
            n_segments_actual: n,
        })
    }

    pub fn region(&self, id: u32) -> BinaryMask {
        BinaryMask::new(self.dims, self.labels.iter().map(|&l| l == id).collect())
            .expect("dims match")
    }

    /// `sizes()[id - 1]` voxels carry `id`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.n_segments_actual];
        for &l in &self.labels {
            s[l as usize - 1] += 1;
        }
        s
    }

    pub fn to_label_volume(&self, geometry: &Geometry) -> Result<LabelVolume> {
        if geometry.dims != self.dims {
            return Err(Error::arg("geometry dims do not match supervoxel map"));
        }
        LabelVolume::new(*geometry, self.labels.clone())
    }
}

/// SLIC result plus per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct SlicOutput {
    pub map: SupervoxelMap,
    /// Grid interval `S`.
    pub interval: f64,
    /// Sum of squared voxel-to-centre spatial distances after each iteration.
    pub spatial_sse: Vec<f64>,
    pub iterations: usize,
}

struct Cluster {
    pos: [f64; 3],
    feat: Vec<f64>,
}

/// Seed grid counts with product <= n and the interval they imply.
fn seed_grid(dims: Dims, n_segments: usize) -> ([usize; 3], f64) {
    let mut s = (dims.len() as f64 / n_segments as f64).cbrt();
    loop {
        let counts = dims.0.map(|d| ((d as f64 / s).floor() as usize).max(1));
        if counts.iter().product::<usize>() <= n_segments {
            return (counts, s);
        }
        s *= 1.01;
    }
}

pub fn slic3d(features: &FeatureVolume, params: &SlicParams) -> Result<SupervoxelMap> {
    Ok(slic3d_traced(features, params)?.map)
}

pub fn slic3d_traced(features: &FeatureVolume, params: &SlicParams) -> Result<SlicOutput> {
    let dims = features.dims;
    let n_vox = dims.len();
    let c = features.channels;
    if params.n_segments == 0 {
        return Err(Error::arg("n_segments must be >= 1"));
    }
    if params.n_segments > n_vox {
        return Err(Error::arg(format!(
            "n_segments {} exceeds voxel count {n_vox}",
            params.n_segments
        )));
    }
    if params.max_iter == 0 {
        return Err(Error::arg("max_iter must be >= 1"));
    }
    if !(params.sigma >= 0.0) || !(params.compactness >= 0.0) {
        return Err(Error::arg("sigma and compactness must be >= 0"));
    }

    let mut feat = gaussian_smooth(&features.data, dims, c, params.sigma);
    let (lo, hi) = feat
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = (hi - lo) as f64;
    let scale_ref = (hi.abs().max(lo.abs()) as f64).max(1.0);
    if range > 1e-6 * scale_ref {
        let inv = (1.0 / range) as f32;
        feat.iter_mut().for_each(|v| *v *= inv);
    }

    let (counts, interval) = seed_grid(dims, params.n_segments);
    let mut clusters = Vec::with_capacity(counts.iter().product());
    for kz in 0..counts[2] {
        for ky in 0..counts[1] {
            for kx in 0..counts[0] {
                let k = [kx, ky, kz];
                let pos = [0, 1, 2].map(|a| (k[a] as f64 + 0.5) * dims.0[a] as f64 / counts[a] as f64);
                let centre = pos.map(|p| p.floor() as usize);
                let v = dims.index([
                    centre[0].min(dims.nx() - 1),
                    centre[1].min(dims.ny() - 1),
                    centre[2].min(dims.nz() - 1),
                ]);
                let feat_v = feat[v * c..(v + 1) * c].iter().map(|&x| x as f64).collect();
                clusters.push(Cluster { pos, feat: feat_v });
            }
        }
    }

    let spatial_w = params.compactness / interval;
    let radius = (2.0 * interval).ceil() as i64;
    let plane = dims.nx() * dims.ny();
    let mut labels = vec![u32::MAX; n_vox];
    let mut spatial_sse = Vec::new();
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let mut next = vec![u32::MAX; n_vox];
        next.par_chunks_mut(plane).enumerate().for_each(|(z, out)| {
            let mut best = vec![f64::INFINITY; plane];
            for (k, cl) in clusters.iter().enumerate() {
                let cz = cl.pos[2].round() as i64;
                if (z as i64 - cz).abs() > radius {
                    continue;
                }
                let cy = cl.pos[1].round() as i64;
                let cx = cl.pos[0].round() as i64;
                let y0 = (cy - radius).max(0) as usize;
                let y1 = ((cy + radius) as usize).min(dims.ny() - 1);
                let x0 = (cx - radius).max(0) as usize;
                let x1 = ((cx + radius) as usize).min(dims.nx() - 1);
                if cy + radius < 0 || cx + radius < 0 {
                    continue;
                }
                let dz = z as f64 - cl.pos[2];
                for y in y0..=y1 {
                    let dy = y as f64 - cl.pos[1];
                    for x in x0..=x1 {
                        let dx = x as f64 - cl.pos[0];
                        let li = x + dims.nx() * y;
                        let vi = z * plane + li;
                        let fv = &feat[vi * c..(vi + 1) * c];
                        let mut df = 0f64;
                        for (a, b) in fv.iter().zip(&cl.feat) {
                            let d = *a as f64 - b;
                            df += d * d;
                        }
                        let d = df.sqrt() + spatial_w * (dx * dx + dy * dy + dz * dz).sqrt();
                        if d < best[li] {
                            best[li] = d;
                            out[li] = k as u32;
                        }
                    }
                }
            }
            // unreachable voxels fall back to the spatially nearest centre
            for li in 0..plane {
                if out[li] == u32::MAX {
                    let p = [(li % dims.nx()) as f64, (li / dims.nx()) as f64, z as f64];
                    out[li] = nearest_centre(&clusters, p);
                }
            }
        });
        let changed = next != labels;
        labels = next;

        // per-plane partial sums, reduced in plane order
        let nk = clusters.len();
        let partials: Vec<(Vec<usize>, Vec<[f64; 3]>, Vec<f64>)> = (0..dims.nz())
            .into_par_iter()
            .map(|z| {
                let mut cnt = vec![0usize; nk];
                let mut ps = vec![[0f64; 3]; nk];
                let mut fs = vec![0f64; nk * c];
                for li in 0..plane {
                    let vi = z * plane + li;
                    let k = labels[vi] as usize;
                    cnt[k] += 1;
                    ps[k][0] += (li % dims.nx()) as f64;
                    ps[k][1] += (li / dims.nx()) as f64;
                    ps[k][2] += z as f64;
                    for ch in 0..c {
                        fs[k * c + ch] += feat[vi * c + ch] as f64;
                    }
                }
                (cnt, ps, fs)
            })
            .collect();
        let mut cnt = vec![0usize; nk];
        let mut ps = vec![[0f64; 3]; nk];
        let mut fs = vec![0f64; nk * c];
        for (pc, pp, pf) in &partials {
            for k in 0..nk {
                cnt[k] += pc[k];
                for a in 0..3 {
                    ps[k][a] += pp[k][a];
                }
            }
            for (acc, v) in fs.iter_mut().zip(pf) {
                *acc += v;
            }
        }
        for (k, cl) in clusters.iter_mut().enumerate() {
            if cnt[k] == 0 {
                continue;
            }
            let n = cnt[k] as f64;
            cl.pos = ps[k].map(|s| s / n);
            for ch in 0..c {
                cl.feat[ch] = fs[k * c + ch] / n;
            }
        }
        spatial_sse.push(spatial_sse_of(&labels, &clusters, dims));
        if !changed {
            break;
        }
    }

    let min_size = (params.min_size_factor * interval.powi(3)).floor() as usize;
    let (labels, n_actual) = enforce_connectivity(dims, &labels, min_size);
    Ok(SlicOutput {
        map: SupervoxelMap {
            dims,
            labels,
            n_segments_requested: params.n_segments,
            n_segments_actual: n_actual,
        },
        interval,
        spatial_sse,
        iterations,
    })
}

fn nearest_centre(clusters: &[Cluster], p: [f64; 3]) -> u32 {
    let mut best = (f64::INFINITY, 0u32);
    for (k, cl) in clusters.iter().enumerate() {
        let d: f64 = (0..3).map(|a| (p[a] - cl.pos[a]).powi(2)).sum();
        if d < best.0 {
            best = (d, k as u32);
        }
    }
    best.1
}

fn spatial_sse_of(labels: &[u32], clusters: &[Cluster], dims: Dims) -> f64 {
    let plane = dims.nx() * dims.ny();
    let per_plane: Vec<f64> = (0..dims.nz())
        .into_par_iter()
        .map(|z| {
            let mut s = 0f64;
            for li in 0..plane {
                let cl = &clusters[labels[z * plane + li] as usize];
                let p = [(li % dims.nx()) as f64, (li / dims.nx()) as f64, z as f64];
                s += (0..3).map(|a| (p[a] - cl.pos[a]).powi(2)).sum::<f64>();
            }
            s
        })
        .collect();
    per_plane.iter().sum()
}

/// Absorbs fragments into their largest adjacent segment and relabels the
/// result `1..=n` in scan order. Returns the labels and `n`.
pub fn enforce_connectivity(dims: Dims, labels: &[u32], min_size: usize) -> (Vec<u32>, usize) {
    let conn = Connectivity::TwentySix;
    let regions = label_regions(dims, labels, conn);
    let nr = regions.count;
    // region r (0-based) → cluster label, first voxel order is implicit in ids
    let mut region_label = vec![0u32; nr];
    for (i, &r) in regions.labels.iter().enumerate() {
        region_label[r as usize - 1] = labels[i];
    }
    let mut largest: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for r in 0..nr {
        let e = largest.entry(region_label[r]).or_insert(r);
        if regions.sizes[r] > regions.sizes[*e] {
            *e = r;
        }
    }
    let mut owner: Vec<Option<usize>> = vec![None; nr];
    for &r in largest.values() {
        if regions.sizes[r] >= min_size {
            owner[r] = Some(r);
        }
    }
    if owner.iter().all(Option::is_none) {
        let r = (0..nr).max_by_key(|&r| (regions.sizes[r], std::cmp::Reverse(r))).unwrap_or(0);
        owner[r] = Some(r);
    }

    let adjacency = region_adjacency(dims, &regions.labels, nr);
    let mut owned_size: Vec<usize> = regions.sizes.clone();
    loop {
        let mut progress = false;
        let mut pending = false;
        for r in 0..nr {
            if owner[r].is_some() {
                continue;
            }
            pending = true;
            let mut best: Option<usize> = None;
            for &n in &adjacency[r] {
                if let Some(o) = owner[n] {
                    let better = match best {
                        None => true,
                        Some(b) => owned_size[o] > owned_size[b] || (owned_size[o] == owned_size[b] && o < b),
                    };
                    if better {
                        best = Some(o);
                    }
                }
            }
            if let Some(o) = best {
                owner[r] = Some(o);
                owned_size[o] += regions.sizes[r];
                progress = true;
            }
        }
        if !pending || !progress {
            break;
        }
    }

    let mut final_id = vec![0u32; nr];
    let mut next = 0u32;
    let out: Vec<u32> = regions
        .labels
        .iter()
        .map(|&r| {
            // an isolated region with no resolved neighbour keeps itself
            let o = owner[r as usize - 1].unwrap_or(r as usize - 1);
            if final_id[o] == 0 {
                next += 1;
                final_id[o] = next;
            }
            final_id[o]
        })
        .collect();
    (out, next as usize)
}

fn region_adjacency(dims: Dims, regions: &[u32], nr: usize) -> Vec<Vec<usize>> {
    let mut pairs: HashSet<(u32, u32)> = HashSet::new();
    let offs: Vec<[i32; 3]> = Connectivity::TwentySix
        .offsets()
        .into_iter()
        .filter(|&[dx, dy, dz]| dz > 0 || (dz == 0 && (dy > 0 || (dy == 0 && dx > 0))))
        .collect();
    let [nx, ny, nz] = dims.0.map(|d| d as i64);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (x + nx * (y + ny * z)) as usize;
                let a = regions[i];
                for o in &offs {
                    let (xx, yy, zz) = (x + o[0] as i64, y + o[1] as i64, z + o[2] as i64);
                    if xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz >= nz {
                        continue;
                    }
                    let b = regions[(xx + nx * (yy + ny * zz)) as usize];
                    if a != b {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    let mut adj = vec![Vec::new(); nr];
    for (a, b) in pairs {
        adj[a as usize - 1].push(b as usize - 1);
        adj[b as usize - 1].push(a as usize - 1);
    }
    adj.iter_mut().for_each(|v| v.sort_unstable());
    adj
}

/// Triaxial features followed by SLIC.
pub fn supervoxels(vol: &Volume, ex: &dyn SliceFeatureExtractor, params: &SlicParams) -> Result<SupervoxelMap> {
    let f = triaxial_features(vol, ex)?;
    slic3d(&f, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::connected_components;

    fn noise_volume(dims: Dims, seed: u64) -> Volume {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        Volume::new(Geometry::unit(dims), data).unwrap()
    }

    #[test]
    fn identity_extractor_triples_volume() {
        let v = noise_volume(Dims::new(5, 4, 3), 1);
        let f = triaxial_features(&v, &IntensityExtractor).unwrap();
        for (a, b) in f.data.iter().zip(v.data()) {
            assert_eq!(*a, 3.0 * b);
        }
    }

    #[test]
    fn zero_volume_gives_zero_features() {
        let v = Volume::zeros(Dims::new(4, 3, 2));
        let f = triaxial_features(&v, &GaussPyramidExtractor::default()).unwrap();
        assert_eq!(f.channels, 4);
        assert!(f.data.iter().all(|&x| x == 0.0));
    }

    struct MeanExtractor;
    impl SliceFeatureExtractor for MeanExtractor {
        fn channels(&self) -> usize {
            1
        }
        fn extract(&self, s: &Slice2D) -> Result<Vec<f32>> {
            let m = (s.data.iter().map(|&v| v as f64).sum::<f64>() / s.data.len() as f64) as f32;
            Ok(vec![m; s.data.len()])
        }
    }

    #[test]
    fn mean_extractor_sums_three_slice_means() {
        let dims = Dims::new(4, 3, 5);
        let v = noise_volume(dims, 2);
        let f = triaxial_features(&v, &MeanExtractor).unwrap();
        let mean = |pred: &dyn Fn([usize; 3]) -> bool| {
            let vals: Vec<f64> = (0..dims.len())
                .map(|i| dims.coord(i))
                .filter(|&c| pred(c))
                .map(|c| v.get(c) as f64)
                .collect();
            (vals.iter().sum::<f64>() / vals.len() as f64) as f32
        };
        for i in 0..dims.len() {
            let [x, y, z] = dims.coord(i);
            let expect = mean(&|c| c[2] == z) + mean(&|c| c[1] == y) + mean(&|c| c[0] == x);
            assert!((f.data[i] - expect).abs() < 1e-5, "{i}");
        }
    }

    struct BadExtractor;
    impl SliceFeatureExtractor for BadExtractor {
        fn channels(&self) -> usize {
            2
        }
        fn extract(&self, s: &Slice2D) -> Result<Vec<f32>> {
            // wrong for non-square slices
            Ok(vec![0.0; s.width * s.width * 2])
        }
    }

    #[test]
    fn channel_mismatch_is_contract_error() {
        let v = Volume::zeros(Dims::new(4, 3, 2));
        assert!(matches!(triaxial_features(&v, &BadExtractor), Err(Error::Contract(_))));
    }

    #[test]
    fn pyramid_on_constant_and_raw_channel() {
        let s = Slice2D { width: 6, height: 5, data: vec![2.5; 30] };
        let out = GaussPyramidExtractor::default().extract(&s).unwrap();
        assert_eq!(out.len(), 120);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-6));

        let v = noise_volume(Dims::new(6, 5, 1), 3);
        let s = Slice2D { width: 6, height: 5, data: v.data().to_vec() };
        let out = GaussPyramidExtractor::default().extract(&s).unwrap();
        for i in 0..30 {
            assert_eq!(out[i * 4], s.data[i]);
        }
        assert_eq!(IntensityExtractor.extract(&s).unwrap(), s.data);
    }

    #[test]
    fn seed_grid_never_exceeds_request() {
        for (d, n) in [
            (Dims::cube(64), 100),
            (Dims::new(200, 200, 1), 100),
            (Dims::new(7, 3, 100), 17),
            (Dims::cube(8), 8),
            (Dims::cube(3), 27),
        ] {
            let (counts, _) = seed_grid(d, n);
            assert!(counts.iter().product::<usize>() <= n, "{d:?} {n}");
        }
        assert_eq!(seed_grid(Dims::cube(8), 8).0, [2, 2, 2]);
    }

    #[test]
    fn single_segment_covers_everything() {
        let f = FeatureVolume::from_volume(&Volume::zeros(Dims::cube(5)));
        let p = SlicParams { n_segments: 1, ..Default::default() };
        let m = slic3d(&f, &p).unwrap();
        assert_eq!(m.n_segments_actual, 1);
        assert!(m.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn rejects_bad_params() {
        let f = FeatureVolume::from_volume(&Volume::zeros(Dims::cube(2)));
        let p = SlicParams { n_segments: 9, ..Default::default() };
        assert!(slic3d(&f, &p).is_err());
        let p = SlicParams { max_iter: 0, ..Default::default() };
        assert!(slic3d(&f, &p).is_err());
        let p = SlicParams { sigma: -1.0, n_segments: 2, ..Default::default() };
        assert!(slic3d(&f, &p).is_err());
    }

    #[test]
    fn two_material_split_follows_boundary() {
        let dims = Dims::new(16, 8, 8);
        let v = Volume::from_fn(dims, |[x, _, _]| if x < 8 { 0.0 } else { 100.0 });
        let p = SlicParams { n_segments: 2, sigma: 0.0, compactness: 0.01, ..Default::default() };
        let m = slic3d(&FeatureVolume::from_volume(&v), &p).unwrap();
        assert_eq!(m.n_segments_actual, 2);
        for i in 0..dims.len() {
            let [x, _, _] = dims.coord(i);
            assert_eq!(m.labels[i], if x < 8 { 1 } else { 2 });
        }
    }

    #[test]
    fn enforcement_absorbs_fragments() {
        // label 1 split in two pieces by label 2
        let dims = Dims::new(7, 1, 1);
        let labels = vec![1, 1, 2, 2, 2, 1, 3];
        let (out, n) = enforce_connectivity(dims, &labels, 0);
        assert_eq!(n, 3);
        // the lone 1 at x=5 joins its larger neighbour (the 2-run)
        assert_eq!(out, vec![1, 1, 2, 2, 2, 2, 3]);
        for id in 1..=n as u32 {
            let m = BinaryMask::new(dims, out.iter().map(|&l| l == id).collect()).unwrap();
            assert_eq!(connected_components(&m, Connectivity::TwentySix).count, 1);
        }
        let (out, n) = enforce_connectivity(dims, &labels, 2);
        assert_eq!(n, 2);
        assert_eq!(out, vec![1, 1, 2, 2, 2, 2, 2]);
    }
}
