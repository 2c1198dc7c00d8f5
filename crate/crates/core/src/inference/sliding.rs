//! Sliding-window inference with weighted blending, and patch-local click
//! inference.

use std::fs::File;
use std::os::unix::fs::FileExt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{crop_patch, BinaryMask, Dims, Patch, Volume};

use super::predictor::Predictor;
use super::prompt::{PointPrompt, Prompt};

pub const DEFAULT_PATCH: usize = 128;
pub const DEFAULT_OVERLAP: f64 = 0.25;
pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlendKernel {
    Constant,
    /// Separable Gaussian centred on the patch, std = `sigma_fraction * patch`.
    Gaussian { sigma_fraction: f64 },
}

impl Default for BlendKernel {
    fn default() -> Self {
        BlendKernel::Gaussian { sigma_fraction: 0.125 }
    }
}

impl BlendKernel {
    /// Per-axis weight profiles; the patch weight is their product.
    pub fn profiles(&self, size: Dims) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|a| {
            let n = size.0[a];
            match *self {
                BlendKernel::Constant => vec![1.0; n],
                BlendKernel::Gaussian { sigma_fraction } => {
                    let sigma = (sigma_fraction * n as f64).max(1e-6);
                    let c = (n as f64 - 1.0) / 2.0;
                    (0..n)
                        .map(|i| {
                            let d = i as f64 - c;
                            (-(d * d) / (2.0 * sigma * sigma)).exp().max(1e-12)
                        })
                        .collect()
                }
            }
        })
    }

    pub fn weights(&self, size: Dims) -> Vec<f64> {
        let [wx, wy, wz] = self.profiles(size);
        let mut out = Vec::with_capacity(size.len());
        for &z in &wz {
            for &y in &wy {
                for &x in &wx {
                    out.push(x * y * z);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowConfig {
    pub patch: Dims,
    pub overlap: f64,
    pub blend: BlendKernel,
    /// Bytes available for the accumulators; below `16 * voxels` they spill
    /// to a temporary file.
    pub memory_budget: Option<u64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Visit patches in a seeded random order instead of scan order.
    pub shuffle_seed: Option<u64>,
}

impl Default for SlidingWindowConfig {
    fn default() -> Self {
        SlidingWindowConfig {
            patch: Dims::cube(DEFAULT_PATCH),
            overlap: DEFAULT_OVERLAP,
            blend: BlendKernel::default(),
            memory_budget: None,
            threads: None,
            shuffle_seed: None,
        }
    }
}

impl SlidingWindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::arg(format!("overlap must be in [0, 1), got {}", self.overlap)));
        }
        if self.patch.0.contains(&0) {
            return Err(Error::arg("patch size must be >= 1 on every axis"));
        }
        if let BlendKernel::Gaussian { sigma_fraction } = self.blend {
            if !(sigma_fraction > 0.0) || !sigma_fraction.is_finite() {
                return Err(Error::arg("gaussian blend needs a positive std fraction"));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::arg("threads must be >= 1"));
        }
        Ok(())
    }
}

/// Window start positions along one axis; the last window ends at the border.
pub fn window_starts(dim: usize, patch: usize, overlap: f64) -> Vec<usize> {
    if dim <= patch {
        return vec![0];
    }
    let stride = ((patch as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let mut out = Vec::new();
    let mut o = 0;
    while o + patch < dim {
        out.push(o);
        o += stride;
    }
    out.push(dim - patch);
    out
}

/// All patch origins in scan order (x fastest).
pub fn patch_origins(dims: Dims, patch: Dims, overlap: f64) -> Vec<[usize; 3]> {
    let s = [0, 1, 2].map(|a| window_starts(dims.0[a], patch.0[a], overlap));
    let mut out = Vec::new();
    for &z in &s[2] {
        for &y in &s[1] {
            for &x in &s[0] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// Weighted-sum and weight-sum storage.
trait Accumulator {
    /// Adds `num[i]` and `den[i]` to voxels `start..start + num.len()`.
    fn add_run(&mut self, start: usize, num: &[f64], den: &[f64]) -> Result<()>;
    fn finish(self: Box<Self>) -> Result<Vec<f32>>;
}

struct MemoryAccumulator {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Accumulator for MemoryAccumulator {
    fn add_run(&mut self, start: usize, num: &[f64], den: &[f64]) -> Result<()> {
        for (k, (a, b)) in num.iter().zip(den).enumerate() {
            self.num[start + k] += a;
            self.den[start + k] += b;
        }
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<Vec<f32>> {
        Ok(divide(&self.num, &self.den))
    }
}

fn divide(num: &[f64], den: &[f64]) -> Vec<f32> {
    num.iter()
        .zip(den)
        .map(|(&n, &d)| if d > 0.0 { (n / d) as f32 } else { 0.0 })
        .collect()
}

/// Interleaved `(num, den)` f64 pairs in an anonymous temporary file.
struct FileAccumulator {
    file: File,
    len: usize,
    buf: Vec<u8>,
}

impl FileAccumulator {
    fn new(len: usize) -> Result<Self> {
        let file = tempfile::tempfile().map_err(|e| Error::io("<tempfile>", e))?;
        file.set_len(len as u64 * 16)
            .map_err(|e| Error::io("<tempfile>", e))?;
        Ok(FileAccumulator {
            file,
            len,
            buf: Vec::new(),
        })
    }
}

impl Accumulator for FileAccumulator {
    fn add_run(&mut self, start: usize, num: &[f64], den: &[f64]) -> Result<()> {
        let bytes = num.len() * 16;
        self.buf.resize(bytes, 0);
        let at = start as u64 * 16;
        let io = |e| Error::io("<tempfile>", e);
        self.file.read_exact_at(&mut self.buf, at).map_err(io)?;
        for k in 0..num.len() {
            let o = k * 16;
            let n = f64::from_le_bytes(self.buf[o..o + 8].try_into().unwrap()) + num[k];
            let d = f64::from_le_bytes(self.buf[o + 8..o + 16].try_into().unwrap()) + den[k];
            self.buf[o..o + 8].copy_from_slice(&n.to_le_bytes());
            self.buf[o + 8..o + 16].copy_from_slice(&d.to_le_bytes());
        }
        self.file.write_all_at(&self.buf, at).map_err(io)
    }

    fn finish(self: Box<Self>) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(self.len);
        let chunk = 1 << 16;
        let mut buf = vec![0u8; chunk * 16];
        let mut i = 0;
        while i < self.len {
            let n = chunk.min(self.len - i);
            let b = &mut buf[..n * 16];
            self.file
                .read_exact_at(b, i as u64 * 16)
                .map_err(|e| Error::io("<tempfile>", e))?;
            for k in 0..n {
                let o = k * 16;
                let num = f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
                let den = f64::from_le_bytes(b[o + 8..o + 16].try_into().unwrap());
                out.push(if den > 0.0 { (num / den) as f32 } else { 0.0 });
            }
            i += n;
        }
        Ok(out)
    }
}

fn predict(pred: &dyn Predictor, patch: &Patch, prompt: &Prompt) -> Result<Vec<f32>> {
    let out = match prompt {
        Prompt::Class(c) => pred.auto(patch, *c)?,
        Prompt::Points(p) => pred.interactive(patch, p)?,
    };
    check_output(patch, &out)?;
    Ok(out)
}

pub(crate) fn check_output(patch: &Patch, out: &[f32]) -> Result<()> {
    if out.len() != patch.len() {
        return Err(Error::Contract(format!(
            "predictor returned {} values for a patch of {}",
            out.len(),
            patch.len()
        )));
    }
    if let Some(v) = out.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("predictor returned probability {v}")));
    }
    Ok(())
}

/// Tiles `vol` into overlapping patches, predicts each, and blends.
///
/// Patches are predicted in parallel batches and accumulated one at a time
/// in a fixed order, so the result does not depend on the thread count.
pub fn sliding_window(
    vol: &Volume,
    pred: &dyn Predictor,
    prompt: &Prompt,
    cfg: &SlidingWindowConfig,
) -> Result<Volume> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::State(format!("thread pool: {e}")))?;
            pool.install(|| run(vol, pred, prompt, cfg))
        }
        None => run(vol, pred, prompt, cfg),
    }
}

fn run(vol: &Volume, pred: &dyn Predictor, prompt: &Prompt, cfg: &SlidingWindowConfig) -> Result<Volume> {
    let dims = vol.dims();
    let mut origins = patch_origins(dims, cfg.patch, cfg.overlap);
    if let Some(seed) = cfg.shuffle_seed {
        origins.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let weights = cfg.blend.weights(cfg.patch);
    let n = dims.len();
    let mut acc: Box<dyn Accumulator> = match cfg.memory_budget {
        Some(b) if b < 16 * n as u64 => Box::new(FileAccumulator::new(n)?),
        _ => Box::new(MemoryAccumulator {
            num: vec![0.0; n],
            den: vec![0.0; n],
        }),
    };
    let batch = if pred.concurrent() {
        rayon::current_num_threads().max(1)
    } else {
        1
    };
    let px = cfg.patch.nx();
    let mut num = vec![0f64; px];
    let mut den = vec![0f64; px];
    for group in origins.chunks(batch) {
        let crop = |o: &[usize; 3]| crop_patch(vol, o.map(|v| v as i64), cfg.patch);
        let results: Vec<Result<(Patch, Vec<f32>)>> = if batch > 1 {
            group
                .par_iter()
                .map(|o| {
                    let p = crop(o)?;
                    let out = predict(pred, &p, prompt)?;
                    Ok((p, out))
                })
                .collect()
        } else {
            group
                .iter()
                .map(|o| {
                    let p = crop(o)?;
                    let out = predict(pred, &p, prompt)?;
                    Ok((p, out))
                })
                .collect()
        };
        for r in results {
            let (patch, prob) = r?;
            // x-runs of in-bounds voxels
            let size = patch.size;
            let o = patch.origin.map(|v| v as usize);
            let ex = size.nx().min(dims.nx() - o[0]);
            for z in 0..size.nz().min(dims.nz() - o[2]) {
                for y in 0..size.ny().min(dims.ny() - o[1]) {
                    let l = size.index([0, y, z]);
                    for x in 0..ex {
                        let w = weights[l + x];
                        num[x] = w * prob[l + x] as f64;
                        den[x] = w;
                    }
                    let g = dims.index([o[0], o[1] + y, o[2] + z]);
                    acc.add_run(g, &num[..ex], &den[..ex])?;
                }
            }
        }
    }
    let data = acc.finish()?;
    Volume::new(vol.geometry().clone(), data)
}

/// Probability `>` threshold.
pub fn threshold_prob(prob: &Volume, t: f32) -> BinaryMask {
    prob.threshold(t)
}

/// Patch window of a click-local inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub mask: BinaryMask,
    pub origin: [i64; 3],
    pub size: Dims,
}

/// Patch origin placing `center` in the middle, clamped to the volume.
pub fn centered_origin(center: [usize; 3], dims: Dims, patch: Dims) -> [i64; 3] {
    [0, 1, 2].map(|a| {
        let (d, p) = (dims.0[a], patch.0[a]);
        if d <= p {
            0
        } else {
            center[a].saturating_sub(p / 2).min(d - p) as i64
        }
    })
}

/// One patch centred on the first positive click (or the first click).
pub fn point_local_inference(
    vol: &Volume,
    points: &[PointPrompt],
    pred: &dyn Predictor,
    patch: Dims,
    threshold: f32,
) -> Result<LocalResult> {
    let anchor = points
        .iter()
        .find(|p| p.is_positive())
        .or(points.first())
        .ok_or_else(|| Error::arg("point inference needs at least one click"))?;
    point_local_inference_at(vol, points, anchor.position, pred, patch, threshold)
}

/// Like [`point_local_inference`] but centred on an explicit voxel.
pub fn point_local_inference_at(
    vol: &Volume,
    points: &[PointPrompt],
    center: [usize; 3],
    pred: &dyn Predictor,
    patch: Dims,
    threshold: f32,
) -> Result<LocalResult> {
    if points.is_empty() {
        return Err(Error::arg("point inference needs at least one click"));
    }
    let dims = vol.dims();
    for p in points {
        p.validate(dims, None)?;
    }
    dims.check_coord(center)?;
    let origin = centered_origin(center, dims, patch);
    let p = crop_patch(vol, origin, patch)?;
    let prob = pred.interactive(&p, points)?;
    check_output(&p, &prob)?;
    let mut mask = BinaryMask::empty(dims);
    for (i, &v) in prob.iter().enumerate() {
        if v > threshold && !p.pad_mask[i] {
            if let Some(g) = p.to_parent(p.size.coord(i), dims) {
                mask.set(g, true);
            }
        }
    }
    Ok(LocalResult {
        mask,
        origin,
        size: patch,
    })
}
