//! Predictor contract and the deterministic reference predictors.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::morphology::{connected_components, ComponentMap, Connectivity};
use crate::volume::{Coord, LabelVolume, Patch};

use super::prompt::{ClassPrompt, PointPrompt};

/// A segmentation model behind a patch-level interface.
///
/// Both calls return one probability in `[0, 1]` per patch voxel, laid out
/// like the patch. Point positions are in parent-volume coordinates; a patch
/// knows its own origin.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn auto(&self, patch: &Patch, prompt: ClassPrompt) -> Result<Vec<f32>>;

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>>;

    /// `false` if calls must be serialized.
    fn concurrent(&self) -> bool {
        true
    }

    fn supports_auto(&self) -> bool {
        true
    }
}

/// Probability `p` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f32);

impl Predictor for ConstantPredictor {
    fn name(&self) -> &str {
        "constant"
    }

    fn auto(&self, patch: &Patch, _: ClassPrompt) -> Result<Vec<f32>> {
        Ok(vec![self.0; patch.len()])
    }

    fn interactive(&self, patch: &Patch, _: &[PointPrompt]) -> Result<Vec<f32>> {
        Ok(vec![self.0; patch.len()])
    }
}

/// 1 where `lo <= v <= hi`, else 0, regardless of prompt. A crude automatic
/// branch for intensity-separable phantoms.
#[derive(Debug, Clone, Copy)]
pub struct IntensityWindowPredictor {
    pub lo: f32,
    pub hi: f32,
}

impl IntensityWindowPredictor {
    fn window(&self, patch: &Patch) -> Vec<f32> {
        patch
            .data
            .iter()
            .zip(&patch.pad_mask)
            .map(|(&v, &pad)| (!pad && v >= self.lo && v <= self.hi) as u8 as f32)
            .collect()
    }
}

impl Predictor for IntensityWindowPredictor {
    fn name(&self) -> &str {
        "window"
    }

    fn auto(&self, patch: &Patch, _: ClassPrompt) -> Result<Vec<f32>> {
        Ok(self.window(patch))
    }

    fn interactive(&self, patch: &Patch, _: &[PointPrompt]) -> Result<Vec<f32>> {
        Ok(self.window(patch))
    }
}

/// Reads answers from a ground-truth label volume.
pub struct OraclePredictor {
    gt: Arc<LabelVolume>,
    conn: Connectivity,
    components: Mutex<HashMap<u32, Arc<ComponentMap>>>,
}

impl OraclePredictor {
    pub fn new(gt: Arc<LabelVolume>) -> Self {
        Self::with_connectivity(gt, Connectivity::default())
    }

    pub fn with_connectivity(gt: Arc<LabelVolume>, conn: Connectivity) -> Self {
        OraclePredictor {
            gt,
            conn,
            components: Mutex::new(HashMap::new()),
        }
    }

    pub fn ground_truth(&self) -> &LabelVolume {
        &self.gt
    }

    fn class_components(&self, class: u32) -> Arc<ComponentMap> {
        let mut cache = self.components.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(class)
            .or_insert_with(|| Arc::new(connected_components(&self.gt.class_mask(class), self.conn)))
            .clone()
    }

    /// Reads a per-voxel value of the parent grid through the patch window.
    fn read_through(&self, patch: &Patch, f: impl Fn(usize) -> bool) -> Vec<f32> {
        let dims = self.gt.dims();
        (0..patch.len())
            .map(|i| match patch.to_parent(patch.size.coord(i), dims) {
                Some(g) if f(dims.index(g)) => 1.0,
                _ => 0.0,
            })
            .collect()
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn auto(&self, patch: &Patch, prompt: ClassPrompt) -> Result<Vec<f32>> {
        let c = prompt.index();
        let gt = self.gt.data();
        Ok(self.read_through(patch, |i| c != 0 && gt[i] == c))
    }

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>> {
        let dims = self.gt.dims();
        for p in points {
            dims.check_coord(p.position)?;
        }
        let Some(first) = points.iter().find(|p| p.is_positive()) else {
            return Ok(vec![0.0; patch.len()]);
        };
        let class = self.gt.get(first.position);
        if class == 0 {
            return Ok(vec![0.0; patch.len()]);
        }
        let cmap = self.class_components(class);
        let mut keep = vec![false; cmap.count + 1];
        let id_at = |c: Coord| cmap.labels[dims.index(c)] as usize;
        for p in points.iter().filter(|p| p.is_positive()) {
            keep[id_at(p.position)] = true;
        }
        for p in points.iter().filter(|p| !p.is_positive()) {
            keep[id_at(p.position)] = false;
        }
        keep[0] = false;
        Ok(self.read_through(patch, |i| keep[cmap.labels[i] as usize]))
    }
}

/// Intensity flood fill from the clicks, inside the patch.
#[derive(Debug, Clone, Copy)]
pub struct RegionGrowPredictor {
    pub tolerance: f32,
    pub connectivity: Connectivity,
}

impl RegionGrowPredictor {
    pub fn new(tolerance: f32) -> Result<Self> {
        if !(tolerance >= 0.0) {
            return Err(Error::arg(format!("tolerance must be >= 0, got {tolerance}")));
        }
        Ok(RegionGrowPredictor {
            tolerance,
            connectivity: Connectivity::default(),
        })
    }

    /// Marks everything reachable from `seed` within tolerance of the seed value.
    fn grow(&self, patch: &Patch, seed: Coord, out: &mut [bool]) {
        let dims = patch.size;
        let s = dims.index(seed);
        if out[s] {
            return;
        }
        let v0 = patch.data[s];
        let offs = self.connectivity.offsets();
        let mut stack = vec![seed];
        out[s] = true;
        while let Some(c) = stack.pop() {
            for o in &offs {
                let n = [0, 1, 2].map(|a| c[a] as i64 + o[a] as i64);
                if (0..3).any(|a| n[a] < 0 || n[a] >= dims.0[a] as i64) {
                    continue;
                }
                let n = n.map(|v| v as usize);
                let j = dims.index(n);
                if out[j] || patch.pad_mask[j] || (patch.data[j] - v0).abs() > self.tolerance {
                    continue;
                }
                out[j] = true;
                stack.push(n);
            }
        }
    }
}

impl Predictor for RegionGrowPredictor {
    fn name(&self) -> &str {
        "region_grow"
    }

    fn auto(&self, _: &Patch, _: ClassPrompt) -> Result<Vec<f32>> {
        Err(Error::Unsupported(
            "region_grow predictor has no automatic branch".into(),
        ))
    }

    fn supports_auto(&self) -> bool {
        false
    }

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>> {
        let n = patch.len();
        let mut pos = vec![false; n];
        let mut neg = vec![false; n];
        for p in points {
            let Some(local) = patch.to_local(p.position) else {
                continue;
            };
            if patch.pad_mask[patch.size.index(local)] {
                continue;
            }
            let target = if p.is_positive() { &mut pos } else { &mut neg };
            self.grow(patch, local, target);
        }
        Ok(pos
            .iter()
            .zip(&neg)
            .map(|(&a, &b)| (a && !b) as u8 as f32)
            .collect())
    }
}

/// Automatic calls go to one predictor, interactive calls to another.
pub struct CompositePredictor {
    pub auto: Box<dyn Predictor>,
    pub interactive: Box<dyn Predictor>,
}

impl Predictor for CompositePredictor {
    fn name(&self) -> &str {
        "composite"
    }

    fn auto(&self, patch: &Patch, prompt: ClassPrompt) -> Result<Vec<f32>> {
        self.auto.auto(patch, prompt)
    }

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>> {
        self.interactive.interactive(patch, points)
    }

    fn concurrent(&self) -> bool {
        self.auto.concurrent() && self.interactive.concurrent()
    }

    fn supports_auto(&self) -> bool {
        self.auto.supports_auto()
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn auto(&self, patch: &Patch, prompt: ClassPrompt) -> Result<Vec<f32>> {
        (**self).auto(patch, prompt)
    }

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>> {
        (**self).interactive(patch, points)
    }

    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }

    fn supports_auto(&self) -> bool {
        (**self).supports_auto()
    }
}
