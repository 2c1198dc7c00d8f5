//! Click-anchored merge of interactive output into the automatic mask, and
//! interactive sessions with undo.
//!
//! The merge adds or removes only connected components that contain a click:
//!
//! ```text
//! add candidates  = CC(M_p ∧ ¬M_a)    (+ CC(M_p) if a positive click lies in M_a)
//! remove cands    = CC(M_a ∧ ¬M_p)
//! out             = (M_a ∪ add candidates hit by a positive click)
//!                   ∖ remove candidates hit by a negative click
//! ```
//!
//! Union of components that contain a seed is exactly the flood fill from
//! those seeds, which is how it is computed here.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::sliding::{point_local_inference_at, DEFAULT_PATCH, DEFAULT_THRESHOLD};
use crate::inference::{PointContext, PointPrompt, Polarity, Predictor};
use crate::morphology::Connectivity;
use crate::volume::{BinaryMask, Coord, Dims, Volume};

#[derive(Debug, Clone, Copy)]
pub struct MergeInput<'a> {
    pub auto: &'a BinaryMask,
    pub interactive: &'a BinaryMask,
    pub positive: &'a [Coord],
    pub negative: &'a [Coord],
    pub connectivity: Connectivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeParts {
    pub mask: BinaryMask,
    /// Selected addition components.
    pub added: BinaryMask,
    /// Selected removal components.
    pub removed: BinaryMask,
}

/// Marks every voxel connected to a seed through voxels where `inside` holds.
/// Seeds outside the region are ignored.
fn flood(dims: Dims, inside: impl Fn(usize) -> bool, seeds: &[Coord], conn: Connectivity, out: &mut [bool]) {
    let [nx, ny, nz] = dims.0.map(|v| v as i64);
    let offs: Vec<[i64; 3]> = conn.offsets().into_iter().map(|o| o.map(|v| v as i64)).collect();
    let mut stack: Vec<usize> = Vec::new();
    for &s in seeds {
        let i = dims.index(s);
        if inside(i) && !out[i] {
            out[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let [x, y, z] = dims.coord(i).map(|v| v as i64);
        for o in &offs {
            let (xx, yy, zz) = (x + o[0], y + o[1], z + o[2]);
            if xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz {
                continue;
            }
            let j = (xx + nx * (yy + ny * zz)) as usize;
            if !out[j] && inside(j) {
                out[j] = true;
                stack.push(j);
            }
        }
    }
}

pub fn merge_interactive(input: &MergeInput) -> Result<BinaryMask> {
    Ok(merge_parts(input)?.mask)
}

pub fn merge_parts(input: &MergeInput) -> Result<MergeParts> {
    let dims = input.auto.dims();
    if input.interactive.dims() != dims {
        return Err(Error::arg(format!(
            "automatic mask is {:?} but interactive mask is {:?}",
            dims.0,
            input.interactive.dims().0
        )));
    }
    for &c in input.positive.iter().chain(input.negative) {
        dims.check_coord(c)?;
    }
    let a = input.auto.data();
    let p = input.interactive.data();
    let conn = input.connectivity;
    let mut added = vec![false; dims.len()];
    flood(dims, |i| p[i] && !a[i], input.positive, conn, &mut added);
    if input.positive.iter().any(|&c| input.auto.get(c)) {
        let mut whole = vec![false; dims.len()];
        flood(dims, |i| p[i], input.positive, conn, &mut whole);
        added.iter_mut().zip(whole).for_each(|(a, w)| *a |= w);
    }
    let mut removed = vec![false; dims.len()];
    flood(dims, |i| a[i] && !p[i], input.negative, conn, &mut removed);
    let out = (0..dims.len()).map(|i| (a[i] || added[i]) && !removed[i]).collect();
    Ok(MergeParts {
        mask: BinaryMask::new(dims, out)?,
        added: BinaryMask::new(dims, added)?,
        removed: BinaryMask::new(dims, removed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub patch: Dims,
    pub threshold: f32,
    pub connectivity: Connectivity,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            patch: Dims::cube(DEFAULT_PATCH),
            threshold: DEFAULT_THRESHOLD,
            connectivity: Connectivity::default(),
        }
    }
}

/// Click log in the interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub xyz: Coord,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickLog {
    pub clicks: Vec<ClickRecord>,
    /// Class index, or `null` for zero-shot.
    pub class: Option<u32>,
}

/// One volume, one target structure, one editing history.
pub struct Session {
    volume: Arc<Volume>,
    context: PointContext,
    auto: BinaryMask,
    clicks: Vec<PointPrompt>,
    current: BinaryMask,
    history: Vec<BinaryMask>,
    cfg: SessionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickOutcome {
    /// Inclusive bounds of the voxels that changed, if any did.
    pub changed_bbox: Option<(Coord, Coord)>,
    pub patch_origin: [i64; 3],
}

impl Session {
    pub fn new(volume: Arc<Volume>, context: PointContext, cfg: SessionConfig) -> Self {
        let auto = BinaryMask::empty(volume.dims());
        Session {
            current: auto.clone(),
            auto,
            volume,
            context,
            clicks: Vec::new(),
            history: Vec::new(),
            cfg,
        }
    }

    pub fn volume(&self) -> &Arc<Volume> {
        &self.volume
    }

    pub fn context(&self) -> PointContext {
        self.context
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn auto_mask(&self) -> &BinaryMask {
        &self.auto
    }

    pub fn current(&self) -> &BinaryMask {
        &self.current
    }

    pub fn clicks(&self) -> &[PointPrompt] {
        &self.clicks
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }

    /// Replaces the automatic mask. Only allowed before any click.
    pub fn set_auto(&mut self, mask: BinaryMask) -> Result<()> {
        if mask.dims() != self.volume.dims() {
            return Err(Error::arg("automatic mask dims differ from the volume"));
        }
        if !self.clicks.is_empty() {
            return Err(Error::State("automatic mask is fixed once clicks exist".into()));
        }
        self.current = mask.clone();
        self.auto = mask;
        Ok(())
    }

    fn step(&self, from: &BinaryMask, clicks: &[PointPrompt], pred: &dyn Predictor) -> Result<(BinaryMask, [i64; 3])> {
        let last = clicks.last().expect("nonempty click log");
        let local = point_local_inference_at(
            &self.volume,
            clicks,
            last.position,
            pred,
            self.cfg.patch,
            self.cfg.threshold,
        )
        .map_err(|e| match e {
            Error::Predictor(m) => Error::Predictor(format!("session click {}: {m}", clicks.len())),
            other => other,
        })?;
        let pos: Vec<Coord> = clicks.iter().filter(|c| c.is_positive()).map(|c| c.position).collect();
        let neg: Vec<Coord> = clicks.iter().filter(|c| !c.is_positive()).map(|c| c.position).collect();
        let mask = merge_interactive(&MergeInput {
            auto: from,
            interactive: &local.mask,
            positive: &pos,
            negative: &neg,
            connectivity: self.cfg.connectivity,
        })?;
        Ok((mask, local.origin))
    }

    /// Runs click-local inference with the whole click log (new click last),
    /// centred on the new click, and merges it into the current mask.
    pub fn apply_click(&mut self, click: PointPrompt, pred: &dyn Predictor) -> Result<ClickOutcome> {
        self.volume.dims().check_coord(click.position)?;
        let mut clicks = self.clicks.clone();
        clicks.push(PointPrompt { context: self.context, ..click });
        let (mask, origin) = self.step(&self.current, &clicks, pred)?;
        let changed_bbox = mask.xor(&self.current)?.bbox();
        let prev = std::mem::replace(&mut self.current, mask);
        self.history.push(prev);
        self.clicks = clicks;
        Ok(ClickOutcome {
            changed_bbox,
            patch_origin: origin,
        })
    }

    pub fn undo(&mut self) -> Result<()> {
        let prev = self
            .history
            .pop()
            .ok_or_else(|| Error::State("nothing to undo".into()))?;
        self.clicks.pop();
        self.current = prev;
        Ok(())
    }

    /// Recomputes the current mask from the automatic mask and the click log.
    pub fn replay(&self, pred: &dyn Predictor) -> Result<BinaryMask> {
        let mut mask = self.auto.clone();
        for k in 1..=self.clicks.len() {
            mask = self.step(&mask, &self.clicks[..k], pred)?.0;
        }
        Ok(mask)
    }

    /// Rebuilds a session by applying `clicks` in order.
    pub fn restore(
        volume: Arc<Volume>,
        context: PointContext,
        cfg: SessionConfig,
        auto: BinaryMask,
        clicks: &[PointPrompt],
        pred: &dyn Predictor,
    ) -> Result<Self> {
        let mut s = Session::new(volume, context, cfg);
        s.set_auto(auto)?;
        for &c in clicks {
            s.apply_click(c, pred)?;
        }
        Ok(s)
    }

    pub fn click_log(&self) -> ClickLog {
        ClickLog {
            clicks: self
                .clicks
                .iter()
                .map(|c| ClickRecord {
                    xyz: c.position,
                    polarity: c.polarity,
                })
                .collect(),
            class: self.context.class(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::OraclePredictor;
    use crate::volume::LabelVolume;

    fn merge(a: &BinaryMask, p: &BinaryMask, pos: &[Coord], neg: &[Coord]) -> BinaryMask {
        merge_interactive(&MergeInput {
            auto: a,
            interactive: p,
            positive: pos,
            negative: neg,
            connectivity: Connectivity::default(),
        })
        .unwrap()
    }

    fn blob(dims: Dims, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn(dims, |c| c.iter().all(|&v| v >= lo && v < hi))
    }

    #[test]
    fn no_clicks_is_identity() {
        let d = Dims::cube(5);
        let a = blob(d, 0, 2);
        let p = blob(d, 1, 4);
        assert_eq!(merge(&a, &p, &[], &[]), a);
    }

    #[test]
    fn positive_click_adds_blob() {
        let d = Dims::cube(5);
        let p = blob(d, 1, 4);
        assert_eq!(merge(&BinaryMask::empty(d), &p, &[[2, 2, 2]], &[]), p);
    }

    #[test]
    fn negative_click_removes_blob() {
        let d = Dims::cube(5);
        let a = blob(d, 1, 4);
        assert!(merge(&a, &BinaryMask::empty(d), &[], &[[2, 2, 2]]).is_empty());
    }

    #[test]
    fn positive_click_inside_auto_adds_interactive_component() {
        let d = Dims::new(8, 3, 3);
        let a = BinaryMask::from_fn(d, |[x, _, _]| x < 3);
        // interactive component overlaps the auto mask and extends past it
        let p = BinaryMask::from_fn(d, |[x, _, _]| (1..6).contains(&x));
        let out = merge(&a, &p, &[[1, 1, 1]], &[]);
        assert_eq!(out, BinaryMask::from_fn(d, |[x, _, _]| x < 6));
    }

    #[test]
    fn background_click_is_noop() {
        let d = Dims::cube(5);
        let a = blob(d, 0, 2);
        let p = blob(d, 3, 5);
        assert_eq!(merge(&a, &p, &[[2, 2, 2]], &[[2, 0, 0]]), a);
    }

    #[test]
    fn rejects_bad_input() {
        let a = BinaryMask::empty(Dims::cube(3));
        let p = BinaryMask::empty(Dims::cube(4));
        let input = MergeInput {
            auto: &a,
            interactive: &p,
            positive: &[],
            negative: &[],
            connectivity: Connectivity::default(),
        };
        assert!(merge_interactive(&input).is_err());
        let input = MergeInput { interactive: &a, positive: &[[3, 0, 0]], ..input };
        assert!(merge_interactive(&input).is_err());
    }

    fn session_fixture() -> (Session, OraclePredictor) {
        let d = Dims::new(12, 6, 6);
        let gt = LabelVolume::from_fn(d, |[x, y, z]| ((x < 4 || x > 7) && y < 4 && z < 4) as u32 * 3);
        let vol = Arc::new(Volume::zeros(d));
        let cfg = SessionConfig { patch: Dims::cube(32), ..Default::default() };
        (
            Session::new(vol, PointContext::Supported(3), cfg),
            OraclePredictor::new(Arc::new(gt)),
        )
    }

    #[test]
    fn session_click_and_undo() {
        let (mut s, o) = session_fixture();
        let out = s.apply_click(PointPrompt::positive([1, 1, 1]), &o).unwrap();
        assert_eq!(s.current().count(), 64);
        assert_eq!(out.changed_bbox, Some(([0, 0, 0], [3, 3, 3])));
        s.apply_click(PointPrompt::positive([9, 1, 1]), &o).unwrap();
        assert_eq!(s.current().count(), 128);
        assert_eq!(s.replay(&o).unwrap(), *s.current());
        s.undo().unwrap();
        assert_eq!(s.current().count(), 64);
        s.undo().unwrap();
        assert!(s.current().is_empty());
        assert!(matches!(s.undo(), Err(Error::State(_))));
    }

    #[test]
    fn negative_click_removes_false_island() {
        let (mut s, o) = session_fixture();
        let d = s.volume().dims();
        // auto mask: the true left blob plus a false island at the far corner
        let auto = BinaryMask::from_fn(d, |[x, y, z]| (x < 4 && y < 4 && z < 4) || (x == 11 && y == 5 && z == 5));
        s.set_auto(auto).unwrap();
        s.apply_click(PointPrompt::negative([11, 5, 5]), &o).unwrap();
        assert_eq!(s.current().count(), 64);
        assert!(!s.current().get([11, 5, 5]));
    }

    #[test]
    fn redo_is_deterministic() {
        let (mut s, o) = session_fixture();
        s.apply_click(PointPrompt::positive([1, 1, 1]), &o).unwrap();
        let m = s.current().clone();
        s.undo().unwrap();
        s.apply_click(PointPrompt::positive([1, 1, 1]), &o).unwrap();
        assert_eq!(*s.current(), m);
        let log = s.click_log();
        assert_eq!(log.class, Some(3));
        let v = serde_json::to_value(&log).unwrap();
        assert_eq!(v["clicks"][0]["polarity"], "pos");
    }
}
