//! Point and class prompt sampling for training pairs, plus the click
//! policy used when simulating a user.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ClassPrompt, PointContext, PointPrompt, Polarity};
use crate::morphology::{connected_components, largest_component, neighbors, Connectivity};
use crate::supervoxel::SupervoxelMap;
use crate::volume::{BinaryMask, Coord, LabelVolume};

/// A voxel-count bound, absolute or relative to the class mask being edited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeLimit {
    Voxels(u64),
    OfMask(f64),
}

impl SizeLimit {
    pub fn resolve(self, mask_size: usize) -> f64 {
        match self {
            SizeLimit::Voxels(v) => v as f64,
            SizeLimit::OfMask(f) => f * mask_size as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Manual,
    Pseudo,
    Supervoxel,
    Edited,
}

/// Which branch of [`sample_pair`] was drawn. An edit with no admissible
/// supervoxel falls back to a direct pair but still reports `Edit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleBranch {
    Direct,
    Supervoxel,
    Edit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub points: Vec<PointPrompt>,
    pub target: BinaryMask,
    pub zero_shot: bool,
    pub source: PairSource,
    pub branch: SampleBranch,
    /// Class the target came from, if any.
    pub class: Option<u32>,
}

impl TrainingPair {
    /// Positives inside the target, negatives outside.
    pub fn check(&self) -> Result<()> {
        for p in &self.points {
            if self.target.get(p.position) != p.is_positive() {
                return Err(Error::Contract(format!(
                    "{:?} click at {:?} on the wrong side of the target",
                    p.polarity, p.position
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub p_direct: f64,
    /// Share of the non-direct draws that use a whole supervoxel; the rest edit a class mask.
    pub p_supervoxel: f64,
    pub edit_size_min: SizeLimit,
    pub edit_size_max: SizeLimit,
    pub zero_shot_size_limit: SizeLimit,
    pub max_iter: usize,
    pub connectivity: Connectivity,
    /// Classes whose clicks use the ambiguity context.
    pub ambiguous: Vec<u32>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p_direct: 0.5,
            p_supervoxel: 0.5,
            edit_size_min: SizeLimit::OfMask(0.05),
            edit_size_max: SizeLimit::OfMask(0.5),
            zero_shot_size_limit: SizeLimit::OfMask(0.5),
            max_iter: 5,
            connectivity: Connectivity::default(),
            ambiguous: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_direct", self.p_direct), ("p_supervoxel", self.p_supervoxel)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let positive = |l: SizeLimit| match l {
            SizeLimit::Voxels(v) => v > 0,
            SizeLimit::OfMask(f) => f > 0.0 && f.is_finite(),
        };
        if !positive(self.edit_size_min) || !positive(self.edit_size_max) || !positive(self.zero_shot_size_limit) {
            return Err(Error::arg("size limits must be positive"));
        }
        if self.edit_size_min.resolve(1000) > self.edit_size_max.resolve(1000) {
            return Err(Error::arg("edit_size_min exceeds edit_size_max"));
        }
        Ok(())
    }

    fn context(&self, class: u32) -> PointContext {
        if self.ambiguous.contains(&class) {
            PointContext::Ambiguous(class)
        } else {
            PointContext::Supported(class)
        }
    }
}

/// Uniformly random set voxel.
pub fn sample_voxel(mask: &BinaryMask, rng: &mut impl Rng) -> Option<Coord> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let k = rng.gen_range(0..n);
    mask.coords().nth(k)
}

/// One training pair. `y` (manual) is preferred over `y_p` (pseudo).
pub fn sample_pair(
    y: Option<&LabelVolume>,
    y_p: Option<&LabelVolume>,
    y_s: &SupervoxelMap,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<TrainingPair> {
    cfg.validate()?;
    let (label, source) = match (y, y_p) {
        (Some(l), _) => (l, PairSource::Manual),
        (None, Some(l)) => (l, PairSource::Pseudo),
        (None, None) => return Err(Error::arg("at least one of the manual or pseudo labels is required")),
    };
    if label.dims() != y_s.dims {
        return Err(Error::arg("label and supervoxel dims differ"));
    }
    let classes = label.classes();
    let has_sv = y_s.n_segments_actual > 0 && !y_s.labels.is_empty();
    if classes.is_empty() && !has_sv {
        return Err(Error::NoSample("empty label and empty supervoxel map".into()));
    }
    let direct = rng.gen::<f64>() < cfg.p_direct;
    let whole_sv = rng.gen::<f64>() < cfg.p_supervoxel;
    if (direct && !classes.is_empty()) || !has_sv {
        return Ok(direct_pair(label, &classes, source, SampleBranch::Direct, cfg, rng));
    }
    if whole_sv || classes.is_empty() {
        return Ok(supervoxel_pair(y_s, rng));
    }
    let class = *classes.choose(rng).unwrap();
    match edit_pair(label, class, y_s, cfg, rng) {
        Some(p) => Ok(p),
        None => Ok(direct_pair(label, &[class], source, SampleBranch::Edit, cfg, rng)),
    }
}

fn direct_pair(
    label: &LabelVolume,
    classes: &[u32],
    source: PairSource,
    branch: SampleBranch,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> TrainingPair {
    let class = *classes.choose(rng).unwrap();
    let target = label.class_mask(class);
    let p = sample_voxel(&target, rng).expect("present class is nonempty");
    TrainingPair {
        points: vec![PointPrompt::new(p, Polarity::Positive, cfg.context(class))],
        target,
        zero_shot: false,
        source,
        branch,
        class: Some(class),
    }
}

fn supervoxel_pair(y_s: &SupervoxelMap, rng: &mut impl Rng) -> TrainingPair {
    let id = rng.gen_range(1..=y_s.n_segments_actual as u32);
    let target = y_s.region(id);
    let p = sample_voxel(&target, rng).expect("supervoxels are nonempty");
    TrainingPair {
        points: vec![PointPrompt::positive(p)],
        target,
        zero_shot: true,
        source: PairSource::Supervoxel,
        branch: SampleBranch::Supervoxel,
        class: None,
    }
}

/// Supervoxel ids touching the mask from outside (add) or overlapping it
/// (subtract), with the voxel count each would add or remove.
fn edit_candidates(mask: &BinaryMask, y_s: &SupervoxelMap, conn: Connectivity) -> (Vec<(u32, usize)>, Vec<(u32, usize)>) {
    let n = y_s.n_segments_actual;
    let mut outside = vec![0usize; n + 1];
    let mut inside = vec![0usize; n + 1];
    let mut adjacent = vec![false; n + 1];
    let dims = mask.dims();
    for (i, &l) in y_s.labels.iter().enumerate() {
        if mask.data()[i] {
            inside[l as usize] += 1;
        } else {
            outside[l as usize] += 1;
            if !adjacent[l as usize] && neighbors(dims, dims.coord(i), conn).any(|c| mask.get(c)) {
                adjacent[l as usize] = true;
            }
        }
    }
    let add = (1..=n).filter(|&l| adjacent[l]).map(|l| (l as u32, outside[l])).collect();
    let sub = (1..=n).filter(|&l| inside[l] > 0).map(|l| (l as u32, inside[l])).collect();
    (add, sub)
}

fn edit_pair(
    label: &LabelVolume,
    class: u32,
    y_s: &SupervoxelMap,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Option<TrainingPair> {
    let mask = label.class_mask(class);
    let size = mask.count();
    let (lo, hi) = (cfg.edit_size_min.resolve(size), cfg.edit_size_max.resolve(size));
    let (add, sub) = edit_candidates(&mask, y_s, cfg.connectivity);
    let fits = |&&(_, s): &&(u32, usize)| (s as f64) >= lo && (s as f64) <= hi;
    let add: Vec<_> = add.iter().filter(fits).copied().collect();
    // never remove the whole target
    let sub: Vec<_> = sub.iter().filter(fits).filter(|&&(_, s)| s < size).copied().collect();
    let subtract_first = rng.gen::<bool>();
    let order = if subtract_first { [true, false] } else { [false, true] };
    for subtract in order {
        let pool = if subtract { &sub } else { &add };
        let Some(&(id, edit)) = pool.choose(rng) else {
            continue;
        };
        let region = y_s.region(id);
        let zero_shot = edit as f64 > cfg.zero_shot_size_limit.resolve(size);
        let ctx = if zero_shot { PointContext::ZeroShot } else { cfg.context(class) };
        let (target, points) = if subtract {
            let removed = region.and(&mask).ok()?;
            let target = mask.and_not(&region).ok()?;
            let pos = sample_voxel(&target, rng)?;
            let neg = sample_voxel(&removed, rng)?;
            (
                target,
                vec![
                    PointPrompt::new(pos, Polarity::Positive, ctx),
                    PointPrompt::new(neg, Polarity::Negative, ctx),
                ],
            )
        } else {
            let added = region.and_not(&mask).ok()?;
            let target = mask.or(&region).ok()?;
            let pos = sample_voxel(&added, rng)?;
            (target, vec![PointPrompt::new(pos, Polarity::Positive, ctx)])
        };
        return Some(TrainingPair {
            points,
            target,
            zero_shot,
            source: PairSource::Edited,
            branch: SampleBranch::Edit,
            class: Some(class),
        });
    }
    None
}

/// One negative click in `pred ∧ ¬gt` and one positive click in `gt ∧ ¬pred`,
/// each only if that region is nonempty.
pub fn sample_fp_fn_points(
    pred: &BinaryMask,
    gt: &BinaryMask,
    context: PointContext,
    rng: &mut impl Rng,
) -> Result<Vec<PointPrompt>> {
    let fp = pred.and_not(gt)?;
    let fneg = gt.and_not(pred)?;
    let mut out = Vec::with_capacity(2);
    if let Some(c) = sample_voxel(&fp, rng) {
        out.push(PointPrompt::new(c, Polarity::Negative, context));
    }
    if let Some(c) = sample_voxel(&fneg, rng) {
        out.push(PointPrompt::new(c, Polarity::Positive, context));
    }
    Ok(out)
}

/// Runs the iterative correction rounds: starting from the pair's clicks,
/// each round asks `predict` for a mask and adds FP/FN clicks against the
/// target. Returns the click list seen by every round (round 0 first).
pub fn iterative_points(
    pair: &TrainingPair,
    mut predict: impl FnMut(&[PointPrompt]) -> Result<BinaryMask>,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<PointPrompt>>> {
    let ctx = pair.points.first().map(|p| p.context).unwrap_or(PointContext::ZeroShot);
    let mut points = pair.points.clone();
    let mut rounds = vec![points.clone()];
    for _ in 0..cfg.max_iter {
        let pred = predict(&points)?;
        let extra = sample_fp_fn_points(&pred, &pair.target, ctx, rng)?;
        if extra.is_empty() {
            break;
        }
        points.extend(extra);
        rounds.push(points.clone());
    }
    Ok(rounds)
}

/// Set voxel nearest to the mask's coordinate centroid; ties go to the
/// earliest voxel in scan order.
pub fn foreground_center(mask: &BinaryMask) -> Option<Coord> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let mut sum = [0f64; 3];
    for c in mask.coords() {
        for a in 0..3 {
            sum[a] += c[a] as f64;
        }
    }
    let centroid = sum.map(|s| s / n as f64);
    let mut best: Option<(f64, Coord)> = None;
    for c in mask.coords() {
        let d: f64 = (0..3).map(|a| (c[a] as f64 - centroid[a]).powi(2)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Click policy of a simulated user. The first click goes to the foreground
/// centre; later clicks sample the larger of the largest false-positive and
/// false-negative components (false negatives win ties).
pub fn next_eval_click(
    pred: &BinaryMask,
    gt: &BinaryMask,
    rng: &mut impl Rng,
    first: bool,
    context: PointContext,
    conn: Connectivity,
) -> Result<Option<PointPrompt>> {
    if pred.dims() != gt.dims() {
        return Err(Error::arg("prediction and ground truth dims differ"));
    }
    if first {
        let c = foreground_center(gt).ok_or_else(|| Error::arg("first click needs a nonempty ground truth"))?;
        return Ok(Some(PointPrompt::new(c, Polarity::Positive, context)));
    }
    let fp = largest_component(&connected_components(&pred.and_not(gt)?, conn));
    let fneg = largest_component(&connected_components(&gt.and_not(pred)?, conn));
    let (region, polarity) = match (fp.count(), fneg.count()) {
        (0, 0) => return Ok(None),
        (a, b) if a > b => (fp, Polarity::Negative),
        _ => (fneg, Polarity::Positive),
    };
    let c = sample_voxel(&region, rng).expect("nonempty region");
    Ok(Some(PointPrompt::new(c, polarity, context)))
}

pub const DEFAULT_MAX_FG: usize = 32;
pub const DEFAULT_MAX_BG: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub prompt: ClassPrompt,
    pub target: BinaryMask,
    /// Class annotated in the dataset but absent here; target is empty.
    pub background: bool,
}

/// Foreground prompts from classes present in `label`, background prompts
/// from `label_set` minus the present classes.
pub fn sample_class_prompts(
    label: &LabelVolume,
    label_set: &BTreeSet<u32>,
    max_fg: usize,
    max_bg: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ClassSample>> {
    if label_set.is_empty() {
        return Err(Error::arg("label_set must not be empty"));
    }
    let present = label.classes();
    let absent: Vec<u32> = label_set.iter().copied().filter(|c| !present.contains(c)).collect();
    let mut out = Vec::new();
    for &c in present.choose_multiple(rng, max_fg.min(present.len())) {
        out.push(ClassSample {
            prompt: ClassPrompt::new(c)?,
            target: label.class_mask(c),
            background: false,
        });
    }
    for &c in absent.choose_multiple(rng, max_bg.min(absent.len())) {
        out.push(ClassSample {
            prompt: ClassPrompt::new(c)?,
            target: BinaryMask::empty(label.dims()),
            background: true,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn slabs(dims: Dims, n: u32) -> SupervoxelMap {
        let l = LabelVolume::from_fn(dims, |[x, _, _]| (x as u32 * n / dims.nx() as u32) + 1);
        SupervoxelMap::from_labels(&l).unwrap()
    }

    #[test]
    fn direct_branch_forced() {
        let dims = Dims::cube(6);
        let y = LabelVolume::from_fn(dims, |[x, y, _]| (x < 3 && y < 3) as u32 * 7);
        let cfg = SamplerConfig { p_direct: 1.0, ..Default::default() };
        for s in 0..20 {
            let p = sample_pair(Some(&y), None, &slabs(dims, 3), &cfg, &mut rng(s)).unwrap();
            assert_eq!(p.target, y.class_mask(7));
            assert_eq!(p.points.len(), 1);
            assert_eq!(p.source, PairSource::Manual);
            p.check().unwrap();
        }
    }

    #[test]
    fn supervoxel_branch_forced() {
        let dims = Dims::cube(6);
        let y = LabelVolume::from_fn(dims, |[x, _, _]| (x < 3) as u32);
        let sv = slabs(dims, 3);
        let cfg = SamplerConfig { p_direct: 0.0, p_supervoxel: 1.0, ..Default::default() };
        let p = sample_pair(None, Some(&y), &sv, &cfg, &mut rng(1)).unwrap();
        assert!(p.zero_shot);
        assert_eq!(p.source, PairSource::Supervoxel);
        let id = sv.labels[dims.index(p.points[0].position)];
        assert_eq!(p.target, sv.region(id));
    }

    #[test]
    fn large_subtraction_is_zero_shot() {
        let dims = Dims::new(8, 2, 2);
        // class covers x < 6; supervoxels are x pairs
        let y = LabelVolume::from_fn(dims, |[x, _, _]| (x < 6) as u32 * 2);
        let sv = slabs(dims, 4);
        let cfg = SamplerConfig {
            p_direct: 0.0,
            p_supervoxel: 0.0,
            edit_size_min: SizeLimit::Voxels(1),
            edit_size_max: SizeLimit::Voxels(100),
            zero_shot_size_limit: SizeLimit::Voxels(4),
            ..Default::default()
        };
        let mut saw_sub = false;
        for s in 0..40 {
            let p = sample_pair(Some(&y), None, &sv, &cfg, &mut rng(s)).unwrap();
            assert_eq!(p.source, PairSource::Edited);
            p.check().unwrap();
            // every supervoxel edit changes 8 voxels > 4
            assert!(p.zero_shot);
            if p.points.len() == 2 {
                saw_sub = true;
                assert_eq!(p.target.count(), 16);
            }
        }
        assert!(saw_sub);
    }

    #[test]
    fn no_labels_errors() {
        let sv = slabs(Dims::cube(2), 1);
        assert!(sample_pair(None, None, &sv, &SamplerConfig::default(), &mut rng(0)).is_err());
    }

    #[test]
    fn fp_fn_points() {
        let dims = Dims::cube(5);
        let gt = BinaryMask::from_fn(dims, |[x, _, _]| x < 2);
        assert!(sample_fp_fn_points(&gt, &gt, PointContext::ZeroShot, &mut rng(0)).unwrap().is_empty());
        let pts = sample_fp_fn_points(&BinaryMask::empty(dims), &gt, PointContext::ZeroShot, &mut rng(0)).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].is_positive() && gt.get(pts[0].position));
        let pred = BinaryMask::from_fn(dims, |[x, _, _]| x == 1 || x == 4);
        let pts = sample_fp_fn_points(&pred, &gt, PointContext::ZeroShot, &mut rng(3)).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(!pts[0].is_positive() && pts[0].position[0] == 4);
        assert!(pts[1].is_positive() && pts[1].position[0] == 0);
    }

    #[test]
    fn first_click_centre() {
        let dims = Dims::cube(7);
        let gt = BinaryMask::from_fn(dims, |c| c.iter().all(|&v| (2..5).contains(&v)));
        let p = next_eval_click(&BinaryMask::empty(dims), &gt, &mut rng(0), true, PointContext::ZeroShot, Connectivity::default())
            .unwrap()
            .unwrap();
        assert_eq!(p.position, [3, 3, 3]);
        assert!(p.is_positive());
        assert!(next_eval_click(&gt, &BinaryMask::empty(dims), &mut rng(0), true, PointContext::ZeroShot, Connectivity::default()).is_err());
    }

    #[test]
    fn larger_error_region_wins() {
        let dims = Dims::new(12, 1, 1);
        let gt = BinaryMask::from_fn(dims, |[x, _, _]| x < 2);
        let pred = BinaryMask::from_fn(dims, |[x, _, _]| x >= 2);
        let p = next_eval_click(&pred, &gt, &mut rng(0), false, PointContext::ZeroShot, Connectivity::default())
            .unwrap()
            .unwrap();
        assert!(!p.is_positive());
        assert!(p.position[0] >= 2);
        assert!(next_eval_click(&gt, &gt, &mut rng(0), false, PointContext::ZeroShot, Connectivity::default())
            .unwrap()
            .is_none());
        // tie goes to the false negative
        let pred = BinaryMask::from_fn(dims, |[x, _, _]| x == 5 || x == 6);
        let p = next_eval_click(&pred, &gt, &mut rng(0), false, PointContext::ZeroShot, Connectivity::default())
            .unwrap()
            .unwrap();
        assert!(p.is_positive());
    }

    #[test]
    fn class_prompts_background_disjoint() {
        let dims = Dims::cube(4);
        let label = LabelVolume::from_fn(dims, |[x, _, _]| [1, 3, 0, 1][x]);
        let set: BTreeSet<u32> = [1, 2, 3, 4].into();
        let out = sample_class_prompts(&label, &set, 32, 4, &mut rng(9)).unwrap();
        let fg: BTreeSet<u32> = out.iter().filter(|s| !s.background).map(|s| s.prompt.index()).collect();
        let bg: BTreeSet<u32> = out.iter().filter(|s| s.background).map(|s| s.prompt.index()).collect();
        assert_eq!(fg, [1, 3].into());
        assert_eq!(bg, [2, 4].into());
        assert!(out.iter().filter(|s| s.background).all(|s| s.target.is_empty()));
        let set: BTreeSet<u32> = [1, 3].into();
        let out = sample_class_prompts(&label, &set, 1, 4, &mut rng(9)).unwrap();
        assert_eq!(out.len(), 1);
        assert!(sample_class_prompts(&label, &BTreeSet::new(), 1, 1, &mut rng(0)).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let dims = Dims::cube(6);
        let y = LabelVolume::from_fn(dims, |[x, y, _]| (x + y) as u32 % 3);
        let sv = slabs(dims, 3);
        let cfg = SamplerConfig::default();
        for s in 0..10 {
            let a = sample_pair(Some(&y), None, &sv, &cfg, &mut rng(s)).unwrap();
            let b = sample_pair(Some(&y), None, &sv, &cfg, &mut rng(s)).unwrap();
            assert_eq!(a, b);
        }
    }
}
