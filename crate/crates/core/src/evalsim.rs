//! Dice scoring, simulated click sessions and dataset evaluation.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::editor::{merge_interactive, MergeInput, Session, SessionConfig};
use crate::error::{Error, Result};
use crate::inference::sliding::{centered_origin, check_output, patch_origins, point_local_inference_at, sliding_window};
use crate::inference::{ClassPrompt, PointContext, PointPrompt, Polarity, Predictor, Prompt, SlidingWindowConfig};
use crate::morphology::{connected_components, Connectivity};
use crate::prompts::{foreground_center, next_eval_click};
use crate::volume::{crop_patch, BinaryMask, Coord, LabelVolume, Volume};

/// `2|a ∩ b| / (|a| + |b|)`; two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, sa, sb) = overlap(a, b)?;
    Ok(dice_from_counts(inter, sa, sb))
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    if a.dims() != b.dims() {
        return Err(Error::arg(format!(
            "mask dims differ: {:?} vs {:?}",
            a.dims().0,
            b.dims().0
        )));
    }
    let mut c = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        c.0 += (x && y) as usize;
        c.1 += x as usize;
        c.2 += y as usize;
    }
    Ok(c)
}

fn dice_from_counts(inter: usize, sa: usize, sb: usize) -> f64 {
    if sa + sb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (sa + sb) as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelCounts {
    pub predicted: u64,
    pub reference: u64,
    pub intersection: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    /// Mean dice over the cases that contain the class.
    pub per_class: BTreeMap<u32, f64>,
    /// Mean over the reported classes.
    pub mean: f64,
    pub counts: BTreeMap<u32, VoxelCounts>,
    pub cases: Vec<CaseScore>,
    /// `(case id, class)` pairs skipped because the class is absent from the case.
    pub skipped: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub class: u32,
    pub dice: f64,
}

impl DiceReport {
    pub fn from_scores(cases: Vec<CaseScore>, counts: BTreeMap<u32, VoxelCounts>, skipped: Vec<(String, u32)>) -> Self {
        let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for s in &cases {
            let e = sums.entry(s.class).or_default();
            e.0 += s.dice;
            e.1 += 1;
        }
        let per_class: BTreeMap<u32, f64> = sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect();
        let mean = if per_class.is_empty() {
            0.0
        } else {
            per_class.values().sum::<f64>() / per_class.len() as f64
        };
        DiceReport {
            per_class,
            mean,
            counts,
            cases,
            skipped,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClickCurve {
    /// `(clicks used, dice)`, starting at 0 clicks.
    pub points: Vec<(usize, f64)>,
}

impl ClickCurve {
    pub fn final_dice(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    /// First click count at which dice reaches `target`.
    pub fn clicks_to(&self, target: f64) -> Option<usize> {
        self.points.iter().find(|p| p.1 >= target).map(|p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub session: SessionConfig,
    pub context: PointContext,
    /// Mask before the first click; empty if `None`.
    pub baseline: Option<BinaryMask>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            session: SessionConfig::default(),
            context: PointContext::ZeroShot,
            baseline: None,
        }
    }
}

/// Clicks like a user: the first at the foreground centre, the rest in the
/// largest error component; records dice after every click.
pub fn simulate_session(
    vol: Arc<Volume>,
    gt: &BinaryMask,
    pred: &dyn Predictor,
    max_clicks: usize,
    rng: &mut ChaCha8Rng,
    cfg: &SimulationConfig,
) -> Result<ClickCurve> {
    if max_clicks == 0 {
        return Err(Error::arg("max_clicks must be >= 1"));
    }
    if gt.is_empty() {
        return Err(Error::arg("ground truth mask is empty"));
    }
    if gt.dims() != vol.dims() {
        return Err(Error::arg("ground truth dims differ from the volume"));
    }
    let conn = cfg.session.connectivity;
    let mut s = Session::new(vol, cfg.context, cfg.session.clone());
    if let Some(b) = &cfg.baseline {
        s.set_auto(b.clone())?;
    }
    let mut curve = ClickCurve {
        points: vec![(0, dice(s.current(), gt)?)],
    };
    for k in 1..=max_clicks {
        let click = next_eval_click(s.current(), gt, rng, k == 1, cfg.context, conn)?;
        match click {
            Some(c) => {
                s.apply_click(c, pred)?;
                curve.points.push((k, dice(s.current(), gt)?));
            }
            None => {
                let d = curve.final_dice();
                curve.points.extend((k..=max_clicks).map(|j| (j, d)));
                break;
            }
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Auto,
    Point,
    AutoPoint,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EvalMode::Auto),
            "point" => Ok(EvalMode::Point),
            "auto_point" | "auto+point" => Ok(EvalMode::AutoPoint),
            _ => Err(Error::arg(format!("mode must be auto, point or auto_point, got {s:?}"))),
        }
    }
}

/// Where point mode places its clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMode {
    /// One centre click per sliding-window patch whose window holds foreground.
    #[default]
    PerPatch,
    /// One centre click per connected ground-truth component.
    PerComponent,
}

pub struct Case {
    pub id: String,
    pub image: Arc<Volume>,
    pub label: LabelVolume,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub window: SlidingWindowConfig,
    pub threshold: f32,
    pub point_mode: PointMode,
    pub connectivity: Connectivity,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            window: SlidingWindowConfig::default(),
            threshold: crate::inference::DEFAULT_THRESHOLD,
            point_mode: PointMode::default(),
            connectivity: Connectivity::default(),
            seed: 0,
        }
    }
}

pub type PredictorFactory<'a> = dyn Fn(&Case) -> Result<Box<dyn Predictor>> + Sync + 'a;

fn auto_mask(case: &Case, pred: &dyn Predictor, class: u32, cfg: &EvalConfig) -> Result<BinaryMask> {
    let prob = sliding_window(&case.image, pred, &Prompt::Class(ClassPrompt::new(class)?), &cfg.window)?;
    Ok(prob.threshold(cfg.threshold))
}

fn point_mask(case: &Case, pred: &dyn Predictor, gt: &BinaryMask, cfg: &EvalConfig, ctx: PointContext) -> Result<BinaryMask> {
    let dims = gt.dims();
    let patch = cfg.window.patch;
    let mut out = BinaryMask::empty(dims);
    // (patch origin, click) pairs
    let mut jobs: Vec<([i64; 3], Coord)> = Vec::new();
    match cfg.point_mode {
        PointMode::PerPatch => {
            for o in patch_origins(dims, patch, cfg.window.overlap) {
                let o = o.map(|v| v as i64);
                let inside = |c: Coord| (0..3).all(|a| (c[a] as i64) >= o[a] && (c[a] as i64) < o[a] + patch.0[a] as i64);
                let window = BinaryMask::from_fn(dims, |c| inside(c) && gt.get(c));
                if let Some(c) = foreground_center(&window) {
                    jobs.push((o, c));
                }
            }
        }
        PointMode::PerComponent => {
            let cc = connected_components(gt, cfg.connectivity);
            for id in 1..=cc.count as u32 {
                let c = foreground_center(&cc.component_mask(id)).expect("component is nonempty");
                jobs.push((centered_origin(c, dims, patch), c));
            }
        }
    }
    for (origin, c) in jobs {
        let click = PointPrompt::new(c, Polarity::Positive, ctx);
        let p = crop_patch(&case.image, origin, patch)?;
        let prob = pred.interactive(&p, &[click])?;
        check_output(&p, &prob)?;
        for (i, &v) in prob.iter().enumerate() {
            if v > cfg.threshold && !p.pad_mask[i] {
                if let Some(g) = p.to_parent(p.size.coord(i), dims) {
                    out.set(g, true);
                }
            }
        }
    }
    Ok(out)
}

fn case_prediction(
    case: &Case,
    pred: &dyn Predictor,
    class: u32,
    gt: &BinaryMask,
    mode: EvalMode,
    cfg: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BinaryMask> {
    let ctx = PointContext::Supported(class);
    match mode {
        EvalMode::Auto => auto_mask(case, pred, class, cfg),
        EvalMode::Point => point_mask(case, pred, gt, cfg, ctx),
        EvalMode::AutoPoint => {
            let auto = auto_mask(case, pred, class, cfg)?;
            let Some(click) = next_eval_click(&auto, gt, rng, false, ctx, cfg.connectivity)? else {
                return Ok(auto);
            };
            let local = point_local_inference_at(&case.image, &[click], click.position, pred, cfg.window.patch, cfg.threshold)?;
            let (pos, neg) = if click.is_positive() {
                (vec![click.position], vec![])
            } else {
                (vec![], vec![click.position])
            };
            merge_interactive(&MergeInput {
                auto: &auto,
                interactive: &local.mask,
                positive: &pos,
                negative: &neg,
                connectivity: cfg.connectivity,
            })
        }
    }
}

/// Scores every `(case, class)` pair. Classes missing from a case are
/// skipped and listed in the report.
pub fn evaluate_dataset(
    cases: &[Case],
    make_pred: &PredictorFactory<'_>,
    classes: &[u32],
    mode: EvalMode,
    cfg: &EvalConfig,
) -> Result<DiceReport> {
    if cases.is_empty() {
        return Err(Error::arg("no cases to evaluate"));
    }
    for &c in classes {
        ClassPrompt::new(c)?;
    }
    type Row = (Vec<(CaseScore, VoxelCounts)>, Vec<(String, u32)>);
    let per_case: Vec<Result<Row>> = cases
        .par_iter()
        .enumerate()
        .map(|(k, case)| {
            let pred = make_pred(case)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
            let mut scores = Vec::new();
            let mut skipped = Vec::new();
            for &class in classes {
                let gt = case.label.class_mask(class);
                if gt.is_empty() {
                    skipped.push((case.id.clone(), class));
                    continue;
                }
                let m = case_prediction(case, pred.as_ref(), class, &gt, mode, cfg, &mut rng)?;
                let (inter, sa, sb) = overlap(&m, &gt)?;
                scores.push((
                    CaseScore {
                        case_id: case.id.clone(),
                        class,
                        dice: dice_from_counts(inter, sa, sb),
                    },
                    VoxelCounts {
                        predicted: sa as u64,
                        reference: sb as u64,
                        intersection: inter as u64,
                    },
                ));
            }
            Ok((scores, skipped))
        })
        .collect();
    let mut scores = Vec::new();
    let mut counts: BTreeMap<u32, VoxelCounts> = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in per_case {
        let (s, sk) = r?;
        for (score, c) in s {
            let e = counts.entry(score.class).or_default();
            e.predicted += c.predicted;
            e.reference += c.reference;
            e.intersection += c.intersection;
            scores.push(score);
        }
        skipped.extend(sk);
    }
    Ok(DiceReport::from_scores(scores, counts, skipped))
}

/// One row per curve point: `case_id,class,clicks,dice`.
pub fn write_curves_csv<W: Write>(out: W, curves: &[(String, Option<u32>, ClickCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::State(format!("csv: {e}"));
    w.write_record(["case_id", "class", "clicks", "dice"]).map_err(err)?;
    for (id, class, curve) in curves {
        let class = class.map(|c| c.to_string()).unwrap_or_default();
        for &(k, d) in &curve.points {
            w.write_record([id.as_str(), class.as_str(), &k.to_string(), &d.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
