//! Dataset dice in auto, point and auto+point modes.
use std::sync::Arc;

use voxelforge::evalsim::{evaluate_dataset, Case, EvalConfig, EvalMode};
use voxelforge::inference::{CompositePredictor, IntensityWindowPredictor, Predictor, RegionGrowPredictor, SlidingWindowConfig};
use voxelforge::volume::{Dims, LabelVolume, Volume};

fn case(id: usize, shift: usize) -> Case {
    let d = Dims::cube(32);
    let label = LabelVolume::from_fn(d, |[x, y, z]| {
        let inside = |lo: usize, hi: usize| (lo..=hi).contains(&(x + shift)) && (lo..=hi).contains(&y) && (lo..=hi).contains(&z);
        if inside(4, 12) { 1 } else if inside(18, 28) { 2 } else { 0 }
    });
    // class 2 is dimmer than the automatic window, so only clicks recover it
    let image = Volume::from_fn(d, |c| [0.0, 100.0, 40.0][label.get(c) as usize]);
    Case { id: format!("case{id}"), image: Arc::new(image), label }
}

fn main() -> voxelforge::Result<()> {
    let cases: Vec<Case> = (0..3).map(|i| case(i, i)).collect();
    let factory = |_: &Case| -> voxelforge::Result<Box<dyn Predictor>> {
        Ok(Box::new(CompositePredictor {
            auto: Box::new(IntensityWindowPredictor { lo: 80.0, hi: 200.0 }),
            interactive: Box::new(RegionGrowPredictor::new(5.0)?),
        }))
    };
    let cfg = EvalConfig { window: SlidingWindowConfig { patch: Dims::cube(32), ..Default::default() }, ..Default::default() };
    for mode in [EvalMode::Auto, EvalMode::Point, EvalMode::AutoPoint] {
        let r = evaluate_dataset(&cases, &factory, &[1, 2], mode, &cfg)?;
        let per: Vec<String> = r.per_class.iter().map(|(c, d)| format!("{c}={d:.3}")).collect();
        println!("{mode:?}: mean {:.3} ({})", r.mean, per.join(", "));
    }
    Ok(())
}
