//! Session with an automatic mask, corrective clicks, and undo.
use std::sync::Arc;

use voxelforge::editor::{Session, SessionConfig};
use voxelforge::inference::{
    sliding_window, ClassPrompt, CompositePredictor, IntensityWindowPredictor, PointContext, PointPrompt, Prompt,
    RegionGrowPredictor, SlidingWindowConfig,
};
use voxelforge::volume::{Dims, Volume};

fn main() -> voxelforge::Result<()> {
    // two bright cubes; only the first is within the automatic window
    let vol = Arc::new(Volume::from_fn(Dims::cube(40), |[x, y, z]| match (x, y, z) {
        (5..=14, 5..=14, 5..=14) => 100.0,
        (25..=34, 25..=34, 25..=34) => 60.0,
        _ => 0.0,
    }));
    let pred = CompositePredictor {
        auto: Box::new(IntensityWindowPredictor { lo: 80.0, hi: 200.0 }),
        interactive: Box::new(RegionGrowPredictor::new(10.0)?),
    };
    let prob = sliding_window(&vol, &pred, &Prompt::Class(ClassPrompt::new(1)?), &SlidingWindowConfig::default())?;

    let mut s = Session::new(vol.clone(), PointContext::ZeroShot, SessionConfig { patch: Dims::cube(32), ..Default::default() });
    s.set_auto(prob.threshold(0.5))?;
    println!("auto: {} voxels", s.current().count());

    let out = s.apply_click(PointPrompt::positive([30, 30, 30]), &pred)?;
    println!("+ click: {} voxels, changed {:?}", s.current().count(), out.changed_bbox);
    let out = s.apply_click(PointPrompt::negative([10, 10, 10]), &pred)?;
    println!("- click: {} voxels, changed {:?}", s.current().count(), out.changed_bbox);

    assert_eq!(&s.replay(&pred)?, s.current());
    s.undo()?;
    println!("undo:    {} voxels, depth {}", s.current().count(), s.depth());
    println!("log: {}", serde_json::to_string(&s.click_log())?);
    Ok(())
}
