//! Automatic segmentation by overlapping patches with Gaussian blending.
use voxelforge::inference::{sliding_window, BlendKernel, ClassPrompt, IntensityWindowPredictor, Prompt, SlidingWindowConfig};
use voxelforge::inference::sliding::patch_origins;
use voxelforge::volume::{Dims, Volume};

fn main() -> voxelforge::Result<()> {
    let d = Dims::new(150, 110, 70);
    let vol = Volume::from_fn(d, |[x, y, _]| if (x / 30 + y / 30) % 2 == 0 { 80.0 } else { -20.0 });
    let pred = IntensityWindowPredictor { lo: 50.0, hi: 120.0 };
    let prompt = Prompt::Class(ClassPrompt::new(1)?);

    for blend in [BlendKernel::Constant, BlendKernel::default()] {
        let cfg = SlidingWindowConfig { patch: Dims::cube(64), overlap: 0.5, blend, ..Default::default() };
        let n = patch_origins(d, cfg.patch, cfg.overlap).len();
        let prob = sliding_window(&vol, &pred, &prompt, &cfg)?;
        let mask = prob.threshold(0.5);
        println!("{blend:?}: {n} patches, {} foreground voxels", mask.count());
    }

    // a tight memory budget moves the accumulators to a temp file
    let cfg = SlidingWindowConfig { patch: Dims::cube(64), memory_budget: Some(1 << 20), ..Default::default() };
    let spilled = sliding_window(&vol, &pred, &prompt, &cfg)?;
    println!("spilled run: {} foreground voxels", spilled.threshold(0.5).count());
    Ok(())
}
