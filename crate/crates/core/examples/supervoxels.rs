//! SLIC supervoxels over triaxial 2D features of a two-material phantom.
use std::time::Instant;

use voxelforge::supervoxel::{builtin_extractor, supervoxels, ExtractorKind, SlicParams};
use voxelforge::volume::{Dims, Volume};

fn main() -> voxelforge::Result<()> {
    let n = 48;
    let vol = Volume::from_fn(Dims::cube(n), |[x, y, z]| {
        let r2 = [x, y, z].iter().map(|&v| (v as f64 - n as f64 / 2.0).powi(2)).sum::<f64>();
        if r2.sqrt() < n as f64 / 4.0 { 100.0 } else { 10.0 }
    });
    for kind in [ExtractorKind::Intensity, ExtractorKind::GaussPyramid] {
        let t = Instant::now();
        let map = supervoxels(&vol, builtin_extractor(kind).as_ref(), &SlicParams::default())?;
        let sizes = map.sizes();
        println!(
            "{kind:?}: {} segments (asked {}), sizes {}..{}, {:.2?}",
            map.n_segments_actual,
            map.n_segments_requested,
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            t.elapsed()
        );
    }
    Ok(())
}
