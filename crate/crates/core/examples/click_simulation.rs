//! Simulated user clicking with an oracle predictor; prints the dice curve as CSV.
use std::sync::Arc;

use rand::SeedableRng;
use voxelforge::evalsim::{simulate_session, write_curves_csv, SimulationConfig};
use voxelforge::inference::OraclePredictor;
use voxelforge::volume::{Dims, LabelVolume, Volume};

fn main() -> voxelforge::Result<()> {
    let d = Dims::cube(30);
    let gt = Arc::new(LabelVolume::from_fn(d, |[x, y, z]| {
        let blob = |c: [usize; 3], r: usize| (0..3).map(|a| [x, y, z][a].abs_diff(c[a]).pow(2)).sum::<usize>() < r * r;
        (blob([7, 7, 7], 5) || blob([22, 8, 20], 4) || blob([15, 24, 12], 3)) as u32
    }));
    let vol = Arc::new(Volume::zeros(d));
    let pred = OraclePredictor::new(gt.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let curve = simulate_session(vol, &gt.class_mask(1), &pred, 5, &mut rng, &SimulationConfig::default())?;
    write_curves_csv(std::io::stdout(), &[("three-blobs".into(), Some(1), curve.clone())])?;
    eprintln!("dice 1.0 after {:?} clicks", curve.clicks_to(1.0));
    Ok(())
}
