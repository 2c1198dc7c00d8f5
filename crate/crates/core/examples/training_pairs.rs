//! Training-pair sampling: direct, supervoxel and edited pairs, then
//! iterative FP/FN correction clicks.
use std::collections::BTreeMap;

use rand::SeedableRng;
use voxelforge::prompts::{iterative_points, sample_pair, SampleBranch, SamplerConfig};
use voxelforge::supervoxel::SupervoxelMap;
use voxelforge::volume::{Dims, LabelVolume};

fn main() -> voxelforge::Result<()> {
    let d = Dims::cube(16);
    let label = LabelVolume::from_fn(d, |[x, y, z]| match (x, y, z) {
        (2..=9, 2..=9, 2..=9) => 1,
        (10..=14, 4..=12, 6..=13) => 2,
        _ => 0,
    });
    let blocks = LabelVolume::from_fn(d, |[x, y, z]| (x / 4 + 4 * (y / 4) + 16 * (z / 4)) as u32 + 1);
    let sv = SupervoxelMap::from_labels(&blocks)?;
    let cfg = SamplerConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);

    let mut branches: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..2000 {
        let pair = sample_pair(Some(&label), None, &sv, &cfg, &mut rng)?;
        pair.check()?;
        let key = format!("{:?}/{:?}{}", pair.branch, pair.source, if pair.zero_shot { " zero-shot" } else { "" });
        *branches.entry(key).or_default() += 1;
    }
    for (k, n) in &branches {
        println!("{k:<32} {n}");
    }

    let pair = loop {
        let p = sample_pair(Some(&label), None, &sv, &cfg, &mut rng)?;
        if p.branch == SampleBranch::Direct {
            break p;
        }
    };
    // a "model" that always predicts the bounding cube of class 1
    let guess = LabelVolume::from_fn(d, |[x, y, z]| (x < 11 && y < 11 && z < 11) as u32).class_mask(1);
    let rounds = iterative_points(&pair, |_| Ok(guess.clone()), &cfg, &mut rng)?;
    for (i, r) in rounds.iter().enumerate() {
        println!("round {i}: {} clicks", r.len());
    }
    Ok(())
}
