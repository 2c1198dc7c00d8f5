//! Class-prompt head over a feature volume, and point-prompt embeddings.
use rand::SeedableRng;
use voxelforge::inference::{embed_points, prompt_head, ClassPrompt, PointPrompt, PromptHeadParams};
use voxelforge::inference::head::DEFAULT_FREQ_BANDS;
use voxelforge::supervoxel::FeatureVolume;
use voxelforge::volume::Dims;

fn main() -> voxelforge::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let channels = 48;
    let params = PromptHeadParams::random(10, channels, 32, &mut rng);
    let d = Dims::cube(8);
    let feat = FeatureVolume::new(d, channels, (0..d.len() * channels).map(|i| ((i % 97) as f32 - 48.0) / 48.0).collect())?;

    let prompts = [ClassPrompt::new(2)?, ClassPrompt::new(7)?];
    for (p, prob) in prompts.iter().zip(prompt_head(&feat, &params, &prompts)?) {
        let mean = prob.iter().sum::<f32>() / prob.len() as f32;
        println!("class {}: mean probability {mean:.3}", p.index());
    }

    let clicks = [PointPrompt::positive([1, 2, 3]), PointPrompt::negative([6, 6, 6])];
    let emb = embed_points(&clicks, d, &params, DEFAULT_FREQ_BANDS)?;
    for (c, e) in clicks.iter().zip(&emb) {
        println!("{:?} at {:?}: first values {:?}", c.polarity, c.position, &e[..4]);
    }
    Ok(())
}
