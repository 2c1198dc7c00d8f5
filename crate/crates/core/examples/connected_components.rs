//! Label 3D components of a random mask and compare connectivities.
use rand::{Rng, SeedableRng};
use voxelforge::morphology::{connected_components, largest_component, Connectivity};
use voxelforge::volume::{BinaryMask, Dims};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let d = Dims::cube(32);
    let mask = BinaryMask::new(d, (0..d.len()).map(|_| rng.gen_bool(0.3)).collect()).unwrap();
    for c in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
        let cm = connected_components(&mask, c);
        let big = largest_component(&cm).count();
        println!("{c:?}: {} components, largest {big} voxels", cm.count);
    }
}
