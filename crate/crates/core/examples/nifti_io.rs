//! Write a volume as .nii.gz, read it back, and inspect the header fields.
use voxelforge::nifti::{read_nifti, write_volume};
use voxelforge::volume::{Dims, Volume};

fn main() -> voxelforge::Result<()> {
    let dir = std::env::temp_dir().join("vf-nifti-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ramp.nii.gz");

    let vol = Volume::from_fn(Dims::new(16, 12, 8), |[x, y, z]| (x + y + z) as f32)
        .with_geometry([0.75, 0.75, 2.5], [-6.0, -4.5, 0.0])?;
    write_volume(&vol, &path)?;

    let img = read_nifti(&path)?;
    println!("{}: {:?} {:?}", path.display(), img.datatype(), img.geometry);
    assert_eq!(img.to_volume()?, vol);
    Ok(())
}
