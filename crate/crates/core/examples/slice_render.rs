//! Slice PNGs and run-length mask planes, as served to the viewer.
use voxelforge::service::render::{slice_png, MaskRle, SliceRle};
use voxelforge::volume::{Dims, Volume};

fn main() -> voxelforge::Result<()> {
    let vol = Volume::from_fn(Dims::new(64, 48, 32), |[x, y, z]| (x * 4 + y * 2 + z) as f32);
    let dir = std::env::temp_dir().join("vf-render-example");
    std::fs::create_dir_all(&dir).unwrap();
    for axis in 0..3 {
        let png = slice_png(&vol, axis, 10, Some((0.0, 300.0)))?;
        let path = dir.join(format!("axis{axis}.png"));
        std::fs::write(&path, png).unwrap();
        println!("wrote {}", path.display());
    }
    let mask = vol.threshold(200.0);
    let rle = SliceRle::encode(&mask, 2, 16)?;
    println!("axial slice 16: {}x{}, row 0 runs {:?}", rle.width, rle.height, rle.rle[0]);
    let whole = MaskRle::encode(&mask);
    println!("whole mask: {} runs for {} voxels", whole.rle.len(), mask.count());
    assert_eq!(whole.decode()?, mask);
    Ok(())
}
