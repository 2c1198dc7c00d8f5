//! Map dataset-local labels into the global class table and back.
use voxelforge::labelspace::{remap_labels, remap_with, LabelSpace};
use voxelforge::volume::{Dims, LabelVolume};

fn main() -> voxelforge::Result<()> {
    let space = LabelSpace::bundled();
    println!("{} classes, ambiguous {:?}", space.classes.len(), space.ambiguous);
    for (id, ds) in &space.datasets {
        let names: Vec<String> = ds
            .map
            .iter()
            .map(|(l, g)| format!("{l}->{g} {}", space.class_name(*g).unwrap_or("?")))
            .collect();
        println!("{id}: {}", names.join(", "));
    }
    let local = LabelVolume::from_fn(Dims::new(4, 1, 1), |[x, _, _]| (x % 3) as u32);
    let global = remap_labels(&local, &space, "MSD07")?;
    println!("MSD07 {:?} -> {:?}", local.data(), global.data());
    let back = remap_with(&global, &space.dataset("MSD07")?.inverse().map)?;
    assert_eq!(back, local);
    Ok(())
}
