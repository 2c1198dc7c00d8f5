//! Click-anchored merge of an interactive mask into an automatic one.
use voxelforge::editor::{merge_parts, MergeInput};
use voxelforge::morphology::Connectivity;
use voxelforge::volume::{BinaryMask, Dims};

fn main() -> voxelforge::Result<()> {
    let d = Dims::new(12, 6, 1);
    // automatic: a true blob at x 1..3 and a false island at x 9..10
    let auto = BinaryMask::from_fn(d, |[x, y, _]| (1..=3).contains(&x) && y < 3 || (9..=10).contains(&x) && y > 3);
    // interactive: the same blob grown by one voxel, plus a missed blob at x 6..7
    let inter = BinaryMask::from_fn(d, |[x, y, _]| x <= 3 && y < 4 || (6..=7).contains(&x) && y > 2);

    let show = |m: &BinaryMask| {
        for y in 0..d.ny() {
            let row: String = (0..d.nx()).map(|x| if m.get([x, y, 0]) { '#' } else { '.' }).collect();
            println!("  {row}");
        }
    };
    let parts = merge_parts(&MergeInput {
        auto: &auto,
        interactive: &inter,
        positive: &[[6, 4, 0]],
        negative: &[[9, 5, 0]],
        connectivity: Connectivity::TwentySix,
    })?;
    println!("automatic:");
    show(&auto);
    println!("interactive:");
    show(&inter);
    println!("merged (blob at x 6..7 added, island removed, unclicked growth ignored):");
    show(&parts.mask);
    Ok(())
}
