//! Plugging a model that lives in another process (here a python script).
use std::process::Command;

use voxelforge::inference::{sliding_window, ClassPrompt, ExternalPredictor, Prompt, SlidingWindowConfig};
use voxelforge::volume::{Dims, Volume};

const MODEL: &str = r#"
import sys, json, base64, struct
for line in sys.stdin:
    r = json.loads(line)
    raw = base64.b64decode(r["patch"]["data"])
    vals = struct.unpack("<%df" % (len(raw) // 4), raw)
    out = [1.0 if v > 50 else 0.0 for v in vals]
    print(json.dumps({"prob": base64.b64encode(struct.pack("<%df" % len(out), *out)).decode()}), flush=True)
"#;

fn main() -> voxelforge::Result<()> {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found; skipping");
        return Ok(());
    }
    let path = std::env::temp_dir().join("vf_threshold_model.py");
    std::fs::write(&path, MODEL).unwrap();
    let pred = ExternalPredictor::spawn(&format!("python3 {}", path.display()))?;

    let vol = Volume::from_fn(Dims::cube(40), |[x, _, _]| x as f32 * 2.5);
    let cfg = SlidingWindowConfig { patch: Dims::cube(24), ..Default::default() };
    let prob = sliding_window(&vol, &pred, &Prompt::Class(ClassPrompt::new(1)?), &cfg)?;
    println!("foreground voxels: {} (expect {})", prob.threshold(0.5).count(), vol.threshold(50.0).count());
    Ok(())
}
