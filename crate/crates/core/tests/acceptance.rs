//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Plain binary target (no libtest harness), so the lines always print:
//! `cargo test --test acceptance`.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxelforge::editor::{merge_interactive, MergeInput, Session, SessionConfig};
use voxelforge::evalsim::{dice, simulate_session, SimulationConfig};
use voxelforge::inference::{
    prompt_head, sliding_window, BlendKernel, ClassPrompt, CompositePredictor, ConstantPredictor,
    IntensityWindowPredictor, OraclePredictor, PointContext, PointPrompt, PromptHeadParams, Prompt,
    RegionGrowPredictor, SlidingWindowConfig,
};
use voxelforge::morphology::{connected_components, Connectivity};
use voxelforge::nifti::{NiftiData, NiftiImage};
use voxelforge::prompts::{sample_class_prompts, sample_pair, SampleBranch, SamplerConfig};
use voxelforge::service::render::{SlicePlane, SliceRle};
use voxelforge::supervoxel::{
    builtin_extractor, slic3d, supervoxels, triaxial_features, ExtractorKind, FeatureVolume, IntensityExtractor,
    SlicParams, SupervoxelMap,
};
use voxelforge::volume::{BinaryMask, Coord, Dims, Geometry, LabelVolume, Volume};

struct Gate {
    results: Vec<(String, bool, String)>,
}

impl Gate {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass, detail));
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn random_mask(dims: Dims, density: f64, rng: &mut impl Rng) -> BinaryMask {
    let data = (0..dims.len()).map(|_| rng.gen_bool(density)).collect();
    BinaryMask::new(dims, data).unwrap()
}

// ---- merge oracle --------------------------------------------------------

/// Components of `inside` by breadth-first search over the 26-neighbourhood.
fn bfs_components(dims: Dims, inside: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; dims.len()];
    let mut comps = Vec::new();
    let [nx, ny, nz] = dims.0.map(|v| v as i64);
    for start in 0..dims.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![];
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            comp.push(i);
            let [x, y, z] = dims.coord(i).map(|v| v as i64);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (a, b, c) = (x + dx, y + dy, z + dz);
                        if a < 0 || b < 0 || c < 0 || a >= nx || b >= ny || c >= nz {
                            continue;
                        }
                        let j = (a + nx * (b + ny * c)) as usize;
                        if inside[j] && !seen[j] {
                            seen[j] = true;
                            q.push_back(j);
                        }
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Returns (output, final_add ∪ final_rm).
fn merge_oracle(a: &BinaryMask, p: &BinaryMask, pos: &[Coord], neg: &[Coord]) -> (Vec<bool>, Vec<bool>) {
    let dims = a.dims();
    let (ad, pd) = (a.data(), p.data());
    let pos_idx: Vec<usize> = pos.iter().map(|&c| dims.index(c)).collect();
    let neg_idx: Vec<usize> = neg.iter().map(|&c| dims.index(c)).collect();
    let add_region: Vec<bool> = (0..dims.len()).map(|i| pd[i] && !ad[i]).collect();
    let rm_region: Vec<bool> = (0..dims.len()).map(|i| ad[i] && !pd[i]).collect();
    let mut add_pool = bfs_components(dims, &add_region);
    if pos.iter().any(|&c| a.get(c)) {
        add_pool.extend(bfs_components(dims, pd));
    }
    let rm_pool = bfs_components(dims, &rm_region);
    let mut final_add = vec![false; dims.len()];
    for comp in &add_pool {
        if comp.iter().any(|i| pos_idx.contains(i)) {
            comp.iter().for_each(|&i| final_add[i] = true);
        }
    }
    let mut final_rm = vec![false; dims.len()];
    for comp in &rm_pool {
        if comp.iter().any(|i| neg_idx.contains(i)) {
            comp.iter().for_each(|&i| final_rm[i] = true);
        }
    }
    let out = (0..dims.len()).map(|i| (ad[i] || final_add[i]) && !final_rm[i]).collect();
    let touched = (0..dims.len()).map(|i| final_add[i] || final_rm[i]).collect();
    (out, touched)
}

fn merge_criteria(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let (mut mismatches, mut leaks) = (0, 0);
    for _ in 0..1000 {
        let dims = Dims::new(rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=12));
        let a = random_mask(dims, rng.gen_range(0.1..0.6), &mut rng);
        let p = random_mask(dims, rng.gen_range(0.1..0.6), &mut rng);
        let clicks = |rng: &mut ChaCha8Rng| -> Vec<Coord> {
            let n = rng.gen_range(0..=3);
            (0..n).map(|_| dims.coord(rng.gen_range(0..dims.len()))).collect()
        };
        let pos = clicks(&mut rng);
        let neg = clicks(&mut rng);
        let out = merge_interactive(&MergeInput {
            auto: &a,
            interactive: &p,
            positive: &pos,
            negative: &neg,
            connectivity: Connectivity::TwentySix,
        })
        .unwrap();
        let (expect, touched) = merge_oracle(&a, &p, &pos, &neg);
        if out.data() != expect.as_slice() {
            mismatches += 1;
        }
        let leak = (0..dims.len()).any(|i| (out.data()[i] != a.data()[i]) && !touched[i]);
        if leak {
            leaks += 1;
        }
    }
    let el = t.elapsed();
    g.record(
        "merge oracle equivalence",
        mismatches == 0 && el < Duration::from_secs(10),
        format!("1000 cases, {mismatches} mismatches, {:.2?} (limit 10s)", el),
    );
    g.record(
        "merge locality",
        leaks == 0,
        format!("1000 cases, {leaks} outputs changed outside clicked components"),
    );
}

// ---- sliding window ------------------------------------------------------

fn partition_of_unity(g: &mut Gate) {
    let vol = Volume::zeros(Dims::new(200, 150, 90));
    let pred = ConstantPredictor(0.7);
    let mut worst = 0f64;
    for overlap in [0.0, 0.25, 0.5] {
        for blend in [BlendKernel::Constant, BlendKernel::default()] {
            let cfg = SlidingWindowConfig {
                patch: Dims::cube(128),
                overlap,
                blend,
                ..Default::default()
            };
            let out = sliding_window(&vol, &pred, &Prompt::Class(ClassPrompt::new(1).unwrap()), &cfg).unwrap();
            let err = out.data().iter().map(|&v| (v as f64 - 0.7).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    g.record(
        "sliding-window partition of unity",
        worst <= 1e-6,
        format!("max |out - 0.7| = {worst:.3e} (limit 1e-6)"),
    );
}

fn order_independence(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = Dims::new(150, 120, 100);
    let vol = Volume::new(Geometry::unit(dims), (0..dims.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let pred = IntensityWindowPredictor { lo: 0.2, hi: 0.6 };
    let prompt = Prompt::Class(ClassPrompt::new(1).unwrap());
    let run = |threads: usize, shuffle: Option<u64>| {
        let cfg = SlidingWindowConfig {
            patch: Dims::cube(64),
            overlap: 0.5,
            threads: Some(threads),
            shuffle_seed: shuffle,
            ..Default::default()
        };
        sliding_window(&vol, &pred, &prompt, &cfg).unwrap()
    };
    let one = run(1, None);
    let eight = run(8, Some(99));
    let diff = one
        .data()
        .iter()
        .zip(eight.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    g.record(
        "sliding-window order independence",
        diff <= 1e-6,
        format!("1 vs 8 threads, max diff {diff:.3e} (limit 1e-6)"),
    );
}

// ---- supervoxels ---------------------------------------------------------

fn two_material_phantom(n: usize) -> Volume {
    let c = n as f64 / 2.0;
    Volume::from_fn(Dims::cube(n), |[x, y, z]| {
        let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
        if r < n as f64 / 4.0 {
            100.0
        } else {
            10.0
        }
    })
}

fn slic_invariants(g: &mut Gate) {
    let vol = two_material_phantom(64);
    let params = SlicParams::default();
    let ex = builtin_extractor(ExtractorKind::GaussPyramid);
    let t = Instant::now();
    let runs: Vec<SupervoxelMap> =
        single_thread(|| (0..3).map(|_| supervoxels(&vol, ex.as_ref(), &params).unwrap()).collect());
    let per_run = t.elapsed() / 3;
    let m = &runs[0];
    let n = m.n_segments_actual as u32;
    let full = m.labels.iter().all(|&l| l >= 1 && l <= n);
    let ids: BTreeSet<u32> = m.labels.iter().copied().collect();
    let contiguous = ids == (1..=n).collect();
    let connected = (1..=n).all(|id| connected_components(&m.region(id), Connectivity::TwentySix).count == 1);
    let deterministic = runs.iter().all(|r| r == m);
    g.record(
        "SLIC invariants",
        full && contiguous && connected && deterministic && per_run < Duration::from_secs(30),
        format!(
            "{n} segments; partition {full}, contiguous {contiguous}, connected {connected}, deterministic {deterministic}, {per_run:.2?}/run (limit 30s)"
        ),
    );
}

fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn uniform_slic_voronoi(g: &mut Gate) {
    let dims = Dims::cube(8);
    let feat = FeatureVolume::zeros(dims, 1);
    let params = SlicParams {
        n_segments: 8,
        ..Default::default()
    };
    let got = slic3d(&feat, &params).unwrap();
    // 2x2x2 grid of seeds at cell centres, nearest seed wins, lowest index on ties
    let seeds: Vec<[f64; 3]> = (0..8)
        .map(|k| [k % 2, (k / 2) % 2, k / 4].map(|c| (c as f64 + 0.5) * 4.0))
        .collect();
    let voronoi: Vec<u32> = (0..dims.len())
        .map(|i| {
            let c = dims.coord(i).map(|v| v as f64);
            let mut best = (f64::INFINITY, 0);
            for (k, s) in seeds.iter().enumerate() {
                let d: f64 = (0..3).map(|a| (c[a] - s[a]).powi(2)).sum();
                if d < best.0 {
                    best = (d, k as u32);
                }
            }
            best.1
        })
        .collect();
    let ok = canonical(&got.labels) == canonical(&voronoi);
    g.record(
        "uniform-feature SLIC equals Voronoi",
        ok,
        format!("8^3 grid, n_segments 8, {} segments, exact match {ok}", got.n_segments_actual),
    );
}

fn triaxial_identity(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    for _ in 0..20 {
        let dims = Dims::new(rng.gen_range(1..20), rng.gen_range(1..20), rng.gen_range(1..20));
        let vol = Volume::new(
            Geometry::unit(dims),
            (0..dims.len()).map(|_| rng.gen_range(-1000.0..1000.0)).collect(),
        )
        .unwrap();
        let f = triaxial_features(&vol, &IntensityExtractor).unwrap();
        ok &= f.data.iter().zip(vol.data()).all(|(a, v)| *a == 3.0 * v);
    }
    g.record("triaxial identity", ok, format!("20 random volumes, F == 3V exactly: {ok}"));
}

// ---- simulated clicks ----------------------------------------------------

/// `m` non-touching boxes of class 1 on a 24^3 grid.
fn blobs(m: usize, rng: &mut impl Rng) -> LabelVolume {
    let dims = Dims::cube(24);
    let mut lab = LabelVolume::zeros(dims);
    let cells: Vec<usize> = {
        let mut all: Vec<usize> = (0..27).collect();
        rand::seq::SliceRandom::shuffle(all.as_mut_slice(), rng);
        all.into_iter().take(m).collect()
    };
    for cell in cells {
        let base = [cell % 3, (cell / 3) % 3, cell / 9].map(|c| c * 8);
        let lo = [0; 3].map(|_| rng.gen_range(1..3));
        let hi = [0; 3].map(|_| rng.gen_range(4..7));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let c = dims.index([base[0] + x, base[1] + y, base[2] + z]);
                    lab.data_mut()[c] = 1;
                }
            }
        }
    }
    lab
}

fn oracle_convergence(g: &mut Gate) {
    let mut failures = Vec::new();
    for m in [1usize, 2, 3, 5] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + m as u64);
            let lab = Arc::new(blobs(m, &mut rng));
            let vol = Arc::new(Volume::zeros(lab.dims()));
            let gt = lab.class_mask(1);
            let pred = OraclePredictor::new(lab.clone());
            let curve = simulate_session(vol, &gt, &pred, m + 2, &mut rng, &SimulationConfig::default()).unwrap();
            let reached = curve.points[m].1 == 1.0;
            if !reached || !curve.is_non_decreasing() {
                failures.push((m, seed));
            }
        }
    }
    g.record(
        "oracle click convergence",
        failures.is_empty(),
        format!("400 cases, {} failed {:?}", failures.len(), &failures[..failures.len().min(5)]),
    );
}

// ---- prompt head ---------------------------------------------------------

fn prompt_head_batch(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    let mut half = true;
    for _ in 0..100 {
        let channels = rng.gen_range(1..=16);
        let n_classes = rng.gen_range(1..=10);
        let params = PromptHeadParams::random(n_classes, channels, rng.gen_range(1..=8), &mut rng);
        let dims = Dims::new(rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
        let feat = FeatureVolume::new(
            dims,
            channels,
            (0..dims.len() * channels).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let prompts: Vec<ClassPrompt> = (0..rng.gen_range(1..=6))
            .map(|_| ClassPrompt::new(rng.gen_range(1..=n_classes as u32)).unwrap())
            .collect();
        let batch = prompt_head(&feat, &params, &prompts).unwrap();
        for (k, p) in prompts.iter().enumerate() {
            let single = prompt_head(&feat, &params, &[*p]).unwrap();
            ok &= batch[k].iter().map(|v| v.to_bits()).eq(single[0].iter().map(|v| v.to_bits()));
        }
        let zero = FeatureVolume::zeros(dims, channels);
        half &= prompt_head(&zero, &params, &prompts).unwrap().iter().flatten().all(|&v| v == 0.5);
    }
    g.record(
        "prompt-head batch equivalence",
        ok && half,
        format!("100 draws, bit-identical {ok}, zero features give exactly 0.5: {half}"),
    );
}

// ---- sampler -------------------------------------------------------------

/// Two or three box classes on 16^3 and a 4^3-block supervoxel grid.
fn sampler_case(rng: &mut impl Rng) -> (LabelVolume, SupervoxelMap) {
    let dims = Dims::cube(16);
    let mut lab = LabelVolume::zeros(dims);
    for class in 1..=rng.gen_range(2..=3u32) {
        let lo = [0; 3].map(|_| rng.gen_range(0..8usize));
        let ext = [0; 3].map(|_| rng.gen_range(4..8usize));
        for z in lo[2]..lo[2] + ext[2] {
            for y in lo[1]..lo[1] + ext[1] {
                for x in lo[0]..lo[0] + ext[0] {
                    lab.data_mut()[dims.index([x, y, z])] = class;
                }
            }
        }
    }
    let blocks = LabelVolume::from_fn(dims, |[x, y, z]| (x / 4 + 4 * (y / 4) + 16 * (z / 4)) as u32 + 1);
    (lab, SupervoxelMap::from_labels(&blocks).unwrap())
}

fn sampler_statistics(g: &mut Gate) {
    let cfg = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases: Vec<_> = (0..50).map(|_| sampler_case(&mut rng)).collect();
    let (mut direct, mut bad) = (0usize, 0usize);
    let draws = 10_000;
    for k in 0..draws {
        let (lab, sv) = &cases[k % cases.len()];
        let pair = sample_pair(Some(lab), None, sv, &cfg, &mut rng).unwrap();
        if pair.branch == SampleBranch::Direct {
            direct += 1;
        }
        let shape_ok = match pair.branch {
            SampleBranch::Direct => pair.points.len() == 1 && Some(pair.target.clone()) == pair.class.map(|c| lab.class_mask(c)),
            SampleBranch::Supervoxel => pair.zero_shot && pair.points.len() == 1,
            SampleBranch::Edit => !pair.points.is_empty(),
        };
        if pair.check().is_err() || !shape_ok || pair.target.is_empty() {
            bad += 1;
        }
    }
    let rate = direct as f64 / draws as f64;

    let mut overlaps = 0;
    for _ in 0..500 {
        let dims = Dims::new(rng.gen_range(1..10), rng.gen_range(1..10), rng.gen_range(1..10));
        let lab = LabelVolume::new(
            Geometry::unit(dims),
            (0..dims.len()).map(|_| if rng.gen_bool(0.5) { 0 } else { rng.gen_range(1..=12) }).collect(),
        )
        .unwrap();
        let label_set: BTreeSet<u32> = (1..=12).filter(|_| rng.gen_bool(0.7)).chain([1]).collect();
        let present: BTreeSet<u32> = lab.classes().into_iter().collect();
        for s in sample_class_prompts(&lab, &label_set, 32, 4, &mut rng).unwrap() {
            let c = s.prompt.index();
            let wrong = if s.background {
                present.contains(&c) || !s.target.is_empty()
            } else {
                s.target != lab.class_mask(c)
            };
            if wrong {
                overlaps += 1;
            }
        }
    }
    g.record(
        "sampler statistics",
        (rate - cfg.p_direct).abs() <= 0.02 && bad == 0 && overlaps == 0,
        format!(
            "direct rate {rate:.4} vs {} (tol 0.02), {bad} invariant violations, {overlaps} bad class prompts over 500 volumes",
            cfg.p_direct
        ),
    );
}

// ---- dice ----------------------------------------------------------------

fn dice_units(g: &mut Gate) {
    let d = Dims::new(8, 1, 1);
    let m = |bits: [u8; 8]| BinaryMask::new(d, bits.iter().map(|&b| b == 1).collect()).unwrap();
    let a = m([1, 1, 1, 1, 0, 0, 0, 0]);
    let b = m([0, 0, 0, 0, 1, 1, 1, 1]);
    let c = m([0, 0, 1, 1, 1, 1, 0, 0]);
    let (same, disjoint, half) = (dice(&a, &a).unwrap(), dice(&a, &b).unwrap(), dice(&a, &c).unwrap());
    g.record(
        "dice unit values",
        same == 1.0 && disjoint == 0.0 && half == 0.5,
        format!("self {same}, disjoint {disjoint}, half overlap {half}"),
    );
}

// ---- io ------------------------------------------------------------------

fn io_roundtrips(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dir = tempfile::tempdir().unwrap();
    let mut nifti_ok = true;
    for (k, kind) in ["u8", "i16", "i32", "f32"].iter().enumerate() {
        let dims = Dims::new(rng.gen_range(1..12), rng.gen_range(1..12), rng.gen_range(1..12));
        let n = dims.len();
        let data = match *kind {
            "u8" => NiftiData::U8((0..n).map(|_| rng.gen()).collect()),
            "i16" => NiftiData::I16((0..n).map(|_| rng.gen()).collect()),
            "i32" => NiftiData::I32((0..n).map(|_| rng.gen()).collect()),
            _ => NiftiData::F32((0..n).map(|_| rng.gen_range(-1e6..1e6)).collect()),
        };
        let img = NiftiImage {
            geometry: Geometry::new(dims, [0.5, 1.25, 3.0], [-10.0, 4.5, 0.0]).unwrap(),
            scl_slope: 1.0,
            scl_inter: 0.0,
            data,
        };
        nifti_ok &= NiftiImage::from_bytes(&img.to_bytes()).unwrap() == img;
        for ext in ["nii", "nii.gz"] {
            let path = dir.path().join(format!("img{k}.{ext}"));
            voxelforge::nifti::write_nifti(&img, &path).unwrap();
            nifti_ok &= voxelforge::nifti::read_nifti(&path).unwrap() == img;
        }
    }
    let mut rle_ok = true;
    for _ in 0..100 {
        let dims = Dims::new(rng.gen_range(1..16), rng.gen_range(1..16), rng.gen_range(1..16));
        let mask = random_mask(dims, rng.gen_range(0.0..1.0), &mut rng);
        let axis = rng.gen_range(0..3);
        let index = rng.gen_range(0..dims.0[axis]);
        let rle = SliceRle::encode(&mask, axis, index).unwrap();
        let back: SliceRle = serde_json::from_str(&serde_json::to_string(&rle).unwrap()).unwrap();
        let px = back.decode().unwrap();
        let plane = SlicePlane::new(dims, axis, index).unwrap();
        for (row, line) in px.iter().enumerate() {
            for (col, &v) in line.iter().enumerate() {
                rle_ok &= v == mask.get(plane.voxel(col, row));
            }
        }
        rle_ok &= px.len() == plane.height && px.iter().all(|l| l.len() == plane.width);
    }
    g.record(
        "I/O round-trips",
        nifti_ok && rle_ok,
        format!("NIfTI u8/i16/i32/f32 (.nii, .nii.gz) identity {nifti_ok}; 100 RLE slices equal mask plane {rle_ok}"),
    );
}

// ---- performance ---------------------------------------------------------

fn performance(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = Dims::cube(256);
    let mask = random_mask(dims, 0.5, &mut rng);
    let (cc_time, n) = single_thread(|| {
        let t = Instant::now();
        let n = connected_components(&mask, Connectivity::TwentySix).count;
        (t.elapsed(), n)
    });
    drop(mask);

    let vol = Arc::new(two_material_phantom(256));
    let pred = CompositePredictor {
        auto: Box::new(IntensityWindowPredictor { lo: 50.0, hi: 200.0 }),
        interactive: Box::new(RegionGrowPredictor::new(50.0).unwrap()),
    };
    let (session_time, auto_vox, after_vox) = single_thread(|| {
        let t = Instant::now();
        let cfg = SlidingWindowConfig {
            threads: Some(1),
            ..Default::default()
        };
        let prob = sliding_window(&vol, &pred, &Prompt::Class(ClassPrompt::new(1).unwrap()), &cfg).unwrap();
        let mut s = Session::new(vol.clone(), PointContext::ZeroShot, SessionConfig::default());
        s.set_auto(prob.threshold(0.5)).unwrap();
        let auto_vox = s.current().count();
        s.apply_click(PointPrompt::negative([128, 128, 128]), &pred).unwrap();
        (t.elapsed(), auto_vox, s.current().count())
    });
    let ok = cc_time < Duration::from_secs(2) && session_time < Duration::from_secs(5) && auto_vox > 0 && after_vox == 0;
    g.record(
        "performance floor",
        ok,
        format!(
            "256^3 CC {cc_time:.2?} ({n} comps, limit 2s); auto+1-click session {session_time:.2?} (limit 5s), mask {auto_vox} -> {after_vox}"
        ),
    );
}

fn main() {
    let mut g = Gate { results: Vec::new() };
    merge_criteria(&mut g);
    partition_of_unity(&mut g);
    order_independence(&mut g);
    slic_invariants(&mut g);
    uniform_slic_voronoi(&mut g);
    triaxial_identity(&mut g);
    oracle_convergence(&mut g);
    prompt_head_batch(&mut g);
    sampler_statistics(&mut g);
    dice_units(&mut g);
    io_roundtrips(&mut g);
    performance(&mut g);
    let failed: Vec<_> = g.results.iter().filter(|r| !r.1).map(|r| r.0.clone()).collect();
    println!("{} / {} criteria pass", g.results.len() - failed.len(), g.results.len());
    assert!(failed.is_empty(), "failing: {failed:?}");
}
