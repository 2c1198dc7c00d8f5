//! 3D connected-component labeling.
//!
//! Two-pass union-find over backward neighbours. Component ids are assigned
//! in scan order of each component's first voxel, so labeling is
//! deterministic and ids are contiguous `1..=count`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Coord, Dims};

/// Voxel adjacency: faces (6), faces+edges (18) or faces+edges+corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "18")]
    Eighteen,
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::arg(format!("connectivity must be 6, 18 or 26, got {n}"))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    fn max_l1(self) -> i32 {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// All neighbour offsets.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    if l1 > 0 && l1 <= self.max_l1() {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Offsets of neighbours visited before the centre voxel in scan order.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        self.offsets()
            .into_iter()
            .filter(|&[dx, dy, dz]| dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0))))
            .collect()
    }
}

/// Neighbours of `c` inside `dims`.
pub fn neighbors(dims: Dims, c: Coord, conn: Connectivity) -> impl Iterator<Item = Coord> {
    conn.offsets().into_iter().filter_map(move |o| {
        let mut n = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + o[a] as i64;
            if v < 0 || v >= dims.0[a] as i64 {
                return None;
            }
            n[a] = v as usize;
        }
        Some(n)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    pub dims: Dims,
    /// Component id per voxel, 0 for background.
    pub labels: Vec<u32>,
    pub count: usize,
    /// `sizes[id - 1]` is the voxel count of component `id`.
    pub sizes: Vec<usize>,
    pub connectivity: Connectivity,
}

impl ComponentMap {
    pub fn size(&self, id: u32) -> usize {
        self.sizes[id as usize - 1]
    }

    pub fn component_mask(&self, id: u32) -> BinaryMask {
        let data = self.labels.iter().map(|&l| l == id).collect();
        BinaryMask::new(self.dims, data).expect("dims match")
    }

    /// Union of the components whose ids are flagged in `selected` (indexed by id).
    pub fn select(&self, selected: &[bool]) -> BinaryMask {
        let data = self
            .labels
            .iter()
            .map(|&l| l != 0 && selected[l as usize])
            .collect();
        BinaryMask::new(self.dims, data).expect("dims match")
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        // slot 0 is the background sentinel
        UnionFind { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    #[inline]
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    #[inline]
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra < rb {
            self.parent[rb as usize] = ra;
            ra
        } else {
            self.parent[ra as usize] = rb;
            rb
        }
    }
}

/// Labels maximal connected sets of voxels that share the same key.
/// Voxels for which `is_foreground` is false get id 0.
fn label_by_key<K: Copy + PartialEq>(
    dims: Dims,
    keys: &[K],
    is_foreground: impl Fn(K) -> bool,
    conn: Connectivity,
) -> ComponentMap {
    let [nx, ny, nz] = dims.0;
    let offs: Vec<([i32; 3], isize)> = conn
        .backward_offsets()
        .into_iter()
        .map(|o| {
            let d = o[0] as isize + nx as isize * (o[1] as isize + ny as isize * o[2] as isize);
            (o, d)
        })
        .collect();
    let mut labels = vec![0u32; dims.len()];
    let mut uf = UnionFind::new();
    let mut i = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let k = keys[i];
                if is_foreground(k) {
                    let mut cur = 0u32;
                    for &(o, d) in &offs {
                        let xx = x as i64 + o[0] as i64;
                        let yy = y as i64 + o[1] as i64;
                        let zz = z as i64 + o[2] as i64;
                        if xx < 0 || xx >= nx as i64 || yy < 0 || yy >= ny as i64 || zz < 0 {
                            continue;
                        }
                        let j = (i as isize + d) as usize;
                        let lj = labels[j];
                        if lj == 0 || keys[j] != k {
                            continue;
                        }
                        cur = if cur == 0 { lj } else { uf.union(cur, lj) };
                    }
                    labels[i] = if cur == 0 { uf.make() } else { cur };
                }
                i += 1;
            }
        }
    }
    // second pass: resolve roots and number components by first appearance
    let mut final_id = vec![0u32; uf.parent.len()];
    let mut sizes = Vec::new();
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let r = uf.find(*l) as usize;
        if final_id[r] == 0 {
            sizes.push(0);
            final_id[r] = sizes.len() as u32;
        }
        let id = final_id[r];
        sizes[id as usize - 1] += 1;
        *l = id;
    }
    ComponentMap {
        dims,
        labels,
        count: sizes.len(),
        sizes,
        connectivity: conn,
    }
}

pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> ComponentMap {
    label_by_key(mask.dims(), mask.data(), |v| v, conn)
}

/// Splits a full partition (e.g. a supervoxel map) into connected regions of
/// equal value. Every voxel, including value 0, receives a region id.
pub fn label_regions(dims: Dims, values: &[u32], conn: Connectivity) -> ComponentMap {
    label_by_key(dims, values, |_| true, conn)
}

pub fn component_containing(cmap: &ComponentMap, p: Coord) -> Result<Option<u32>> {
    cmap.dims.check_coord(p)?;
    let id = cmap.labels[cmap.dims.index(p)];
    Ok((id != 0).then_some(id))
}

/// Mask of the largest component; ties go to the smallest id.
pub fn largest_component(cmap: &ComponentMap) -> BinaryMask {
    match largest_id(cmap) {
        Some(id) => cmap.component_mask(id),
        None => BinaryMask::empty(cmap.dims),
    }
}

pub fn largest_id(cmap: &ComponentMap) -> Option<u32> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &s) in cmap.sizes.iter().enumerate() {
        if best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, i as u32 + 1));
        }
    }
    best.map(|(_, id)| id)
}

/// Components of `a ∧ ¬b`.
pub fn mask_diff_components(a: &BinaryMask, b: &BinaryMask, conn: Connectivity) -> Result<ComponentMap> {
    Ok(connected_components(&a.and_not(b)?, conn))
}
