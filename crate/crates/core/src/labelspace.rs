//! Global class index shared across partially labeled datasets.
//!
//! Each dataset annotates its own subset of classes with its own local
//! numbering. A [`LabelSpace`] holds the global class table and, per dataset,
//! the local→global map together with the set of global classes that dataset
//! annotates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Largest supported global class index.
pub const MAX_CLASSES: u32 = 127;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub index: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// local index → global index; keys are strings in JSON.
    #[serde(with = "string_keys")]
    pub map: BTreeMap<u32, u32>,
    pub label_set: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetEntry>,
    /// Classes whose point prompts carry the shared ambiguity embedding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambiguous: Vec<u32>,
}

mod string_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, u32>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, u32>, D::Error> {
        let raw = BTreeMap::<String, u32>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("map key {k:?} is not an integer")))
            })
            .collect()
    }
}

/// The label space bundled with the crate (best-effort class table).
pub const DEFAULT_LABELSPACE_JSON: &str = include_str!("../config/labelspace.json");

impl LabelSpace {
    pub fn from_json(text: &str) -> Result<Self> {
        let space: LabelSpace = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_LABELSPACE_JSON).expect("bundled label space is valid")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.classes {
            if c.index == 0 || c.index > MAX_CLASSES {
                return Err(Error::arg(format!(
                    "class index {} outside 1..={MAX_CLASSES}",
                    c.index
                )));
            }
            if !seen.insert(c.index) {
                return Err(Error::arg(format!("duplicate class index {}", c.index)));
            }
        }
        for (id, ds) in &self.datasets {
            let mut image = BTreeSet::new();
            for (&local, &global) in &ds.map {
                if local == 0 {
                    return Err(Error::arg(format!("dataset {id}: local index 0 is background")));
                }
                if !seen.contains(&global) {
                    return Err(Error::arg(format!(
                        "dataset {id}: global index {global} is not a declared class"
                    )));
                }
                if !image.insert(global) {
                    return Err(Error::arg(format!(
                        "dataset {id}: global index {global} mapped twice"
                    )));
                }
            }
            if image != ds.label_set {
                return Err(Error::arg(format!(
                    "dataset {id}: label_set differs from the image of its map"
                )));
            }
        }
        for a in &self.ambiguous {
            if !seen.contains(a) {
                return Err(Error::arg(format!("ambiguous class {a} is not declared")));
            }
        }
        Ok(())
    }

    pub fn class_name(&self, index: u32) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.index == index)
            .map(|c| c.name.as_str())
    }

    pub fn contains_class(&self, index: u32) -> bool {
        self.classes.iter().any(|c| c.index == index)
    }

    pub fn is_ambiguous(&self, index: u32) -> bool {
        self.ambiguous.contains(&index)
    }

    pub fn dataset(&self, id: &str) -> Result<&DatasetEntry> {
        self.datasets
            .get(id)
            .ok_or_else(|| Error::arg(format!("dataset {id:?} is not registered")))
    }
}

impl DatasetEntry {
    /// Map with keys and values swapped.
    pub fn inverse(&self) -> DatasetEntry {
        let map: BTreeMap<u32, u32> = self.map.iter().map(|(&l, &g)| (g, l)).collect();
        let label_set = map.values().copied().collect();
        DatasetEntry { map, label_set }
    }
}

/// Rewrites a dataset-local label volume into global class indices.
pub fn remap_labels(local: &LabelVolume, space: &LabelSpace, dataset_id: &str) -> Result<LabelVolume> {
    let ds = space.dataset(dataset_id)?;
    remap_with(local, &ds.map)
}

/// Voxelwise substitution; zero stays zero, any other value must be mapped.
pub fn remap_with(local: &LabelVolume, map: &BTreeMap<u32, u32>) -> Result<LabelVolume> {
    // dense lookup for the common small-index case
    let max_key = map.keys().next_back().copied().unwrap_or(0) as usize;
    let mut lut = vec![None; max_key + 1];
    for (&k, &v) in map {
        lut[k as usize] = Some(v);
    }
    let mut out = local.clone();
    for v in out.data_mut() {
        if *v == 0 {
            continue;
        }
        *v = lut
            .get(*v as usize)
            .copied()
            .flatten()
            .ok_or(Error::Mapping(*v))?;
    }
    Ok(out)
}
