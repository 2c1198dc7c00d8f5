//! Predictor selection by name.
//!
//! ```text
//! oracle                      ground truth lookup (needs labels)
//! region_grow[:tol]           intensity flood fill, interactive only
//! window:lo,hi                intensity window, both branches
//! constant:p                  probability p everywhere
//! external:<cmd>              child process speaking line-delimited JSON
//! <auto>+<interactive>        one predictor per branch
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    CompositePredictor, ConstantPredictor, ExternalPredictor, IntensityWindowPredictor, OraclePredictor,
    Predictor, RegionGrowPredictor,
};
use crate::volume::LabelVolume;

pub const DEFAULT_REGION_GROW_TOLERANCE: f32 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PredictorSpec {
    Oracle,
    RegionGrow(f32),
    Window(f32, f32),
    Constant(f32),
    External(String),
    Composite(Box<PredictorSpec>, Box<PredictorSpec>),
}

impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("external:") {
            if rest.trim().is_empty() {
                return Err(Error::arg("external predictor needs a command"));
            }
            return Ok(PredictorSpec::External(rest.to_string()));
        }
        if let Some((a, b)) = s.split_once('+') {
            return Ok(PredictorSpec::Composite(Box::new(a.parse()?), Box::new(b.parse()?)));
        }
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f32>()
                .map_err(|_| Error::arg(format!("predictor {s:?}: {v:?} is not a number")))
        };
        match (name, arg) {
            ("oracle", None) => Ok(PredictorSpec::Oracle),
            ("region_grow", None) => Ok(PredictorSpec::RegionGrow(DEFAULT_REGION_GROW_TOLERANCE)),
            ("region_grow", Some(t)) => Ok(PredictorSpec::RegionGrow(num(t)?)),
            ("constant", Some(p)) => {
                let p = num(p)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::arg("constant probability must be in [0, 1]"));
                }
                Ok(PredictorSpec::Constant(p))
            }
            ("window", Some(r)) => {
                let (lo, hi) = r
                    .split_once(',')
                    .ok_or_else(|| Error::arg("window predictor expects window:lo,hi"))?;
                Ok(PredictorSpec::Window(num(lo)?, num(hi)?))
            }
            _ => Err(Error::arg(format!("unknown predictor {s:?}"))),
        }
    }
}

impl TryFrom<String> for PredictorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PredictorSpec> for String {
    fn from(p: PredictorSpec) -> String {
        p.to_string()
    }
}

impl std::fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictorSpec::Oracle => write!(f, "oracle"),
            PredictorSpec::RegionGrow(t) => write!(f, "region_grow:{t}"),
            PredictorSpec::Window(lo, hi) => write!(f, "window:{lo},{hi}"),
            PredictorSpec::Constant(p) => write!(f, "constant:{p}"),
            PredictorSpec::External(c) => write!(f, "external:{c}"),
            PredictorSpec::Composite(a, b) => write!(f, "{a}+{b}"),
        }
    }
}

impl PredictorSpec {
    pub fn needs_ground_truth(&self) -> bool {
        match self {
            PredictorSpec::Oracle => true,
            PredictorSpec::Composite(a, b) => a.needs_ground_truth() || b.needs_ground_truth(),
            _ => false,
        }
    }

    /// Instantiates the predictor. `externals` maps names to commands; when
    /// it is `None`, `external:<cmd>` runs `<cmd>` directly.
    pub fn build(
        &self,
        gt: Option<Arc<LabelVolume>>,
        externals: Option<&BTreeMap<String, String>>,
    ) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            PredictorSpec::Oracle => {
                let gt = gt.ok_or_else(|| Error::arg("the oracle predictor needs ground-truth labels"))?;
                Box::new(OraclePredictor::new(gt))
            }
            PredictorSpec::RegionGrow(t) => Box::new(RegionGrowPredictor::new(*t)?),
            PredictorSpec::Window(lo, hi) => {
                if !(lo <= hi) {
                    return Err(Error::arg("window predictor needs lo <= hi"));
                }
                Box::new(IntensityWindowPredictor { lo: *lo, hi: *hi })
            }
            PredictorSpec::Constant(p) => Box::new(ConstantPredictor(*p)),
            PredictorSpec::External(name) => {
                let cmd = match externals {
                    Some(map) => map
                        .get(name)
                        .ok_or_else(|| Error::arg(format!("no external predictor named {name:?}")))?,
                    None => name,
                };
                Box::new(ExternalPredictor::spawn(cmd)?)
            }
            PredictorSpec::Composite(a, b) => Box::new(CompositePredictor {
                auto: a.build(gt.clone(), externals)?,
                interactive: b.build(gt, externals)?,
            }),
        })
    }
}
