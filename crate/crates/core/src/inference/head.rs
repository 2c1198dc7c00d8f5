//! Promptable head math: class-embedding segmentation logits and 3D point
//! prompt embeddings.
//!
//! For a class prompt `i`, the automatic head maps the class embedding row
//! through a small MLP and takes its inner product with the decoder feature
//! at every voxel: `p(v) = sigmoid(<mlp(E[i]), F(v)>)`.
//!
//! A point embedding is a Fourier encoding of the normalized click position,
//! plus a polarity vector, plus the shared ambiguity vector for ambiguous
//! classes, plus the zero-shot vector for novel structures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supervoxel::FeatureVolume;
use crate::volume::Dims;

use super::prompt::{ClassPrompt, PointContext, PointPrompt, Polarity};

/// Dense layer `y = W x + b`, `W` row-major with `outputs` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / inputs as f32).sqrt();
        Linear {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: (0..outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).fold(self.bias[o], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

/// Stack of dense layers with ReLU between consecutive layers (none after
/// the last). An empty stack is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn identity() -> Self {
        Mlp { layers: Vec::new() }
    }

    /// `channels → hidden → channels`.
    pub fn two_layer(channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            layers: vec![
                Linear::random(channels, hidden, rng),
                Linear::random(hidden, channels, rng),
            ],
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur);
            if i + 1 < self.layers.len() {
                cur.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        cur
    }

    fn check(&self, channels: usize) -> Result<()> {
        let mut width = channels;
        for l in &self.layers {
            if l.inputs != width || l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::arg("mlp layer shapes are inconsistent"));
            }
            width = l.outputs;
        }
        if width != channels {
            return Err(Error::arg(format!(
                "mlp maps to {width} channels, expected {channels}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptHeadParams {
    pub channels: usize,
    /// `n_classes x channels`, row `i - 1` belongs to class `i`.
    pub class_embeddings: Vec<f32>,
    pub n_classes: usize,
    pub mlp: Mlp,
    /// Shared by every ambiguous class.
    pub special_embedding: Vec<f32>,
    pub zero_shot_embedding: Vec<f32>,
    pub positive_embedding: Vec<f32>,
    pub negative_embedding: Vec<f32>,
}

impl PromptHeadParams {
    pub const DEFAULT_CHANNELS: usize = 256;

    pub fn random(n_classes: usize, channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut vec = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let class_embeddings = vec(n_classes * channels);
        let special_embedding = vec(channels);
        let zero_shot_embedding = vec(channels);
        let positive_embedding = vec(channels);
        let negative_embedding = vec(channels);
        PromptHeadParams {
            channels,
            class_embeddings,
            n_classes,
            mlp: Mlp::two_layer(channels, hidden, rng),
            special_embedding,
            zero_shot_embedding,
            positive_embedding,
            negative_embedding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if c == 0 || self.class_embeddings.len() != self.n_classes * c {
            return Err(Error::arg("class embedding table has the wrong shape"));
        }
        for (name, v) in [
            ("special", &self.special_embedding),
            ("zero_shot", &self.zero_shot_embedding),
            ("positive", &self.positive_embedding),
            ("negative", &self.negative_embedding),
        ] {
            if v.len() != c {
                return Err(Error::arg(format!("{name} embedding must have {c} values")));
            }
        }
        let all_finite = self
            .class_embeddings
            .iter()
            .chain(&self.special_embedding)
            .chain(&self.zero_shot_embedding)
            .chain(&self.positive_embedding)
            .chain(&self.negative_embedding)
            .chain(self.mlp.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias)))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::arg("prompt head parameters contain non-finite values"));
        }
        self.mlp.check(c)
    }

    pub fn class_row(&self, class: u32) -> Result<&[f32]> {
        if class == 0 || class as usize > self.n_classes {
            return Err(Error::arg(format!(
                "class index {class} outside 1..={}",
                self.n_classes
            )));
        }
        let i = class as usize - 1;
        Ok(&self.class_embeddings[i * self.channels..(i + 1) * self.channels])
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-voxel logits for one class prompt.
pub fn class_logits(features: &FeatureVolume, params: &PromptHeadParams, prompt: ClassPrompt) -> Result<Vec<f32>> {
    let query = params.mlp.forward(params.class_row(prompt.index())?);
    Ok((0..features.dims.len())
        .map(|v| {
            features
                .voxel(v)
                .iter()
                .zip(&query)
                .fold(0f32, |acc, (f, q)| acc + f * q)
        })
        .collect())
}

/// Probability volumes, one per prompt. Prompts are independent; a batch
/// gives exactly the same values as separate calls.
pub fn prompt_head(
    features: &FeatureVolume,
    params: &PromptHeadParams,
    prompts: &[ClassPrompt],
) -> Result<Vec<Vec<f32>>> {
    if prompts.is_empty() {
        return Err(Error::arg("at least one class prompt is required"));
    }
    if features.channels != params.channels {
        return Err(Error::arg(format!(
            "feature has {} channels, head expects {}",
            features.channels, params.channels
        )));
    }
    prompts
        .iter()
        .map(|&p| Ok(class_logits(features, params, p)?.into_iter().map(sigmoid).collect()))
        .collect()
}

/// Sin/cos features of the normalized position, `bands` octaves per axis,
/// zero-padded to `channels`. Layout: for axis a and band k, `sin` at
/// `2 * (a * bands + k)` and `cos` right after it.
pub fn fourier_encoding(position: [f64; 3], bands: usize, channels: usize) -> Vec<f32> {
    let mut out = vec![0f32; channels];
    for (a, &u) in position.iter().enumerate() {
        for k in 0..bands {
            let w = std::f64::consts::PI * (1u64 << k) as f64;
            let i = 2 * (a * bands + k);
            out[i] = (w * u).sin() as f32;
            out[i + 1] = (w * u).cos() as f32;
        }
    }
    out
}

/// Position scaled to `[0, 1]` per axis (0 for singleton axes).
pub fn normalized_position(p: [usize; 3], dims: Dims) -> [f64; 3] {
    [0, 1, 2].map(|a| {
        let n = dims.0[a];
        if n > 1 {
            p[a] as f64 / (n - 1) as f64
        } else {
            0.0
        }
    })
}

pub const DEFAULT_FREQ_BANDS: usize = 6;

pub fn embed_points(
    points: &[PointPrompt],
    dims: Dims,
    params: &PromptHeadParams,
    bands: usize,
) -> Result<Vec<Vec<f32>>> {
    let c = params.channels;
    if bands == 0 {
        return Err(Error::arg("at least one frequency band is required"));
    }
    if c % 2 != 0 || c < 6 * bands {
        return Err(Error::arg(format!(
            "channel count {c} must be even and >= {}",
            6 * bands
        )));
    }
    points
        .iter()
        .map(|p| {
            dims.check_coord(p.position)?;
            let mut e = fourier_encoding(normalized_position(p.position, dims), bands, c);
            let pol = match p.polarity {
                Polarity::Positive => &params.positive_embedding,
                Polarity::Negative => &params.negative_embedding,
            };
            add(&mut e, pol);
            match p.context {
                PointContext::Ambiguous(_) => add(&mut e, &params.special_embedding),
                PointContext::ZeroShot => add(&mut e, &params.zero_shot_embedding),
                PointContext::Supported(_) => {}
            }
            Ok(e)
        })
        .collect()
}

fn add(acc: &mut [f32], v: &[f32]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}
