use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Discriminator, FreezeMask, SequentialGenerator, SubGenerator};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp, DEFAULT_LEAKY_SLOPE};

const FORMAT: &str = "prada-checkpoint/1";

/// JSON document holding a trained generator/critic pair.
///
/// Parameter arrays are flat. A sub-generator stores `W` row-major, then the
/// skip vector, then each `out_net` layer as weight (row-major) followed by
/// bias. The critic stores its layers in the same weight-then-bias order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub d: usize,
    pub columns: Vec<String>,
    pub hidden: usize,
    pub leaky_slope: f64,
    pub generator: Vec<SubGeneratorRecord>,
    pub discriminator: DiscriminatorRecord,
    /// Frozen `[column, input]` pairs, 0-based.
    pub frozen: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGeneratorRecord {
    pub index: usize,
    pub w_rows: usize,
    pub w_cols: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorRecord {
    pub clamp: f64,
    /// Layer widths from input to output, e.g. `[d, d, d/2, 1]`.
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

fn slope_of(net: &Mlp) -> f64 {
    net.layers
        .iter()
        .find_map(|l| match l.activation {
            Activation::LeakyRelu { slope } => Some(slope),
            Activation::Identity => None,
        })
        .unwrap_or(DEFAULT_LEAKY_SLOPE)
}

impl Checkpoint {
    pub fn from_models(
        g: &SequentialGenerator,
        f: &Discriminator,
        columns: &[String],
    ) -> Result<Self> {
        if g.dim() != f.dim() || columns.len() != g.dim() {
            return Err(Error::shape(format!(
                "generator d={}, critic d={}, {} column names",
                g.dim(),
                f.dim(),
                columns.len()
            )));
        }
        let hidden = g.subs().first().map_or(super::DEFAULT_HIDDEN, SubGenerator::hidden);
        let slope = g
            .subs()
            .first()
            .map_or_else(|| slope_of(&f.net), |s| slope_of(&s.out_net));
        let generator = g
            .subs()
            .iter()
            .map(|s| {
                let mut params = Vec::with_capacity(s.num_params());
                s.write_params(&mut params);
                SubGeneratorRecord {
                    index: s.index(),
                    w_rows: s.w.rows(),
                    w_cols: s.w.cols(),
                    params,
                }
            })
            .collect();
        let mut widths = vec![f.dim()];
        widths.extend(f.net.layers.iter().map(DenseLayer::outputs));
        Ok(Checkpoint {
            format: FORMAT.to_string(),
            d: g.dim(),
            columns: columns.to_vec(),
            hidden,
            leaky_slope: slope,
            generator,
            discriminator: DiscriminatorRecord {
                clamp: f.clamp(),
                widths,
                params: f.params(),
            },
            frozen: g.frozen().iter().map(|(j, k)| [j, k]).collect(),
        })
    }

    pub fn to_models(&self) -> Result<(SequentialGenerator, Discriminator)> {
        if self.format != FORMAT {
            return Err(Error::Data(format!("unknown checkpoint format {:?}", self.format)));
        }
        if self.generator.len() != self.d || self.columns.len() != self.d {
            return Err(Error::Data("checkpoint column count mismatch".into()));
        }
        let leaky = Activation::LeakyRelu {
            slope: self.leaky_slope,
        };
        let mut subs = Vec::with_capacity(self.d);
        for (p, rec) in self.generator.iter().enumerate() {
            if rec.index != p + 1 || rec.w_rows != rec.index || rec.w_cols != self.hidden {
                return Err(Error::Data(format!("malformed sub-generator record {p}")));
            }
            let mut s = SubGenerator::zeros(rec.index, self.hidden);
            for l in &mut s.out_net.layers {
                if matches!(l.activation, Activation::LeakyRelu { .. }) {
                    l.activation = leaky;
                }
            }
            if rec.params.len() != s.num_params() {
                return Err(Error::Data(format!(
                    "sub-generator {} has {} parameters, expected {}",
                    rec.index,
                    rec.params.len(),
                    s.num_params()
                )));
            }
            s.read_params(&rec.params)?;
            subs.push(s);
        }
        let mut g = SequentialGenerator::from_subs(subs)?;

        let w = &self.discriminator.widths;
        if w.len() < 2 || w[0] != self.d || *w.last().unwrap() != 1 {
            return Err(Error::Data("malformed critic widths".into()));
        }
        let layers = w
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let act = if i + 2 == w.len() { Activation::Identity } else { leaky };
                DenseLayer::zeros(pair[0], pair[1], act)
            })
            .collect();
        let mut f = Discriminator::new(Mlp::new(layers)?, self.discriminator.clamp)?;
        if self.discriminator.params.len() != f.num_params() {
            return Err(Error::Data("critic parameter count mismatch".into()));
        }
        f.set_params(&self.discriminator.params)?;

        let mut mask = FreezeMask::new();
        for &[j, k] in &self.frozen {
            mask.insert(j, k);
        }
        g.set_frozen(mask)?;
        Ok((g, f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
