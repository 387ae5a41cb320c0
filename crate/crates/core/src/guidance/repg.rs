use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::ToyDataset;
use crate::error::{Error, Result};
use crate::nets::Encoder;
use crate::rng::{stream, Domain};
use crate::tensor::Tensor;

/// Representatives kept per class.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// A uniformly drawn representative per chain and step.
    RandomPerStep,
    /// Always the representative closest to the class mean.
    NearestToMean,
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_per_step" => Ok(Selection::RandomPerStep),
            "nearest_to_mean" => Ok(Selection::NearestToMean),
            _ => Err(Error::Config(format!("unknown selection `{s}`"))),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::RandomPerStep => "random_per_step",
            Selection::NearestToMean => "nearest_to_mean",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepGConfig {
    pub k: usize,
    pub selection: Selection,
    /// Per class, `k` vectors ordered by distance to the class mean.
    pub vectors: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl RepGConfig {
    pub fn new(vectors: BTreeMap<usize, Vec<Vec<f64>>>, selection: Selection) -> Result<Self> {
        let k = vectors.values().next().map_or(0, Vec::len);
        let cfg = RepGConfig { k, selection, vectors };
        cfg.validate(None)?;
        Ok(cfg)
    }

    pub fn validate(&self, rep_dim: Option<usize>) -> Result<()> {
        if self.k == 0 || self.vectors.is_empty() {
            return Err(Error::Config("RepG needs at least one representative per class".into()));
        }
        let dim = rep_dim.unwrap_or_else(|| self.vectors.values().next().unwrap()[0].len());
        for (class, vs) in &self.vectors {
            if vs.len() != self.k {
                return Err(Error::Config(format!("class {class} has {} representatives, expected {}", vs.len(), self.k)));
            }
            if vs.iter().any(|v| v.len() != dim) {
                return Err(Error::Config(format!("class {class} has a representative of the wrong length")));
            }
        }
        Ok(())
    }

    /// Target vector for `class` at sampler step `step` of chain `chain`.
    /// Random selection draws from its own stream, so it never perturbs sampler noise.
    pub fn select(&self, class: Option<usize>, seed: u64, chain: u64, step: u64) -> Result<Vec<f64>> {
        let class = class.ok_or_else(|| Error::Config("RepG guidance needs a class for every chain".into()))?;
        let vs = self.vectors.get(&class).ok_or(Error::MissingRepresentatives(class))?;
        let i = match self.selection {
            Selection::NearestToMean => 0,
            Selection::RandomPerStep if vs.len() == 1 => 0,
            Selection::RandomPerStep => stream(seed, Domain::RepgSelect, chain, step).random_range(0..vs.len()),
        };
        Ok(vs[i].clone())
    }
}

/// Indices of the `k` rows nearest (Euclidean) to the mean of `features`,
/// nearest first; ties go to the lower index.
pub fn nearest_to_mean(features: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = features.len();
    let d = features.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x / n as f64;
        }
    }
    let mut order: Vec<(f64, usize)> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Per class, the `k` rows of `features` closest to that class's mean feature.
pub fn representatives_from_features(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    k: usize,
) -> Result<BTreeMap<usize, Vec<Vec<f64>>>> {
    let mut out = BTreeMap::new();
    for class in 0..num_classes {
        let feats: Vec<Vec<f64>> = features
            .rows()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r.to_vec())
            .collect();
        if feats.len() < k || k == 0 {
            return Err(Error::NotEnoughSamples {
                class,
                available: feats.len(),
                k,
            });
        }
        let chosen = nearest_to_mean(&feats, k).into_iter().map(|j| feats[j].clone()).collect();
        out.insert(class, chosen);
    }
    Ok(out)
}

/// Per class, the `k` encoder representations closest to the class mean.
pub fn build_representatives(encoder: &Encoder, dataset: &ToyDataset, k: usize) -> Result<BTreeMap<usize, Vec<Vec<f64>>>> {
    let reps = encoder.encode(&dataset.points)?;
    representatives_from_features(&reps, &dataset.labels, dataset.num_classes, k)
}
