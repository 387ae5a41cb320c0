//! Labeled toy datasets. Every sample is a pure function of
//! `(kind, num_classes, seed, index)`; labels cycle through the classes so
//! class counts differ by at most one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{gaussian, stream, Domain};
use crate::tensor::Tensor;

pub const EIGHT_GAUSSIANS_RADIUS: f64 = 4.0;
pub const EIGHT_GAUSSIANS_STD: f64 = 0.3;
pub const RING_STD: f64 = 0.1;
pub const GRID_NOISE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    EightGaussians,
    Checkerboard,
    Rings,
    Grid8x8,
}

impl DatasetKind {
    pub fn data_dim(self) -> usize {
        match self {
            DatasetKind::Grid8x8 => 64,
            _ => 2,
        }
    }

    pub fn max_classes(self) -> usize {
        match self {
            DatasetKind::Checkerboard => 8,
            DatasetKind::Grid8x8 => 16,
            _ => usize::MAX,
        }
    }

    /// Radius of the ring for `class`.
    pub fn ring_radius(class: usize) -> f64 {
        1.0 + class as f64
    }

    /// Deterministic sample `index` and its label.
    pub fn sample(self, num_classes: usize, seed: u64, index: u64) -> (Vec<f64>, usize) {
        let class = (index % num_classes as u64) as usize;
        let mut rng = stream(seed, Domain::Dataset, index, 0);
        let x = match self {
            DatasetKind::EightGaussians => {
                let angle = 2.0 * PI * class as f64 / num_classes as f64;
                let (s, c) = angle.sin_cos();
                vec![
                    EIGHT_GAUSSIANS_RADIUS * c + EIGHT_GAUSSIANS_STD * gaussian(&mut rng),
                    EIGHT_GAUSSIANS_RADIUS * s + EIGHT_GAUSSIANS_STD * gaussian(&mut rng),
                ]
            }
            DatasetKind::Checkerboard => {
                // The 8 dark cells of a 4x4 board on [-4, 4]^2.
                let cell = class % 8;
                let (row, col) = (cell / 2, 2 * (cell % 2) + (cell / 2) % 2);
                let x = -4.0 + 2.0 * col as f64 + 2.0 * rng.random::<f64>();
                let y = -4.0 + 2.0 * row as f64 + 2.0 * rng.random::<f64>();
                vec![x, y]
            }
            DatasetKind::Rings => {
                let angle = 2.0 * PI * rng.random::<f64>();
                let offset = loop {
                    let z = gaussian(&mut rng);
                    if z.abs() <= 4.0 {
                        break RING_STD * z;
                    }
                };
                let r = DatasetKind::ring_radius(class) + offset;
                vec![r * angle.cos(), r * angle.sin()]
            }
            DatasetKind::Grid8x8 => {
                let mut img: Vec<f64> = (0..64).map(|_| GRID_NOISE * gaussian(&mut rng)).collect();
                for k in 0..8 {
                    let idx = if class < 8 { class * 8 + k } else { k * 8 + (class - 8) };
                    img[idx] += 1.0;
                }
                img
            }
        };
        (x, class)
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eight_gaussians" => Ok(DatasetKind::EightGaussians),
            "checkerboard" => Ok(DatasetKind::Checkerboard),
            "rings" => Ok(DatasetKind::Rings),
            "grid8x8" => Ok(DatasetKind::Grid8x8),
            other => Err(Error::UnknownDataset(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::EightGaussians => "eight_gaussians",
            DatasetKind::Checkerboard => "checkerboard",
            DatasetKind::Rings => "rings",
            DatasetKind::Grid8x8 => "grid8x8",
        })
    }
}

/// A materialized range of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub seed: u64,
    /// `[n, data_dim]`.
    pub points: Tensor,
    pub labels: Vec<usize>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn data_dim(&self) -> usize {
        self.kind.data_dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    /// Indices of all samples with label `class`, in order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Rows `indices` as a `[k, d]` tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let data = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        Tensor::matrix(indices.len(), self.data_dim(), data).unwrap()
    }
}

/// Samples `start..start + n` of the named dataset.
pub fn generate_range(kind: DatasetKind, num_classes: usize, start: u64, n: usize, seed: u64) -> Result<ToyDataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    if num_classes == 0 || num_classes > kind.max_classes() {
        return Err(Error::Config(format!("{kind} supports 1..={} classes", kind.max_classes().min(64))));
    }
    let mut data = Vec::with_capacity(n * kind.data_dim());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let (x, c) = kind.sample(num_classes, seed, start + i);
        data.extend(x);
        labels.push(c);
    }
    Ok(ToyDataset {
        kind,
        num_classes,
        seed,
        points: Tensor::matrix(n, kind.data_dim(), data)?,
        labels,
    })
}

/// The first `n` samples of the named dataset.
pub fn generate_dataset(name: &str, num_classes: usize, n: usize, seed: u64) -> Result<ToyDataset> {
    generate_range(name.parse()?, num_classes, 0, n, seed)
}
