//! Sample-quality metrics for the toy setting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::data::{DatasetKind, EIGHT_GAUSSIANS_RADIUS, EIGHT_GAUSSIANS_STD, RING_STD};
use crate::error::{Error, Result};
use crate::nets::Encoder;
use crate::tensor::Tensor;

/// Eigenvalues below this are clamped before taking square roots.
pub const EIGEN_FLOOR: f64 = 0.0;

/// A mode counts as covered once it holds this fraction of its expected share of samples.
pub const MODE_MIN_SHARE: f64 = 0.1;

fn to_matrix(x: &Tensor) -> Result<DMatrix<f64>> {
    let (n, d) = x.rows_cols().ok_or_else(|| Error::shape("metrics", x.shape(), &[]))?;
    Ok(DMatrix::from_row_slice(n, d, x.data()))
}

fn mean_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mu = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two `[n, d]` sample sets:
/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))`.
///
/// The trace of `(S1 S2)^(1/2)` is computed as the trace of the square root
/// of the symmetric `S1^(1/2) S2 S1^(1/2)`, which has the same eigenvalues.
pub fn frechet_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (ma, mb) = (to_matrix(a)?, to_matrix(b)?);
    if ma.ncols() != mb.ncols() {
        return Err(Error::shape("frechet_distance", a.shape(), b.shape()));
    }
    if ma.nrows() < 2 || mb.nrows() < 2 {
        return Err(Error::Config("frechet distance needs at least 2 samples per side".into()));
    }
    let (mu1, s1) = mean_cov(&ma);
    let (mu2, s2) = mean_cov(&mb);
    let r1 = sym_sqrt(&s1);
    let inner = &r1 * &s2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(EIGEN_FLOOR).sqrt())
        .sum();
    let d = (mu1 - mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    Ok(d.max(0.0))
}

/// Fréchet distance in the feature space of the frozen encoder.
pub fn toy_frechet(real: &Tensor, generated: &Tensor, encoder: &Encoder) -> Result<f64> {
    frechet_distance(&encoder.encode(real)?, &encoder.encode(generated)?)
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Mean pairwise distance. Row sums run in parallel; the final sum is sequential in row order.
fn mean_pairwise(a: &Tensor, b: &Tensor) -> f64 {
    let rows_b: Vec<&[f64]> = b.rows().collect();
    let sums: Vec<f64> = a
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| rows_b.iter().map(|y| dist(x, y)).sum::<f64>())
        .collect();
    sums.iter().sum::<f64>() / (rows_b.len() * sums.len()) as f64
}

/// `2 E|A - B| - E|A - A'| - E|B - B'|` over all pairs (V-statistic).
pub fn energy_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, da) = a.rows_cols().ok_or_else(|| Error::shape("energy_distance", a.shape(), &[]))?;
    let (nb, db) = b.rows_cols().ok_or_else(|| Error::shape("energy_distance", b.shape(), &[]))?;
    if da != db || na == 0 || nb == 0 {
        return Err(Error::shape("energy_distance", a.shape(), b.shape()));
    }
    Ok(2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b))
}

/// The mode a point belongs to, if it lies on one.
pub fn mode_of(kind: DatasetKind, num_classes: usize, x: &[f64]) -> Option<usize> {
    match kind {
        DatasetKind::EightGaussians => (0..num_classes).find(|&c| {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
            let center = [EIGHT_GAUSSIANS_RADIUS * angle.cos(), EIGHT_GAUSSIANS_RADIUS * angle.sin()];
            dist(x, &center) <= 3.0 * EIGHT_GAUSSIANS_STD
        }),
        DatasetKind::Checkerboard => {
            if x.iter().any(|v| !(-4.0..4.0).contains(v)) {
                return None;
            }
            let (col, row) = (((x[0] + 4.0) / 2.0) as usize, ((x[1] + 4.0) / 2.0) as usize);
            if (row + col) % 2 != 0 {
                return None;
            }
            let cell = 2 * row + col / 2;
            (cell < num_classes).then_some(cell)
        }
        DatasetKind::Rings => {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (0..num_classes).find(|&c| (r - DatasetKind::ring_radius(c)).abs() <= 4.0 * RING_STD)
        }
        DatasetKind::Grid8x8 => (0..num_classes).find(|&c| {
            let mut d2 = 0.0;
            for (i, v) in x.iter().enumerate() {
                let on = if c < 8 { i / 8 == c } else { i % 8 == c - 8 };
                let t = if on { 1.0 } else { 0.0 };
                d2 += (v - t) * (v - t);
            }
            d2 <= 8.0
        }),
    }
}

/// Samples landing on each mode.
pub fn mode_hits(samples: &Tensor, kind: DatasetKind, num_classes: usize) -> Vec<usize> {
    let mut hits = vec![0; num_classes];
    for row in samples.rows() {
        if let Some(c) = mode_of(kind, num_classes, row) {
            hits[c] += 1;
        }
    }
    hits
}

/// Fraction of modes holding at least [`MODE_MIN_SHARE`] of their expected share.
pub fn mode_coverage(samples: &Tensor, kind: DatasetKind, num_classes: usize) -> f64 {
    let n = samples.rows_cols().map_or(0, |(n, _)| n);
    let need = (MODE_MIN_SHARE * n as f64 / num_classes as f64).max(1.0);
    let hits = mode_hits(samples, kind, num_classes);
    hits.iter().filter(|&&h| h as f64 >= need).count() as f64 / num_classes as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class: usize,
    pub toy_frechet: f64,
    pub energy_distance: f64,
    /// Samples of this class that landed on their own mode.
    pub on_mode: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub toy_frechet: f64,
    pub energy_distance: f64,
    pub mode_coverage: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl MetricReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "toy_frechet: {}\nenergy_distance: {}\nmode_coverage: {}\n",
            self.toy_frechet, self.energy_distance, self.mode_coverage
        );
        for c in &self.per_class {
            s.push_str(&format!(
                "class_{}_toy_frechet: {}\nclass_{}_energy_distance: {}\nclass_{}_on_mode: {}\n",
                c.class, c.toy_frechet, c.class, c.energy_distance, c.class, c.on_mode
            ));
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.toy_frechet.is_finite() && self.energy_distance.is_finite() && self.mode_coverage.is_finite()
    }
}

fn select(x: &Tensor, labels: &[usize], class: usize) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = x
        .rows()
        .zip(labels)
        .filter(|(_, &l)| l == class)
        .map(|(r, _)| r.to_vec())
        .collect();
    Tensor::from_rows(&rows)
}

/// Metrics of labeled generated samples against labeled reference samples.
pub fn evaluate(
    real: &Tensor,
    real_labels: &[usize],
    generated: &Tensor,
    generated_labels: &[usize],
    kind: DatasetKind,
    num_classes: usize,
    encoder: &Encoder,
) -> Result<MetricReport> {
    let mut per_class = Vec::new();
    for class in 0..num_classes {
        let (r, g) = (select(real, real_labels, class), select(generated, generated_labels, class));
        let (Ok(r), Ok(g)) = (r, g) else { continue };
        let n = g.rows_cols().unwrap().0;
        let on_mode = g.rows().filter(|x| mode_of(kind, num_classes, x) == Some(class)).count() as f64 / n as f64;
        per_class.push(ClassMetrics {
            class,
            toy_frechet: toy_frechet(&r, &g, encoder)?,
            energy_distance: energy_distance(&r, &g)?,
            on_mode,
        });
    }
    Ok(MetricReport {
        toy_frechet: toy_frechet(real, generated, encoder)?,
        energy_distance: energy_distance(real, generated)?,
        mode_coverage: mode_coverage(generated, kind, num_classes),
        per_class,
    })
}
