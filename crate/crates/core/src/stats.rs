//! Small numerically careful accumulators.

/// Sample mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (m - 1) sample variance, two-pass.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unbiased sample variance of `a[i] - b[i]`, two-pass.
pub fn variance_of_difference(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let m = a.len();
    if m < 2 {
        return f64::NAN;
    }
    let mu = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / m as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y - mu;
            d * d
        })
        .sum::<f64>()
        / (m - 1) as f64
}

/// Pearson correlation; `NAN` when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

/// Running mean and co-moment matrix of a vector-valued stream.
///
/// Batches are merged with the pairwise update of Chan et al., so results do
/// not depend on how the stream was partitioned as long as the merge order is
/// fixed.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    // upper triangle, row-major, including the diagonal
    comoment: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        CovarianceAccumulator {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Accumulates a block of `rows` observations stored row-major.
    pub fn push_block(&mut self, data: &[f64], rows: usize) {
        if rows == 0 {
            return;
        }
        let d = self.dim;
        let mut block = CovarianceAccumulator::new(d);
        block.count = rows as u64;
        for r in 0..rows {
            let row = &data[r * d..(r + 1) * d];
            for (m, x) in block.mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut block.mean {
            *m /= rows as f64;
        }
        let mut centered = vec![0.0; d];
        for r in 0..rows {
            let row = &data[r * d..(r + 1) * d];
            for i in 0..d {
                centered[i] = row[i] - block.mean[i];
            }
            let mut k = 0;
            for i in 0..d {
                let ci = centered[i];
                for cj in &centered[i..] {
                    block.comoment[k] += ci * cj;
                    k += 1;
                }
            }
        }
        self.merge(&block);
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        debug_assert_eq!(self.dim, other.dim);
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                self.comoment[k] += other.comoment[k] + delta[i] * delta[j] * na * nb / n;
                k += 1;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance between components `i` and `j`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = i * self.dim - i * (i + 1) / 2 + j;
        self.comoment[k] / (self.count as f64 - 1.0)
    }

    /// Unbiased variance of `x_i - x_j`.
    pub fn variance_of_difference(&self, i: usize, j: usize) -> f64 {
        let v = self.covariance(i, i) + self.covariance(j, j) - 2.0 * self.covariance(i, j);
        v.max(0.0)
    }
}
