//! Guidance map: per-pixel mixedness scores that set the sparsity exponent.
//!
//! A pixel with a large guidance value `h_n` is treated as pure and receives
//! a stronger sparsity constraint `||a_n||_{1-h_n}^{1-h_n}`; mixed pixels get
//! values near zero, which degrades the constraint to a plain l1 penalty.

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceState {
    Raw,
    /// Every value lies in `[0, 0.5]`.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMap {
    values: Vec<f64>,
    state: GuidanceState,
}

impl GuidanceMap {
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("guidance values must be finite and >= 0"));
        }
        Ok(Self {
            values,
            state: GuidanceState::Raw,
        })
    }

    pub fn rescaled(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=0.5).contains(v)) {
            return Err(Error::invalid(
                "rescaled guidance values must lie in [0, 0.5]",
            ));
        }
        Ok(Self {
            values,
            state: GuidanceState::Rescaled,
        })
    }

    /// A uniform rescaled map; `value` must lie in `[0, 0.5]`.
    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::rescaled(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn state(&self) -> GuidanceState {
        self.state
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gini sparsity index of a nonnegative vector.
///
/// Entries are sorted ascending and weighted by `(K - k + 1/2) / K`, so small
/// entries weigh more than large ones. Uniform vectors score 0, one-hot
/// vectors score `(K - 1) / K`.
pub fn gini(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::invalid("gini of an empty vector"));
    }
    if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("gini needs finite nonnegative entries"));
    }
    let l1 = a.iter().fold(0.0, |acc, v| acc + v);
    if l1 == 0.0 {
        return Err(Error::invalid("gini of an all-zero vector is undefined"));
    }
    let mut sorted = a.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let weighted = sorted.iter().enumerate().fold(0.0, |acc, (i, &v)| {
        // i is zero-based, so the rank weight (K - k + 1/2) becomes (K - i - 1/2)
        acc + (v / l1) * ((k - i as f64 - 0.5) / k)
    });
    Ok(1.0 - 2.0 * weighted)
}

/// Spatial heuristic for the initial guidance map.
///
/// `h_i = sum_{j in N4(i)} exp(-||x_j - x_i||^2 / sigma)`. Out-of-grid
/// neighbours reflect back onto the pixel itself and contribute 1, so every
/// pixel sums exactly four terms.
pub fn initial_guidance(cube: &SpectralCube, sigma: f64) -> Result<GuidanceMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let (w, h) = (cube.width(), cube.height());
    // pixel-major copy so each spectrum is contiguous
    let spectra = cube.data().transpose();
    let dist2 = |i: usize, j: usize| -> f64 {
        spectra
            .row(i)
            .iter()
            .zip(spectra.row(j))
            .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b))
    };
    let mut values = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let neighbours = [
                if r > 0 { i - w } else { i },
                if r + 1 < h { i + w } else { i },
                if c > 0 { i - 1 } else { i },
                if c + 1 < w { i + 1 } else { i },
            ];
            let hi = neighbours
                .iter()
                .fold(0.0, |acc, &j| acc + (-dist2(i, j) / sigma).exp());
            values.push(hi);
        }
    }
    GuidanceMap::raw(values)
}

/// Affine map onto `[0, 0.5]`. A constant map becomes all zeros.
pub fn rescale_half(h: &GuidanceMap) -> GuidanceMap {
    let min = h.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = h.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let values = if h.values.is_empty() || span <= 0.0 {
        vec![0.0; h.values.len()]
    } else {
        h.values
            .iter()
            .map(|v| ((v - min) / (2.0 * span)).clamp(0.0, 0.5))
            .collect()
    };
    GuidanceMap {
        values,
        state: GuidanceState::Rescaled,
    }
}

/// Raw Gini score of every abundance column; all-zero columns score 0.
pub fn gini_columns(a: &Matrix) -> Vec<f64> {
    let at = a.transpose();
    (0..at.rows())
        .map(|n| {
            let col = at.row(n);
            if col.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                gini(col).unwrap_or(0.0)
            }
        })
        .collect()
}

/// Learned guidance map: rescaled Gini index of each abundance column.
pub fn guidance_from_abundance(a: &Matrix) -> GuidanceMap {
    rescale_half(&GuidanceMap {
        values: gini_columns(a),
        state: GuidanceState::Raw,
    })
}

/// `H = 1_K h^T`: a `K x N` matrix whose every row is the guidance map.
pub fn build_h_matrix(h: &GuidanceMap, k: usize) -> Matrix {
    Matrix::from_fn(k, h.len(), |_, n| h.values[n])
}

/// `sum_{k,n} (A_kn + xi)^(1 - H_kn)`, the sparsity term without its weight.
pub fn sparsity_penalty(a: &Matrix, h_mat: &Matrix, xi: f64) -> Result<f64> {
    if a.shape() != h_mat.shape() {
        return Err(Error::Shape {
            op: "sparsity_penalty",
            left: a.shape(),
            right: h_mat.shape(),
        });
    }
    Ok(a.as_slice()
        .iter()
        .zip(h_mat.as_slice())
        .fold(0.0, |acc, (&v, &hv)| acc + pow_exponent(v + xi, 1.0 - hv)))
}

#[inline]
pub(crate) fn pow_exponent(base: f64, e: f64) -> f64 {
    if e == 1.0 {
        base
    } else {
        base.powf(e)
    }
}
