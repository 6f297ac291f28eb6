//! Seeded synthetic scenes with known endmembers, abundances and corrupted
//! channels.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};
use crate::metrics::sad;
use crate::sparsity::{gini_columns, rescale_half, GuidanceMap};

const MIN_PAIRWISE_SAD: f64 = 0.15;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierKind {
    /// Corrupted channels are all zeros.
    Blank,
    /// Corrupted channels are uniform noise up to 3x the clean channel maximum.
    HeavyNoise,
}

impl fmt::Display for OutlierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutlierKind::Blank => "blank",
            OutlierKind::HeavyNoise => "heavy_noise",
        })
    }
}

impl FromStr for OutlierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blank" => Ok(OutlierKind::Blank),
            "heavy_noise" | "heavy-noise" => Ok(OutlierKind::HeavyNoise),
            other => Err(Error::invalid(format!("unknown outlier kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub endmembers: usize,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_kind: OutlierKind,
    pub blur_radius: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, channels: usize, endmembers: usize) -> Self {
        Self {
            width,
            height,
            channels,
            endmembers,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_kind: OutlierKind::HeavyNoise,
            blur_radius: 2,
            seed: 0,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// `floor(outlier_fraction * L)`.
    pub fn outlier_count(&self) -> usize {
        // the epsilon absorbs products like 0.2 * 30 landing a hair under 6
        (self.outlier_fraction * self.channels as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene needs width and height >= 1"));
        }
        if self.endmembers == 0 || self.endmembers > self.pixels() {
            return Err(Error::invalid(format!(
                "endmembers must lie in 1..={}, got {}",
                self.pixels(),
                self.endmembers
            )));
        }
        if self.channels < 4 * self.endmembers {
            return Err(Error::invalid(format!(
                "need at least {} channels for {} endmembers",
                4 * self.endmembers,
                self.endmembers
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub m_true: Matrix,
    pub a_true: Matrix,
    /// Sorted indices of corrupted channels.
    pub outlier_channels: Vec<usize>,
    pub h_true: GuidanceMap,
}

/// `k` smooth spectra of length `l`, each a sum of 2-4 Gaussian bumps
/// peak-normalized to 1, with pairwise SAD of at least 0.15 rad.
pub fn gen_endmembers(l: usize, k: usize, seed: u64) -> Result<Matrix> {
    if k == 0 || l < 4 * k {
        return Err(Error::invalid(format!(
            "need k >= 1 and l >= 4k, got l = {l}, k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let lf = l as f64;
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while accepted.len() < k {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::invalid(format!(
                "could not draw {k} endmembers with pairwise SAD >= {MIN_PAIRWISE_SAD}"
            )));
        }
        let bumps = rng.gen_range(2..=4);
        let params: Vec<(f64, f64, f64)> = (0..bumps)
            .map(|_| {
                let centre = rng.gen_range(0.0..lf);
                let width = rng.gen_range(lf / 16.0..lf / 5.0);
                let amp = rng.gen_range(0.2..1.0);
                (centre, width, amp)
            })
            .collect();
        let mut spectrum: Vec<f64> = (0..l)
            .map(|i| {
                params.iter().fold(0.0, |acc, &(c, w, amp)| {
                    let d = i as f64 - c;
                    acc + amp * (-d * d / (2.0 * w * w)).exp()
                })
            })
            .collect();
        let peak = spectrum.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        spectrum.iter_mut().for_each(|v| *v = (*v / peak).min(1.0));
        let distinct = accepted
            .iter()
            .all(|prev| sad(prev, &spectrum).is_ok_and(|s| s >= MIN_PAIRWISE_SAD));
        if distinct {
            accepted.push(spectrum);
        }
    }
    Ok(Matrix::from_fn(l, k, |r, c| accepted[c][r]))
}

/// Blurred Voronoi abundances: pure cores inside each region and mixed bands
/// along region borders. Columns sum to one.
pub fn gen_abundances(spec: &SceneSpec) -> Result<Matrix> {
    spec.validate()?;
    let (w, h, k) = (spec.width, spec.height, spec.endmembers);
    let n = w * h;
    let mut rng = spec.rng(2);
    let sites: Vec<(f64, f64)> = sample(&mut rng, n, k)
        .into_iter()
        .map(|p| ((p / w) as f64, (p % w) as f64))
        .collect();

    let mut label = vec![0usize; n];
    for r in 0..h {
        for c in 0..w {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for (j, &(sr, sc)) in sites.iter().enumerate() {
                let d = (r as f64 - sr).powi(2) + (c as f64 - sc).powi(2);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            label[r * w + c] = best;
        }
    }

    let rad = spec.blur_radius as isize;
    let mut a = Matrix::zeros(k, n);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut counts = vec![0.0; k];
            let mut total = 0.0;
            for dr in -rad..=rad {
                for dc in -rad..=rad {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    counts[label[rr as usize * w + cc as usize]] += 1.0;
                    total += 1.0;
                }
            }
            let idx = r as usize * w + c as usize;
            for (j, cnt) in counts.iter().enumerate() {
                a[(j, idx)] = cnt / total;
            }
        }
    }
    Ok(a)
}

/// `X = M A + noise`, clipped at zero, with a seeded subset of channels
/// replaced according to `spec.outlier_kind`.
pub fn assemble_cube(
    m: &Matrix,
    a: &Matrix,
    spec: &SceneSpec,
) -> Result<(SpectralCube, GroundTruth)> {
    spec.validate()?;
    if m.shape() != (spec.channels, spec.endmembers)
        || a.shape() != (spec.endmembers, spec.pixels())
    {
        return Err(Error::Shape {
            op: "assemble_cube",
            left: m.shape(),
            right: a.shape(),
        });
    }
    let clean = matmul(m, a)?;
    let mut x = clean.clone();
    let mut rng = spec.rng(3);
    if spec.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in x.as_mut_slice() {
            *v = (*v + normal.sample(&mut rng)).max(0.0);
        }
    }

    let mut outliers = sample(&mut rng, spec.channels, spec.outlier_count()).into_vec();
    outliers.sort_unstable();
    for &l in &outliers {
        match spec.outlier_kind {
            OutlierKind::Blank => x.row_mut(l).iter_mut().for_each(|v| *v = 0.0),
            OutlierKind::HeavyNoise => {
                let amp = 3.0 * clean.row(l).iter().copied().fold(0.0, f64::max);
                for v in x.row_mut(l) {
                    *v = if amp > 0.0 {
                        rng.gen_range(0.0..amp)
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    let h_true = rescale_half(&GuidanceMap::raw(gini_columns(a))?);
    let cube = SpectralCube::new(spec.width, spec.height, x)?;
    Ok((
        cube,
        GroundTruth {
            m_true: m.clone(),
            a_true: a.clone(),
            outlier_channels: outliers,
            h_true,
        },
    ))
}

/// Generates endmembers, abundances and the observed cube in one go.
pub fn generate(spec: &SceneSpec) -> Result<(SpectralCube, GroundTruth)> {
    spec.validate()?;
    let m = gen_endmembers(spec.channels, spec.endmembers, spec.seed)?;
    let a = gen_abundances(spec)?;
    assemble_cube(&m, &a, spec)
}
