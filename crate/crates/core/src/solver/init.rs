use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::solver::config::InitStrategy;

/// Draws uniformly from `(0, 1]`.
fn open_unit(rng: &mut impl Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Seeded starting factors.
///
/// `Random` draws `M_lk = u * mean_n(X_ln)`; `PixelSample` copies `k` distinct
/// pixels of `X`. Either way `A` is uniform in `(0, 1]` with each row scaled
/// to unit l1 norm.
pub fn init_factors(
    x: &Matrix,
    k: usize,
    seed: u64,
    strategy: InitStrategy,
) -> Result<(Matrix, Matrix)> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let (l, n) = x.shape();
    if n == 0 {
        return Err(Error::invalid(
            "cannot initialise factors for an empty cube",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = match strategy {
        InitStrategy::Random => {
            let means: Vec<f64> = (0..l)
                .map(|r| x.row(r).iter().fold(0.0, |acc, v| acc + v) / n as f64)
                .collect();
            Matrix::from_fn(l, k, |r, _| open_unit(&mut rng) * means[r])
        }
        InitStrategy::PixelSample => {
            if k > n {
                return Err(Error::invalid(format!(
                    "cannot sample {k} distinct pixels from {n}"
                )));
            }
            let picks = sample(&mut rng, n, k).into_vec();
            Matrix::from_fn(l, k, |r, c| x[(r, picks[c])])
        }
    };
    let mut a = Matrix::from_fn(k, n, |_, _| open_unit(&mut rng));
    for r in 0..k {
        let s = a.row(r).iter().fold(0.0, |acc, v| acc + v);
        a.row_mut(r).iter_mut().for_each(|v| *v /= s);
    }
    Ok((m, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Matrix {
        Matrix::from_fn(6, 12, |r, c| 0.1 + ((r * 7 + c * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn deterministic_per_seed() {
        let x = data();
        for s in [InitStrategy::Random, InitStrategy::PixelSample] {
            assert_eq!(
                init_factors(&x, 3, 9, s).unwrap(),
                init_factors(&x, 3, 9, s).unwrap()
            );
        }
        assert_ne!(
            init_factors(&x, 3, 9, InitStrategy::Random).unwrap(),
            init_factors(&x, 3, 10, InitStrategy::Random).unwrap()
        );
    }

    #[test]
    fn random_is_strictly_positive() {
        let (m, a) = init_factors(&data(), 4, 1, InitStrategy::Random).unwrap();
        assert!(m.as_slice().iter().all(|&v| v > 0.0));
        assert!(a.as_slice().iter().all(|&v| v > 0.0));
        for r in 0..4 {
            let s: f64 = a.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_sample_copies_columns() {
        let x = data();
        let (m, _) = init_factors(&x, 5, 3, InitStrategy::PixelSample).unwrap();
        let mut used = Vec::new();
        for k in 0..5 {
            let col = m.col(k);
            let hit = (0..x.cols())
                .find(|&n| x.col(n) == col)
                .expect("column from X");
            used.push(hit);
        }
        used.dedup();
        assert_eq!(used.len(), 5);
        assert!(init_factors(&x, 13, 3, InitStrategy::PixelSample).is_err());
    }
}
