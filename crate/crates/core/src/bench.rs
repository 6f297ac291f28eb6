//! Per-iteration timing of the solver, for comparing losses and sizes.

use std::time::Instant;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::solver::{InnerStop, Loss, SolverConfig, Unmixer};
use crate::synth::{generate, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub pixels: usize,
    pub channels: usize,
    pub endmembers: usize,
    pub loss: Loss,
    /// Best (smallest) mean seconds per inner iteration over the repeats.
    pub secs_per_iter: f64,
}

/// Mean wall time of one inner iteration, measured between the first and
/// last observer callbacks so setup (initialization, guidance map) is
/// excluded. The best of `repeats` runs is returned.
pub fn time_per_iteration(
    cube: &SpectralCube,
    config: &SolverConfig,
    iterations: usize,
    repeats: usize,
) -> Result<f64> {
    if iterations < 2 || repeats == 0 {
        return Err(Error::invalid(
            "timing needs >= 2 iterations and >= 1 repeat",
        ));
    }
    let mut cfg = config.clone();
    cfg.max_outer = 1;
    cfg.inner_stop = InnerStop::Cadence;
    cfg.q = iterations;
    cfg.inner_tol = 0.0;
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let mut first: Option<Instant> = None;
        let mut last = None;
        let mut count = 0usize;
        Unmixer::new(cube, cfg.clone())
            .observe(|_| {
                let now = Instant::now();
                first.get_or_insert(now);
                last = Some(now);
                count += 1;
            })
            .run()?;
        if let (Some(a), Some(b)) = (first, last) {
            if count > 1 {
                best = best.min((b - a).as_secs_f64() / (count - 1) as f64);
            }
        }
    }
    Ok(best)
}

/// Times `fro` and `l21` on one square synthetic scene per side length.
/// Rows come out ordered by size, then `fro` before `l21`.
pub fn loss_grid(
    sides: &[usize],
    channels: usize,
    endmembers: usize,
    iterations: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &side in sides {
        let mut spec = SceneSpec::new(side, side, channels, endmembers);
        spec.seed = seed;
        spec.noise_sigma = 0.01;
        let (cube, _) = generate(&spec)?;
        for loss in [Loss::Frobenius, Loss::L21] {
            let mut cfg = SolverConfig::new(endmembers);
            cfg.loss = loss;
            cfg.seed = seed;
            rows.push(BenchRow {
                pixels: cube.pixels(),
                channels,
                endmembers,
                loss,
                secs_per_iter: time_per_iteration(&cube, &cfg, iterations, repeats)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_order() {
        let rows = loss_grid(&[4, 6], 8, 2, 3, 1, 1).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.pixels, r.loss)).collect();
        assert_eq!(
            keys,
            vec![
                (16, Loss::Frobenius),
                (16, Loss::L21),
                (36, Loss::Frobenius),
                (36, Loss::L21)
            ]
        );
        assert!(rows
            .iter()
            .all(|r| r.secs_per_iter > 0.0 && r.secs_per_iter.is_finite()));
    }

    #[test]
    fn rejects_degenerate_requests() {
        let (cube, _) = generate(&SceneSpec::new(3, 3, 8, 2)).unwrap();
        assert!(time_per_iteration(&cube, &SolverConfig::new(2), 1, 1).is_err());
    }
}
