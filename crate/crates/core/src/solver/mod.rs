//! Robust NMF with a learned per-pixel sparsity constraint.
//!
//! The solver alternates multiplicative updates of the abundances `A` and the
//! endmembers `M` under a fixed guidance map, rescales the pair after every
//! step, and (for learned sparsity) refreshes the guidance map from the Gini
//! index of the current abundances between inner phases.

mod config;
mod init;
mod update;

pub use config::{InitStrategy, InnerStop, Loss, NormMode, SolverConfig, Sparsity};
pub use init::init_factors;
pub use update::{channel_weights, objective, renormalize, update_a, update_m, Objective};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::sparsity::{
    build_h_matrix, guidance_from_abundance, initial_guidance, rescale_half, GuidanceMap,
};
use update::{
    add_penalty_gradient, objective_from_residual, ratio_update, residual, weights_from_residual,
};

/// One inner iteration (or, with `inner == 0`, the start of a phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub outer: usize,
    pub inner: usize,
    pub objective: f64,
    pub loss: f64,
    pub penalty: f64,
    /// Largest entry-wise change of `M` or `A` during the iteration.
    pub max_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    /// Records grouped by outer index; each group is one inner phase with a
    /// fixed guidance map, starting with its `inner == 0` record.
    pub fn phases(&self) -> Vec<&[TraceRecord]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].outer != self.records[start].outer {
                out.push(&self.records[start..i]);
                start = i;
            }
        }
        out
    }

    /// Largest relative increase `(o[t+1] - o[t]) / |o[t]|` inside any phase.
    /// Non-positive when every phase is non-increasing.
    pub fn max_relative_uptick(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for phase in self.phases() {
            for w in phase.windows(2) {
                let scale = w[0].objective.abs().max(f64::MIN_POSITIVE);
                worst = worst.max((w[1].objective - w[0].objective) / scale);
            }
        }
        worst
    }

    /// Number of inner iterations actually run (phase-start records excluded).
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.inner > 0).count()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct UnmixResult {
    /// Endmembers, `L x K`.
    pub m: Matrix,
    /// Abundances, `K x N`, rows normalized per `config.norm_mode`.
    pub a: Matrix,
    /// Guidance map in effect at the end of the run.
    pub h: GuidanceMap,
    pub trace: SolveTrace,
    pub config: SolverConfig,
}

impl UnmixResult {
    /// Abundances rescaled so every pixel sums to one. Reporting only; the
    /// optimized objective carries no sum-to-one constraint.
    pub fn abundances_sum_to_one(&self) -> Matrix {
        column_sum_to_one(&self.a)
    }
}

/// Scales each column to unit sum; all-zero columns stay zero.
pub fn column_sum_to_one(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for n in 0..a.cols() {
        let s = (0..a.rows()).fold(0.0, |acc, k| acc + a[(k, n)]);
        if s > 0.0 {
            for k in 0..a.rows() {
                out[(k, n)] /= s;
            }
        }
    }
    out
}

/// Which algebraic form of the update rules to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateForm {
    /// Updates with the diagonal weight matrix `U` applied directly.
    Direct,
    /// Equivalent updates on `U^(1/2) M` and `U^(1/2) X`.
    Hat,
}

/// Snapshot handed to an observer after every inner iteration.
pub struct Iterate<'a> {
    pub outer: usize,
    pub inner: usize,
    pub m: &'a Matrix,
    pub a: &'a Matrix,
}

type Observer<'o> = Box<dyn FnMut(&Iterate<'_>) + 'o>;

/// Configurable solve run. [`solve`] and [`solve_hat_form`] cover the
/// common cases.
pub struct Unmixer<'c, 'o> {
    cube: &'c SpectralCube,
    config: SolverConfig,
    form: UpdateForm,
    start: Option<(Matrix, Matrix)>,
    observer: Option<Observer<'o>>,
}

impl<'c, 'o> Unmixer<'c, 'o> {
    pub fn new(cube: &'c SpectralCube, config: SolverConfig) -> Self {
        Self {
            cube,
            config,
            form: UpdateForm::Direct,
            start: None,
            observer: None,
        }
    }

    pub fn form(mut self, form: UpdateForm) -> Self {
        self.form = form;
        self
    }

    /// Starts from the given factors instead of seeded initialization.
    pub fn initial_factors(mut self, m: Matrix, a: Matrix) -> Self {
        self.start = Some((m, a));
        self
    }

    pub fn observe(mut self, f: impl FnMut(&Iterate<'_>) + 'o) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    pub fn run(mut self) -> Result<UnmixResult> {
        let cfg = self.config.clone();
        cfg.validate()?;
        let x = self.cube.data();
        let (l, n) = x.shape();
        if cfg.init == InitStrategy::PixelSample && cfg.k > n {
            return Err(Error::invalid(format!(
                "k = {} exceeds pixel count {n}",
                cfg.k
            )));
        }

        let (mut m, mut a) = match self.start.take() {
            Some((m, a)) => {
                if m.shape() != (l, cfg.k) || a.shape() != (cfg.k, n) {
                    return Err(Error::Shape {
                        op: "initial_factors",
                        left: m.shape(),
                        right: a.shape(),
                    });
                }
                (m, a)
            }
            None => init_factors(x, cfg.k, cfg.seed, cfg.init)?,
        };

        let mut h = match cfg.sparsity {
            Sparsity::Learned => rescale_half(&initial_guidance(self.cube, cfg.sigma)?),
            Sparsity::Fixed => GuidanceMap::constant(n, 1.0 - cfg.fixed_p)?,
            Sparsity::None => GuidanceMap::constant(n, 0.0)?,
        };
        let mut h_mat = build_h_matrix(&h, cfg.k);
        let lambda = cfg.effective_lambda();
        let p = cfg.loss_exponent();

        // the residual of the latest iterate is kept for the next weights
        let eval = |m: &Matrix, a: &Matrix, h_mat: &Matrix| -> Result<(Objective, Matrix)> {
            let e = residual(x, m, a)?;
            let o = objective_from_residual(&e, a, lambda, h_mat, cfg.xi, cfg.loss, cfg.p)?;
            Ok((o, e))
        };

        let mut trace = SolveTrace::default();
        let (mut current, mut e) = eval(&m, &a, &h_mat)?;
        check_finite(&current, 0, 0)?;
        let mut prev_phase_end: Option<f64> = None;

        for outer in 0..cfg.max_outer {
            trace.records.push(record(outer, 0, &current, 0.0));
            let limit = match cfg.inner_stop {
                InnerStop::Cadence => cfg.q,
                InnerStop::Tolerance => cfg.max_inner,
            };
            for inner in 1..=limit {
                let u = if cfg.loss == Loss::Frobenius {
                    vec![1.0; l].into()
                } else {
                    weights_from_residual(&e, cfg.eps_guard, p)
                };
                let (m_new, a_new) = match self.form {
                    UpdateForm::Direct => {
                        let a_new = update_a(&a, &m, x, &u, lambda, &h_mat, cfg.xi, cfg.phi)?;
                        let m_new = update_m(&m, &a_new, x, &u, cfg.phi)?;
                        (m_new, a_new)
                    }
                    UpdateForm::Hat => hat_step(&m, &a, x, &u, lambda, &h_mat, &cfg)?,
                };
                let (m_new, a_new) = renormalize(&m_new, &a_new, cfg.norm_mode);
                if !m_new.is_finite() || !a_new.is_finite() {
                    return Err(Error::NonFinite {
                        outer,
                        inner,
                        term: "factors",
                    });
                }
                let change = m_new.max_abs_diff(&m).max(a_new.max_abs_diff(&a));
                m = m_new;
                a = a_new;
                let (next, e_next) = eval(&m, &a, &h_mat)?;
                e = e_next;
                check_finite(&next, outer, inner)?;
                trace.records.push(record(outer, inner, &next, change));
                if let Some(obs) = self.observer.as_mut() {
                    obs(&Iterate {
                        outer,
                        inner,
                        m: &m,
                        a: &a,
                    });
                }
                let rel = relative_change(current.total, next.total);
                current = next;
                if rel < cfg.inner_tol {
                    break;
                }
            }

            if cfg.sparsity == Sparsity::Learned {
                h = guidance_from_abundance(&a);
                h_mat = build_h_matrix(&h, cfg.k);
                current = eval(&m, &a, &h_mat)?.0;
                check_finite(&current, outer, 0)?;
            }
            if let Some(prev) = prev_phase_end {
                if relative_change(prev, current.total) < cfg.outer_tol {
                    break;
                }
            }
            prev_phase_end = Some(current.total);
        }

        Ok(UnmixResult {
            m,
            a,
            h,
            trace,
            config: cfg,
        })
    }
}

/// Updates through `M^ = U^(1/2) M` and `X^ = U^(1/2) X`.
fn hat_step(
    m: &Matrix,
    a: &Matrix,
    x: &Matrix,
    u: &[f64],
    lambda: f64,
    h_mat: &Matrix,
    cfg: &SolverConfig,
) -> Result<(Matrix, Matrix)> {
    let root: Vec<f64> = u.iter().map(|v| v.sqrt()).collect();
    let m_hat = m.scale_rows(&root);
    let x_hat = x.scale_rows(&root);

    let num_a = matmul_tn(&m_hat, &x_hat)?;
    let mut den_a = matmul(&matmul_tn(&m_hat, &m_hat)?, a)?;
    add_penalty_gradient(&mut den_a, a, lambda, h_mat, cfg.xi);
    let a_new = ratio_update(a, &num_a, &den_a, |_| cfg.phi);

    // phi / sqrt(U_ll) is the direct-form guard carried into hat coordinates
    let num_m = matmul_nt(&x_hat, &a_new)?;
    let den_m = matmul(&m_hat, &matmul_nt(&a_new, &a_new)?)?;
    let m_hat_new = ratio_update(&m_hat, &num_m, &den_m, |l| cfg.phi / root[l]);
    let inv: Vec<f64> = root.iter().map(|r| 1.0 / r).collect();
    Ok((m_hat_new.scale_rows(&inv), a_new))
}

fn record(outer: usize, inner: usize, o: &Objective, max_change: f64) -> TraceRecord {
    TraceRecord {
        outer,
        inner,
        objective: o.total,
        loss: o.loss,
        penalty: o.penalty,
        max_change,
    }
}

fn check_finite(o: &Objective, outer: usize, inner: usize) -> Result<()> {
    if !o.loss.is_finite() {
        return Err(Error::NonFinite {
            outer,
            inner,
            term: "loss",
        });
    }
    if !o.penalty.is_finite() {
        return Err(Error::NonFinite {
            outer,
            inner,
            term: "penalty",
        });
    }
    Ok(())
}

fn relative_change(prev: f64, next: f64) -> f64 {
    let scale = prev.abs().max(f64::MIN_POSITIVE);
    (prev - next).abs() / scale
}

/// Runs the solver with the direct update rules.
pub fn solve(cube: &SpectralCube, config: &SolverConfig) -> Result<UnmixResult> {
    Unmixer::new(cube, config.clone()).run()
}

/// Runs the solver through the `U^(1/2)`-scaled form of the update rules.
/// Produces the same iterates as [`solve`] up to rounding.
pub fn solve_hat_form(cube: &SpectralCube, config: &SolverConfig) -> Result<UnmixResult> {
    Unmixer::new(cube, config.clone())
        .form(UpdateForm::Hat)
        .run()
}
