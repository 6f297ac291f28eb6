use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Representation loss measured on the residual `X - MA`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `1/2 ||E||_F^2`, the plain NMF loss.
    Frobenius,
    /// `1/2 ||E||_{2,1}`: each channel contributes its residual norm.
    L21,
    /// `1/2 ||E||_{2,p}` with `0 < p <= 1`.
    L2p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sparsity {
    /// No sparsity term; lambda is ignored.
    None,
    /// Every pixel uses the same exponent `fixed_p`.
    Fixed,
    /// Per-pixel exponents `1 - h_n` from the learned guidance map.
    Learned,
}

/// How rows of `A` are normalized to remove the `MD, D^-1 A` ambiguity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    L1Rows,
    L2Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    Random,
    PixelSample,
}

/// When an inner phase (fixed guidance map) ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    /// After `q` iterations, or earlier once the relative change drops below
    /// `inner_tol`.
    Cadence,
    /// Once the relative change drops below `inner_tol`, capped at `max_inner`.
    Tolerance,
}

macro_rules! tag_enum {
    ($ty:ident { $($variant:ident => $name:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($ty::$variant => $name,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name $(| $alias)* => Ok($ty::$variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"),
                        other
                    ))),
                }
            }
        }
    };
}

tag_enum!(Loss { Frobenius => "fro" | "frobenius", L21 => "l21", L2p => "l2p" });
tag_enum!(Sparsity { None => "none", Fixed => "fixed", Learned => "learned" });
tag_enum!(NormMode { L1Rows => "l1" | "l1_rows", L2Rows => "l2" | "l2_rows" });
tag_enum!(InitStrategy { Random => "random", PixelSample => "pixel" | "pixel_sample" });
tag_enum!(InnerStop { Cadence => "cadence", Tolerance => "tolerance" });

/// Every hyperparameter of a solve run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Number of endmembers.
    pub k: usize,
    /// Weight of the sparsity term.
    pub lambda: f64,
    pub loss: Loss,
    /// Exponent of the l2,p loss; only read when `loss == L2p`.
    pub p: f64,
    pub sparsity: Sparsity,
    /// Exponent used by `Sparsity::Fixed`, in `[0.5, 1]`.
    pub fixed_p: f64,
    /// Offset added to every abundance inside the sparsity term.
    pub xi: f64,
    /// Guard inside the channel-weight norm.
    pub eps_guard: f64,
    /// Guard added to both update denominators.
    pub phi: f64,
    /// Bandwidth of the spatial similarity in the initial guidance map.
    pub sigma: f64,
    /// Inner iterations between guidance-map refreshes.
    pub q: usize,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub seed: u64,
    pub norm_mode: NormMode,
    pub init: InitStrategy,
    pub inner_stop: InnerStop,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            lambda: 0.1,
            loss: Loss::L21,
            p: 0.5,
            sparsity: Sparsity::Learned,
            fixed_p: 0.5,
            xi: 1e-6,
            eps_guard: 1e-8,
            phi: 1e-8,
            sigma: 0.02,
            q: 10,
            inner_tol: 1e-6,
            outer_tol: 1e-6,
            max_inner: 300,
            max_outer: 10,
            seed: 0,
            norm_mode: NormMode::L1Rows,
            init: InitStrategy::Random,
            inner_stop: InnerStop::Cadence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be > 0, got {v}")))
            }
        };
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(0.5..=1.0).contains(&self.fixed_p) {
            return Err(Error::invalid(format!(
                "fixed_p must lie in [0.5, 1], got {}",
                self.fixed_p
            )));
        }
        positive("xi", self.xi)?;
        positive("eps_guard", self.eps_guard)?;
        positive("phi", self.phi)?;
        positive("sigma", self.sigma)?;
        if self.q == 0 || self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::invalid("q, max_inner and max_outer must be >= 1"));
        }
        if !(self.inner_tol >= 0.0 && self.outer_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be >= 0"));
        }
        Ok(())
    }

    /// Sparsity weight actually applied: zero when sparsity is disabled.
    pub fn effective_lambda(&self) -> f64 {
        match self.sparsity {
            Sparsity::None => 0.0,
            _ => self.lambda,
        }
    }

    /// Exponent of the loss family; the Frobenius loss is the `p = 2` member.
    pub fn loss_exponent(&self) -> f64 {
        match self.loss {
            Loss::Frobenius => 2.0,
            Loss::L21 => 1.0,
            Loss::L2p => self.p,
        }
    }

    /// Flat `(key, value)` listing of every field, defaults included.
    /// Sets one field by its [`to_pairs`](Self::to_pairs) key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "k" => self.k = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "loss" => self.loss = value.parse()?,
            "p" => self.p = num(key, value)?,
            "sparsity" => self.sparsity = value.parse()?,
            "fixed_p" => self.fixed_p = num(key, value)?,
            "xi" => self.xi = num(key, value)?,
            "eps_guard" => self.eps_guard = num(key, value)?,
            "phi" => self.phi = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "inner_tol" => self.inner_tol = num(key, value)?,
            "outer_tol" => self.outer_tol = num(key, value)?,
            "max_inner" => self.max_inner = num(key, value)?,
            "max_outer" => self.max_outer = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "norm_mode" => self.norm_mode = value.parse()?,
            "init" => self.init = value.parse()?,
            "inner_stop" => self.inner_stop = value.parse()?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("loss", self.loss.to_string()),
            ("p", self.p.to_string()),
            ("sparsity", self.sparsity.to_string()),
            ("fixed_p", self.fixed_p.to_string()),
            ("xi", self.xi.to_string()),
            ("eps_guard", self.eps_guard.to_string()),
            ("phi", self.phi.to_string()),
            ("sigma", self.sigma.to_string()),
            ("q", self.q.to_string()),
            ("inner_tol", self.inner_tol.to_string()),
            ("outer_tol", self.outer_tol.to_string()),
            ("max_inner", self.max_inner.to_string()),
            ("max_outer", self.max_outer.to_string()),
            ("seed", self.seed.to_string()),
            ("norm_mode", self.norm_mode.to_string()),
            ("init", self.init.to_string()),
            ("inner_stop", self.inner_stop.to_string()),
        ]
    }
}
