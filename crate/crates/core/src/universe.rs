//! Variable-importance intervals over a corrected Rashomon set.
//!
//! The interval for feature `j` is the MR envelope of the set enumerated at
//! `eps_unobs + eps_n + lambda_sup`, widened by the estimation half-width
//! `alpha` (covers every sub-model's importance) and then by the drift bound
//! `tau_j` (covers the importance of the full conditional mean function).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::{epsilon_n, RashomonConfig};
use crate::dataset::BinarizedDataset;
use crate::error::{Error, Result};
use crate::importance::{mr_alpha, mr_over_set, MrEnvelope, MrMode};
use crate::rashomon::{enumerate_rashomon_with, min_objective, EnumerationOptions, RashomonSet};
use crate::scalar::Scalar;
use crate::tree::RegPenalty;

/// Which corrections went into an interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrections {
    pub eps_n: bool,
    pub lambda_sup: bool,
    pub alpha: bool,
    pub tau: bool,
}

impl Corrections {
    pub const NONE: Corrections = Corrections {
        eps_n: false,
        lambda_sup: false,
        alpha: false,
        tau: false,
    };
    /// Set corrections only.
    pub const MODEL_ONLY: Corrections = Corrections {
        eps_n: true,
        lambda_sup: true,
        alpha: false,
        tau: false,
    };
    pub const SUBMODELS: Corrections = Corrections {
        eps_n: true,
        lambda_sup: true,
        alpha: true,
        tau: false,
    };
    pub const ALL: Corrections = Corrections {
        eps_n: true,
        lambda_sup: true,
        alpha: true,
        tau: true,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance<T> {
    pub n_train: usize,
    pub n_eval: usize,
    pub delta: T,
    pub gamma: T,
    pub eps_unobs: T,
    pub tau: T,
    pub class_size: u128,
    pub threshold: T,
    pub set_size: usize,
    pub eps_n: T,
    pub lambda_sup: T,
    pub alpha: T,
    pub mode: MrMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VIInterval<T> {
    pub feature: usize,
    pub lower: T,
    pub upper: T,
    pub applied: Corrections,
    pub provenance: Provenance<T>,
}

impl<T: Scalar> VIInterval<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn contains(&self, v: T) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn contains_interval(&self, other: &VIInterval<T>) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Known bound on how far a sub-model's importance moves between its own
/// group and the rest of the population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DriftBound<T> {
    Uniform(T),
    PerFeature(Vec<T>),
}

impl<T: Scalar> DriftBound<T> {
    pub fn get(&self, j: usize) -> Result<T> {
        let v = match self {
            DriftBound::Uniform(v) => *v,
            DriftBound::PerFeature(v) => *v.get(j).ok_or(Error::FeatureOutOfRange {
                feature: j,
                p: v.len(),
            })?,
        };
        if !(v >= T::zero()) {
            return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {v}")));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ViOptions<T> {
    pub mode: MrMode,
    pub seed: u64,
    /// Which threshold corrections to apply when enumerating the set.
    pub eps_n: bool,
    pub lambda_sup: bool,
    /// Replace the computed half-width.
    pub alpha_override: Option<T>,
    pub enumeration: EnumerationOptions,
}

impl<T: Scalar> ViOptions<T> {
    pub fn new(mode: MrMode) -> Self {
        ViOptions {
            mode,
            seed: 0,
            eps_n: true,
            lambda_sup: true,
            alpha_override: None,
            enumeration: EnumerationOptions::default(),
        }
    }
}

/// A Rashomon set and the MR envelopes of the requested features, from
/// which intervals with any subset of the corrections can be read off.
#[derive(Clone, Debug)]
pub struct UniverseFit<T> {
    pub set: RashomonSet<T>,
    pub envelopes: Vec<MrEnvelope<T>>,
    pub alpha: T,
    base: Provenance<T>,
    set_corrections: Corrections,
}

impl<T: Scalar> UniverseFit<T> {
    /// Enumerate the set on `d_train` and score it on `d_eval`.
    pub fn fit(
        d_train: &BinarizedDataset,
        d_eval: &BinarizedDataset,
        cfg: &RashomonConfig<T>,
        features: &[usize],
        opts: &ViOptions<T>,
    ) -> Result<Self> {
        let set = corrected_set(d_train, cfg, opts)?;
        Self::from_set(set, d_train.n(), d_eval, cfg, features, opts)
    }

    /// Score an already-enumerated set.
    pub fn from_set(
        set: RashomonSet<T>,
        n_train: usize,
        d_eval: &BinarizedDataset,
        cfg: &RashomonConfig<T>,
        features: &[usize],
        opts: &ViOptions<T>,
    ) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyRashomonSet {
                threshold: set.threshold.as_f64(),
            });
        }
        let eps_n = epsilon_n(n_train, cfg.delta, cfg.class_size, cfg.loss)?;
        let alpha = match opts.alpha_override {
            Some(a) => a,
            None => mr_alpha(d_eval.n(), cfg.gamma, cfg.class_size, cfg.loss)?,
        };
        let envelopes = features
            .iter()
            .map(|&j| mr_over_set(&set, d_eval, j, opts.mode, opts.seed))
            .collect::<Result<Vec<_>>>()?;
        let base = Provenance {
            n_train,
            n_eval: d_eval.n(),
            delta: cfg.delta,
            gamma: cfg.gamma,
            eps_unobs: cfg.eps_unobs,
            tau: T::zero(),
            class_size: cfg.class_size,
            threshold: set.threshold,
            set_size: set.len(),
            eps_n: if opts.eps_n { eps_n } else { T::zero() },
            lambda_sup: if opts.lambda_sup { cfg.lambda_sup() } else { T::zero() },
            alpha,
            mode: opts.mode,
            seed: opts.seed,
        };
        Ok(UniverseFit {
            set,
            envelopes,
            alpha,
            base,
            set_corrections: Corrections {
                eps_n: opts.eps_n,
                lambda_sup: opts.lambda_sup,
                alpha: false,
                tau: false,
            },
        })
    }

    pub fn envelope(&self, j: usize) -> Result<&MrEnvelope<T>> {
        self.envelopes
            .iter()
            .find(|e| e.feature == j)
            .ok_or_else(|| Error::InvalidArgument(format!("feature {j} was not scored")))
    }

    fn widened(&self, j: usize, alpha: bool, tau: Option<T>) -> Result<VIInterval<T>> {
        let env = self.envelope(j)?;
        let a = if alpha { self.alpha } else { T::zero() };
        let t = tau.unwrap_or_else(T::zero);
        let mut provenance = self.base.clone();
        provenance.tau = t;
        if !alpha {
            provenance.alpha = T::zero();
        }
        Ok(VIInterval {
            feature: j,
            lower: env.min - a - t,
            upper: env.max + a + t,
            applied: Corrections {
                alpha,
                tau: tau.is_some(),
                ..self.set_corrections
            },
            provenance,
        })
    }

    /// The bare envelope `[min MR, max MR]`.
    pub fn raw(&self, j: usize) -> Result<VIInterval<T>> {
        self.widened(j, false, None)
    }

    /// Envelope widened by `alpha`; covers the importance of every sub-model.
    pub fn submodels(&self, j: usize) -> Result<VIInterval<T>> {
        self.widened(j, true, None)
    }

    /// Envelope widened by `alpha` and `tau_j`; covers the importance of
    /// the conditional mean over observed and unobserved features.
    pub fn g_star(&self, j: usize, tau: T) -> Result<VIInterval<T>> {
        if !(tau >= T::zero()) {
            return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
        }
        self.widened(j, true, Some(tau))
    }
}

/// Threshold actually used for a set with the given corrections.
pub fn threshold_for<T: Scalar>(cfg: &RashomonConfig<T>, n_train: usize, eps_n: bool, lambda_sup: bool) -> Result<T> {
    cfg.validate()?;
    let mut t = cfg.eps_unobs;
    if eps_n {
        t = t + epsilon_n(n_train, cfg.delta, cfg.class_size, cfg.loss)?;
    }
    if lambda_sup {
        t = t + cfg.lambda_sup();
    }
    Ok(t)
}

/// The empirical Rashomon set of `d_train` at the corrected threshold.
pub fn corrected_set<T: Scalar>(d_train: &BinarizedDataset, cfg: &RashomonConfig<T>, opts: &ViOptions<T>) -> Result<RashomonSet<T>> {
    let threshold = threshold_for(cfg, d_train.n(), opts.eps_n, opts.lambda_sup)?;
    enumerate_rashomon_with(d_train, cfg.depth, cfg.penalty, threshold, opts.enumeration)
}

/// Interval containing the importance of feature `j` to every sub-model.
pub fn interval_submodels<T: Scalar>(
    d_train: &BinarizedDataset,
    d_eval: &BinarizedDataset,
    cfg: &RashomonConfig<T>,
    j: usize,
    mode: MrMode,
) -> Result<VIInterval<T>> {
    UniverseFit::fit(d_train, d_eval, cfg, &[j], &ViOptions::new(mode))?.submodels(j)
}

/// Interval containing the importance of feature `j` to the full
/// conditional mean function.
pub fn interval_g_star<T: Scalar>(
    d_train: &BinarizedDataset,
    d_eval: &BinarizedDataset,
    cfg: &RashomonConfig<T>,
    j: usize,
    tau: &DriftBound<T>,
    mode: MrMode,
) -> Result<VIInterval<T>> {
    let t = tau.get(j)?;
    UniverseFit::fit(d_train, d_eval, cfg, &[j], &ViOptions::new(mode))?.g_star(j, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub eps_threshold: T,
    pub tau: T,
    pub feature: usize,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub set_size: usize,
    pub alpha: T,
    pub eps_n: T,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable<T> {
    /// Lowest regularized objective on the training split.
    pub min_regularized: T,
    /// Lowest unregularized loss on the training split.
    pub min_unregularized: T,
    pub rows: Vec<SweepRow<T>>,
}

/// Full-correction bounds for feature `j` over a grid of assumed
/// `eps_unobs` values and drift bounds. Cells that fail (empty set, member
/// cap) are kept with the error recorded.
pub fn sweep<T: Scalar>(
    d_train: &BinarizedDataset,
    d_eval: &BinarizedDataset,
    cfg_base: &RashomonConfig<T>,
    j: usize,
    eps_grid: &[T],
    tau_grid: &[T],
    opts: &ViOptions<T>,
) -> Result<SweepTable<T>> {
    if eps_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    if tau_grid.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::InvalidArgument("tau grid values must be nonnegative".into()));
    }
    if j >= d_train.p() {
        return Err(Error::FeatureOutOfRange { feature: j, p: d_train.p() });
    }
    let mut eps: Vec<T> = eps_grid.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut taus: Vec<T> = tau_grid.to_vec();
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));

    let eps_n = epsilon_n(d_train.n(), cfg_base.delta, cfg_base.class_size, cfg_base.loss)?;
    let cells: Vec<Vec<SweepRow<T>>> = eps
        .par_iter()
        .map(|&e| {
            let cfg = RashomonConfig {
                eps_unobs: e,
                ..*cfg_base
            };
            let fit = UniverseFit::fit(d_train, d_eval, &cfg, &[j], opts);
            taus.iter()
                .map(|&t| match &fit {
                    Ok(fit) => {
                        let iv = fit.g_star(j, t).expect("feature scored");
                        SweepRow {
                            eps_threshold: e,
                            tau: t,
                            feature: j,
                            lower: Some(iv.lower),
                            upper: Some(iv.upper),
                            set_size: fit.set.len(),
                            alpha: fit.alpha,
                            eps_n,
                            error: None,
                        }
                    }
                    Err(err) => SweepRow {
                        eps_threshold: e,
                        tau: t,
                        feature: j,
                        lower: None,
                        upper: None,
                        set_size: 0,
                        alpha: T::zero(),
                        eps_n,
                        error: Some(err.to_string()),
                    },
                })
                .collect()
        })
        .collect();
    Ok(SweepTable {
        min_regularized: min_objective(d_train, cfg_base.depth, cfg_base.penalty),
        min_unregularized: min_objective(d_train, cfg_base.depth, RegPenalty::null()),
        rows: cells.into_iter().flatten().collect(),
    })
}
