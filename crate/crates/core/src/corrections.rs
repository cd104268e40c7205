//! Finite-sample and regularization corrections to the Rashomon threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::BinarizedDataset;
use crate::error::{Error, Result};
use crate::rashomon::estimate_set_size;
use crate::scalar::Scalar;
use crate::tree::{count_model_class, LossSpec, RegPenalty};

/// Margin added to `eps_unobs` when estimating the set size on a held-out split.
pub const DEFAULT_EPS_PRIME_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CStrategy {
    /// Size of an empirical Rashomon set on a held-out split.
    Estimated,
    /// Count of the whole model class.
    ModelClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RashomonConfig<T> {
    /// Budget for missing a sub-model from the set.
    pub delta: T,
    /// Budget for importance estimation error.
    pub gamma: T,
    /// Assumed bound on every sub-model's loss over the observed distribution.
    pub eps_unobs: T,
    pub penalty: RegPenalty<T>,
    pub depth: usize,
    /// Class-size bound `C`.
    pub class_size: u128,
    pub loss: LossSpec<T>,
}

impl<T: Scalar> RashomonConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: T| {
            if v > T::zero() && v < T::one() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("delta", self.delta)?;
        unit("gamma", self.gamma)?;
        if !(self.eps_unobs >= self.loss.min && self.eps_unobs <= self.loss.max) {
            return Err(Error::InvalidArgument(format!(
                "eps_unobs {} outside the loss range [{}, {}]",
                self.eps_unobs, self.loss.min, self.loss.max
            )));
        }
        if !(self.penalty.per_leaf >= T::zero()) {
            return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
        }
        if self.class_size < 1 {
            return Err(Error::InvalidArgument("class size C must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lambda_sup(&self) -> T {
        lambda_sup(self.penalty.per_leaf, self.depth)
    }
}

fn class_size_as<T: Scalar>(c: u128) -> T {
    T::from_f64_lossy(c as f64)
}

/// `sqrt((l_max - l_min)^2 ln(C / delta) / (2n))`.
pub fn epsilon_n<T: Scalar>(n: usize, delta: T, class_size: u128, loss: LossSpec<T>) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let c_over_delta = class_size_as::<T>(class_size) / delta;
    if !(c_over_delta >= T::one()) {
        return Err(Error::BoundUndefined {
            ratio: c_over_delta.as_f64(),
        });
    }
    let range = loss.range();
    Ok((range * range * c_over_delta.ln() / T::from_count(2 * n as u64)).sqrt())
}

/// Largest penalty any depth-`depth` tree can pay: `lambda * 2^depth`.
pub fn lambda_sup<T: Scalar>(lambda: T, depth: usize) -> T {
    lambda * T::from_count(1u64 << depth)
}

/// `eps_unobs + eps_n + lambda_sup`.
pub fn compose_threshold<T: Scalar>(cfg: &RashomonConfig<T>, n: usize) -> Result<T> {
    cfg.validate()?;
    Ok(cfg.eps_unobs + epsilon_n(n, cfg.delta, cfg.class_size, cfg.loss)? + cfg.lambda_sup())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChosenC {
    pub value: u128,
    pub strategy: CStrategy,
    /// The estimate came back empty and the model-class count was used.
    pub fell_back: bool,
    /// The model-class count saturated.
    pub saturated: bool,
}

/// Pick the class-size bound. `estimation` is the held-out split used for
/// the estimate; `eps_prime` must exceed `eps_unobs`.
pub fn choose_c<T: Scalar>(
    strategy: CStrategy,
    estimation: &BinarizedDataset,
    depth: usize,
    penalty: RegPenalty<T>,
    eps_unobs: T,
    eps_prime: T,
) -> Result<ChosenC> {
    let class = count_model_class(estimation.p(), depth);
    let model_class = ChosenC {
        value: class.value,
        strategy: CStrategy::ModelClass,
        fell_back: false,
        saturated: class.saturated,
    };
    match strategy {
        CStrategy::ModelClass => Ok(model_class),
        CStrategy::Estimated => {
            if !(eps_prime > eps_unobs) {
                return Err(Error::InvalidArgument(format!(
                    "eps_prime {eps_prime} must exceed eps_unobs {eps_unobs}"
                )));
            }
            let lsup = lambda_sup(penalty.per_leaf, depth);
            let size = estimate_set_size(estimation, depth, penalty, eps_prime, lsup)?;
            if size == 0 {
                log::warn!(
                    "estimated Rashomon set is empty at eps' = {eps_prime}; using the model-class count"
                );
                return Ok(ChosenC {
                    fell_back: true,
                    ..model_class
                });
            }
            Ok(ChosenC {
                value: size as u128,
                strategy: CStrategy::Estimated,
                fell_back: false,
                saturated: false,
            })
        }
    }
}
