//! Variable-importance intervals over empirical Rashomon sets of
//! depth-bounded binary decision trees, with finite-sample and
//! unobserved-confounding corrections, plus a semi-synthetic harness that
//! measures their coverage.

// `!(a >= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod corrections;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod importance;
pub mod rashomon;
pub mod scalar;
pub mod semisynth;
pub mod tree;
pub mod universe;

pub use corrections::{choose_c, compose_threshold, epsilon_n, lambda_sup, CStrategy, ChosenC, RashomonConfig};
pub use dataset::{BinarizationSpec, BinarizedDataset, RawDataset};
pub use error::{Error, Result};
pub use importance::{mr_alpha, mr_over_set, mr_point, population_mr, MrEnvelope, MrMode};
pub use rashomon::{enumerate_rashomon, enumerate_rashomon_with, EnumerationOptions, RashomonMember, RashomonSet};
pub use scalar::Scalar;
pub use semisynth::{generate_world, GroundTruth, SemiSyntheticWorld, WorldOptions};
pub use tree::{count_model_class, DecisionTree, LossSpec, RegPenalty};
pub use universe::{interval_g_star, interval_submodels, sweep, DriftBound, UniverseFit, VIInterval};

pub type RashomonConfigF64 = RashomonConfig<f64>;
pub type RashomonSetF64 = RashomonSet<f64>;
pub type RashomonMemberF64 = RashomonMember<f64>;
pub type RegPenaltyF64 = RegPenalty<f64>;
pub type LossSpecF64 = LossSpec<f64>;
pub type VIIntervalF64 = VIInterval<f64>;
pub type DriftBoundF64 = DriftBound<f64>;
pub type MrEnvelopeF64 = MrEnvelope<f64>;
pub type GroundTruthF64 = GroundTruth<f64>;
pub type SemiSyntheticWorldF64 = SemiSyntheticWorld<f64>;
pub type UniverseFitF64 = UniverseFit<f64>;
