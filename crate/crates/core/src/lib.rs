pub mod composer;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod losses;
pub mod regionalization;
pub mod risk;
pub mod robustness;
pub mod solver;

pub use composer::{ComposedModel, WeightScheme};
pub use data::Dataset;
pub use error::{Error, Result};
pub use experiments::{DataSource, ExperimentConfig, LambdaSchedule};
pub use kernels::{Kernel, KernelExpansion, KernelKind};
pub use losses::LossFunction;
pub use regionalization::{fit_regions, Regionalization, RegionalizationSpec};
pub use risk::{empirical_risk, excess_risk, Estimate, Predictor, SyntheticGenerator};
pub use robustness::{
    contaminate, empirical_maxbias, maxbias_bound, ContaminationSpec, RobustnessConfig,
};
pub use solver::{closed_form_ridge, train_local, LocalModel, SolverConfig};
