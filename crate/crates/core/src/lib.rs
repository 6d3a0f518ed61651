//! Stochastic gradient methods near a minimizer: learning-rate schedules,
//! test problems, vSGD/mSGD/NaSGD iterations, limit covariances from
//! Lyapunov equations, replica ensembles and multivariate normality tests.
//!
//! ```
//! use nalgebra::DMatrix;
//! use sgd_clt::{limit_covariance, make_quadratic, MethodSpec};
//!
//! let p = make_quadratic(DMatrix::identity(2, 2)).unwrap();
//! let sigma = DMatrix::identity(2, 2);
//! let sol = limit_covariance(&p, &sigma, &MethodSpec::Vsgd, 0.0).unwrap();
//! assert!((sol.w[(0, 0)] - 0.5).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod optimizers;
pub mod problems;
pub mod schedules;
pub mod stats;

pub use ensemble::{
    exact_linear_moments, lp_bound_diagnostic, replica_sweep, run_ensemble, sampling_error_scaling,
    time_average_experiment, Checkpoint, EnsembleConfig, EnsembleError, EnsembleTrace, Estimator, InitDist,
    ScaleRule, TimeAverageConfig, TimeAverageReport,
};
pub use lyapunov::{LyapunovError, LyapunovMethod, LyapunovSolution};
pub use optimizers::{limit_covariance, system_matrices, Method, MethodSpec, OptError, OptState};
pub use problems::{
    generate_logistic, make_counterexample, make_logistic, make_quadratic, NoiseDistribution, NoiseModel, Oracle,
    Problem, ProblemError,
};
pub use schedules::{certify_schedule, DampingSchedule, Schedule, ScheduleCertificate, ScheduleError};
pub use stats::{royston_test, shapiro_wilk, NormalityReport, StatsError};
