//! Quantum state diffusion in a moving excited-coherent-state basis.
//!
//! Layers, bottom up: truncated Fock states and operators ([`fock`],
//! [`operator`], [`compiled`]), the stochastic integrator ([`integrator`],
//! [`noise`]), the moving basis ([`moving`]), a dense master-equation
//! reference ([`oracle`]), the physical models ([`models`]), configuration
//! driven runs ([`runner`]) and the acceptance checks ([`validation`]).

pub mod compiled;
pub mod error;
pub mod fock;
pub mod integrator;
pub mod models;
pub mod moving;
pub mod noise;
pub mod operator;
pub mod oracle;
pub mod runner;
pub mod validation;

pub use compiled::CompiledOperator;
pub use error::{Error, Result};
pub use fock::{FockState, ModeSpec, ObservableValue, Quadrature};
pub use integrator::{CompiledModel, IntegratorConfig, StepDiagnostics};
pub use models::{DuffingParams, ModelConfig, OscillatorParams, ShgParams};
pub use moving::{mqsd_step, mqsd_step_with_noise, MovingFrame, MqsdState, TruncationPolicy};
pub use noise::{sample_noise, NoiseIncrement, TrajectoryRng};
pub use operator::{OpenSystemModel, OperatorExpr, TimeCoefficient};
pub use oracle::DensityMatrix;
pub use runner::{BasisConfig, EnsembleSummary, InitialState, Observable, PreparedRun, RunConfig, TrajectoryRecord};
pub use validation::CriterionReport;
