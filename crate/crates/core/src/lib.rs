//! Riemannian stochastic quasi-Newton with variance reduction (R-SQN-VR) and its baselines
//! on the SPD and Grassmann manifolds.
//!
//! The numeric core is generic over the scalar type ([`Real`]: `f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the experiments use.

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod optim;
pub mod problems;
pub mod scalar;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use manifold::{
    Euclidean, GeometryFlavor, GrassmannManifold, Manifold, ManifoldKind, Point, RetractionKind,
    SpdManifold, Tangent, TransportKind,
};
pub use optim::{
    Control, EpochRecord, LineSearchParams, OptimizerConfig, OutputOption, QnMemory, RunOutput,
    SnapshotOption, StepSchedule, Termination,
};
pub use problems::{FiniteSumProblem, KarcherProblem, MatCompProblem, QuadraticProblem};
pub use scalar::Real;

pub type Matrix = DenseMatrix<f64>;
pub type Point64 = Point<f64>;
pub type Tangent64 = Tangent<f64>;
pub type Karcher = KarcherProblem<f64>;
pub type MatComp = MatCompProblem<f64>;
pub type Quadratic = QuadraticProblem<f64>;
pub type Config = OptimizerConfig<f64>;
pub type Record = EpochRecord<f64>;
