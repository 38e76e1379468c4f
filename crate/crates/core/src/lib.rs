//! Double-core tensor factorization with similarity-smoothed losses,
//! fitted by a linearized multi-block ADMM.
//!
//! A tensor `X` observed on `Ω` is modelled as
//! `(G + H) ×_1 U^(1) ⋯ ×_N U^(N)`, where `G` is a free core and `H` is
//! tied across subject subgroups. The data-fit term averages a loss family
//! over kernel-weighted neighbourhoods of each cell.

pub mod error;
pub mod eval;
pub mod io;
pub mod lbfgs;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod observation;
pub mod prox;
pub mod similarity;
pub mod solver;
pub mod tensor;

pub use error::{DcotError, Result};
pub use loss::{LossFamily, SmoothedLoss};
pub use model::{DcotModel, InitKind, InitStrategy, SliceGroup, SubjectPartition, TieReducer};
pub use observation::ObservationSet;
pub use prox::{Penalty, PenaltyKind};
pub use solver::{ConvergenceTrace, Solver, SolverConfig, SolverState};
pub use similarity::{DegeneratePolicy, Kernel, ModeSimilarity, SimilarityModel, SmoothingStats};
pub use tensor::{DenseMatrix, DenseTensor, Shape};
