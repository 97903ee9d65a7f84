//! Cubical persistent homology for multi-class segmentations, with
//! Betti-prior topological losses and test-time repair by Adam.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod complex;
pub mod error;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod npy;
pub mod optim;
pub mod persistence;
pub mod phantom;
pub mod prior;
pub mod scalar;

pub use complex::{Cell, Construction, FilteredComplex};
pub use error::{Error, Result};
pub use grid::{BitField, Connectivity, GridShape, LabelMap, ProbSegmentation, ScalarField};
pub use loss::{combined_loss, mse_loss, topo_loss, GradField, LossBreakdown};
pub use metrics::{betti_error, evaluate, TopoReport};
pub use optim::{post_process, OptimizerConfig, RunTrace};
pub use persistence::{barcode_of_field, compute_barcode, Bar, Barcode};
pub use prior::BettiPrior;
pub use scalar::Real;

pub type ScalarField64 = ScalarField<f64>;
pub type ScalarField32 = ScalarField<f32>;
pub type ProbSegmentation64 = ProbSegmentation<f64>;
pub type ProbSegmentation32 = ProbSegmentation<f32>;
pub type Barcode64 = Barcode<f64>;
pub type Barcode32 = Barcode<f32>;
pub type GradField64 = GradField<f64>;
pub type GradField32 = GradField<f32>;
