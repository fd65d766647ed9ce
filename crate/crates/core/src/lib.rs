//! Optimal context-aware metric-differential-privacy mechanisms for discrete
//! location domains on road networks.

pub mod audit;
pub mod blanket;
pub mod error;
pub mod geo;
pub mod io;
pub mod lp;
pub mod mechanisms;
pub mod priors;
pub mod roadnet;
pub mod stats;
pub mod sweep;
pub mod synth;
pub mod utility;

pub use error::{Error, Result};
pub use geo::{AugmentedSecret, ContextWeights, DistanceMatrix, GeoPoint, LocId, Location, LocationDomain};
pub use lp::{LinearProgram, LpSolution, LpStatus};
pub use mechanisms::{MatrixMeta, PerturbationMatrix};
pub use priors::{PriorModel, TrajectoryLog};
pub use roadnet::{RoadGraph, ShortestPathTree};
pub use sweep::{Experiment, Mechanism, SweepConfig};
pub use utility::CostTensor;
