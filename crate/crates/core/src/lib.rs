pub mod delaunay;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod planner;
pub mod predicates;
pub mod quality;
pub mod simulator;
pub mod surface;

pub use error::{Error, Result};
pub use geometry::{Intrinsics, Point3, Projection, Ray3, Vec3, ViewPose};
pub use predicates::Sign;

pub use delaunay::TetComplex;
pub use eval::EvalReport;
pub use pipeline::{run_closed_loop, LoopConfig, LoopState};
pub use planner::{PlanResult, Viewpoint};
pub use quality::QualityRecord;
pub use simulator::{ObservationBatch, SyntheticScene};
pub use surface::SurfaceMesh;
