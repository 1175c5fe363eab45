//! Surface extraction from the tetrahedralization: visibility energy,
//! dynamic min-cut and outlier filtering.

pub mod energy;
pub mod maxflow;
pub mod mesh;

pub use energy::{
    ray_energy, retire_ray, smoothness_weight, update_energy, CutResult, CutSolver, EnergyGraph,
    EnergyParams, NewRay, RayId, RayStatus, RayStore, SightRay, UpdateReport,
};
pub use mesh::{extract_surface, filter_outliers, FilterReport, SurfaceMesh};
