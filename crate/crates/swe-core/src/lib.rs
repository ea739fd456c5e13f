//! Adaptive, well-balanced, positivity-preserving central-upwind solver for
//! the two-dimensional shallow-water equations on triangles.

pub mod amr;
pub mod bathymetry;
pub mod config;
pub mod driver;
pub mod flux;
pub mod mesh;
pub mod output;
pub mod reconstruction;
pub mod scenario;
pub mod study;
pub mod time;
pub mod wlr;

pub use amr::{AdaptStats, CellFlag, MeshHierarchy, NodeKind, Quality, Snapshot};
pub use bathymetry::{Bathymetry, BathymetryError, VertexOrigin};
pub use config::{Indicator, RunConfig, Settings};
pub use driver::{run, RunError, RunReport, Simulation};
pub use flux::{Conserved, EdgeSpeeds, SideState};
pub use mesh::{
    BoundaryTag, Cell, Edge, MeshError, Neighbor, Rect, SideTags, Triangulation, Vertex,
};
pub use reconstruction::{CellRecon, ReconParams, ReconstructedField, StateField, Wetness};
pub use scenario::{Scenario, ScenarioId};
