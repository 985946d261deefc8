pub mod geometry;
pub mod net;
pub mod defenses;
pub mod attacks;
pub mod experiment;

pub use attacks::{run_attack, AttackConfig, AttackError, AttackInput, AttackKind, AttackResult};
pub use defenses::{DefenseConfig, DefenseError, DefenseKind};
pub use experiment::{Dataset, ExperimentConfig, ExperimentError, ResultsTable, ShapeClass};
pub use geometry::{GeometryError, Point3, PointCloud, SurfaceIndex, TriangleMesh};
pub use net::{Architecture, ClassifierParams, NetError, TrainConfig};
