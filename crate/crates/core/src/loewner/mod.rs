//! Loewner evolution: elementary maps, whole-plane states, ODE flows, codecs and capacities.

pub mod capacity;
pub mod codec;
pub mod integrate;
pub mod maps;
pub mod path;
pub mod state;

pub use capacity::{dcap_quotient, hull_distance_upper, hull_radius_capacity, HullShape};
pub use codec::{curve_to_driving, driving_to_curve, state_from_driving, weld_polyline, Welding};
pub use integrate::{
    evolve_covering_radial, evolve_covering_whole_plane, evolve_radial, evolve_whole_plane, Evolved,
    IntegratorOptions, C_H,
};
pub use maps::{BaseHull, Slit};
pub use path::{lift_nearest, Anchor, CurveTrace, DrivingPath};
pub use state::{PointTracker, WholePlaneState};
