//! Deterministic radio-sensing simulator.
//!
//! A scenario (3D surfaces, target objects, transceiver nodes, radio
//! parameters) is traced with the image method to obtain specular multipath
//! components per node pair. Those become channel impulse responses, sampled
//! with a bandlimited sinc reconstruction, differenced against the empty
//! reference scene and mapped onto a grid as power-weighted ellipses. The
//! fused heatmap is scored per parking lot for occupancy detection.
//!
//! ```text
//! scene -> raytrace -> channel -> sensing -> report
//! ```

#![forbid(unsafe_code)]

pub mod channel;
pub mod geom;
pub mod output;
pub mod pipeline;
pub mod raytrace;
pub mod runner;
pub mod scene;
pub mod sensing;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Scenarios shipped with the crate.
pub mod scenarios {
    use crate::scene::{parse_scenario, Scenario};

    /// 36 m x 18 m parking garage, 21 transceivers on a 7 x 3 lattice at 1 m
    /// height, two parked vehicles. The layout is illustrative.
    pub const PARKING_GARAGE: &str = include_str!("../../../scenarios/parking_garage.json");

    /// Small open area, six nodes around a single vehicle.
    pub const SINGLE_VEHICLE: &str = include_str!("../../../scenarios/single_vehicle.json");

    pub fn parking_garage() -> Scenario {
        parse_scenario(PARKING_GARAGE).expect("bundled scenario is valid")
    }

    pub fn single_vehicle() -> Scenario {
        parse_scenario(SINGLE_VEHICLE).expect("bundled scenario is valid")
    }
}
