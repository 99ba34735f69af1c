//! Deterministic discrete-time microsimulator.
//!
//! Vehicles queue FIFO on lanes. Once a vehicle has spent `ceil(length/speed)`
//! seconds on its lane it may cross into the next lane of its route when the
//! movement is green and the target lane has room. One tick is one second.

mod io;
mod metrics;
mod roadnet;
mod world;

pub use io::{FlowFile, RoadnetFile, SCHEMA_VERSION};
pub use metrics::{average_travel_time, free_flow_time, TravelTime};
pub use roadnet::{
    build_grid, grid_route, single_intersection_routes, Approach, Intersection, Lane, LaneParams, Movement, Phase,
    Roadnet, Turn, NUM_PHASES,
};
pub use world::{
    Observation, PressureMode, PressureReport, SimOptions, SimWorld, TravelLog, TravelRecord, VehicleSpec,
};

#[cfg(test)]
mod tests;
