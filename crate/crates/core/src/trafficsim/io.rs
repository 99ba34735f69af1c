//! `tsclab-v1` JSON schemas for roadnets and vehicle flows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Lane, Roadnet, VehicleSpec};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "tsclab-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEntry {
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneEntry {
    pub id: String,
    pub length: f64,
    pub speed: f64,
    pub x_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementEntry {
    pub id: usize,
    pub intersection: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub intersection: String,
    pub id: usize,
    /// Movement ids.
    pub movements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadnetFile {
    pub format: String,
    pub intersections: Vec<IntersectionEntry>,
    pub lanes: Vec<LaneEntry>,
    pub movements: Vec<MovementEntry>,
    pub phases: Vec<PhaseEntry>,
}

fn check_format(found: &str, what: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::parse(
            what,
            format!("format `{found}` is not `{SCHEMA_VERSION}`"),
        ));
    }
    Ok(())
}

impl RoadnetFile {
    pub fn from_roadnet(net: &Roadnet) -> Self {
        RoadnetFile {
            format: SCHEMA_VERSION.to_string(),
            intersections: net
                .intersections
                .iter()
                .map(|i| IntersectionEntry { id: i.id.clone() })
                .collect(),
            lanes: net
                .lanes
                .iter()
                .map(|l| LaneEntry {
                    id: l.id.clone(),
                    length: l.length,
                    speed: l.speed,
                    x_max: l.x_max,
                })
                .collect(),
            movements: net
                .movements
                .iter()
                .enumerate()
                .map(|(id, m)| MovementEntry {
                    id,
                    intersection: net.intersections[m.intersection].id.clone(),
                    from: net.lanes[m.from].id.clone(),
                    to: net.lanes[m.to].id.clone(),
                })
                .collect(),
            phases: net
                .intersections
                .iter()
                .flat_map(|i| {
                    i.phases.iter().map(|p| PhaseEntry {
                        intersection: i.id.clone(),
                        id: p.id,
                        movements: p.movements.clone(),
                    })
                })
                .collect(),
        }
    }

    pub fn into_roadnet(self) -> Result<Roadnet> {
        check_format(&self.format, "roadnet file")?;
        // Movement ids in the file may be arbitrary; phases refer to them.
        let mut order: Vec<usize> = (0..self.movements.len()).collect();
        order.sort_by_key(|&i| self.movements[i].id);
        let position = |id: usize| {
            order
                .iter()
                .position(|&i| self.movements[i].id == id)
                .ok_or_else(|| Error::invalid(format!("phase references unknown movement {id}")))
        };
        let phases = self
            .phases
            .iter()
            .map(|p| {
                let ms = p.movements.iter().map(|&m| position(m)).collect::<Result<_>>()?;
                Ok((p.intersection.clone(), p.id, ms))
            })
            .collect::<Result<Vec<_>>>()?;
        let movements = order
            .iter()
            .map(|&i| {
                let m = &self.movements[i];
                (m.intersection.clone(), m.from.clone(), m.to.clone())
            })
            .collect();
        let lanes = self
            .lanes
            .into_iter()
            .map(|l| Lane {
                id: l.id,
                length: l.length,
                speed: l.speed,
                x_max: l.x_max,
            })
            .collect();
        Roadnet::new(
            lanes,
            self.intersections.into_iter().map(|i| i.id).collect(),
            movements,
            phases,
        )
    }

    pub fn load(path: &Path) -> Result<Roadnet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RoadnetFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        file.into_roadnet()
    }

    pub fn save(net: &Roadnet, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&Self::from_roadnet(net)).expect("serializable");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowFile {
    pub format: String,
    pub vehicles: Vec<VehicleSpec>,
}

impl FlowFile {
    pub fn new(vehicles: Vec<VehicleSpec>) -> Self {
        FlowFile {
            format: SCHEMA_VERSION.to_string(),
            vehicles,
        }
    }

    pub fn load(path: &Path) -> Result<Vec<VehicleSpec>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: FlowFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        check_format(&file.format, "flow file")?;
        Ok(file.vehicles)
    }

    pub fn save(vehicles: &[VehicleSpec], path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&Self::new(vehicles.to_vec())).expect("serializable");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
