use super::{Roadnet, TravelLog, VehicleSpec};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TravelTime {
    pub seconds: f64,
    /// Set when the flow had no vehicles; `seconds` is then 0.
    pub empty_flow: bool,
}

/// Mean of `finish - depart`; vehicles still travelling at `horizon` count `horizon - depart`.
pub fn average_travel_time(log: &TravelLog, horizon: u64) -> TravelTime {
    if log.records.is_empty() {
        log::warn!("average travel time of an empty flow is reported as 0");
        return TravelTime {
            seconds: 0.0,
            empty_flow: true,
        };
    }
    let total: f64 = log
        .records
        .iter()
        .map(|r| {
            let end = r.finish.unwrap_or(horizon);
            end.saturating_sub(r.depart) as f64
        })
        .sum();
    TravelTime {
        seconds: total / log.records.len() as f64,
        empty_flow: false,
    }
}

/// Mean unobstructed travel time: per vehicle the sum of `ceil(length/speed)` over its route.
pub fn free_flow_time(net: &Roadnet, flow: &[VehicleSpec]) -> Result<f64> {
    if flow.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0u64;
    for v in flow {
        total += net.route_dwell(&net.resolve_route(&v.route)?);
    }
    Ok(total as f64 / flow.len() as f64)
}
