//! Traffic flows as route × time-bin count matrices.

mod augment;
mod io;
mod matrix;
mod wasserstein;

pub use augment::{augment, fit_route_stats, swap_routes, synthesize_row, RouteStats, Synthetic};
pub use io::{FLOWSET_MANIFEST, FLOW_HEADER};
pub use matrix::{flow_matrix, matrix_to_vehicles, normalize, FlowMatrix, FlowSet, Provenance};
pub use wasserstein::{assignment, exact_wasserstein, Assignment};
