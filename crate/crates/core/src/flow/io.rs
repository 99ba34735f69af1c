//! `tscflow-v1` text files and flow-set directories.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowMatrix, FlowSet, Provenance};
use crate::{Error, Result};

pub const FLOW_HEADER: &str = "tscflow-v1";
pub const FLOWSET_MANIFEST: &str = "manifest.json";

impl FlowMatrix {
    /// ```text
    /// tscflow-v1
    /// routes <R>
    /// route <lane> <lane> ...      (R lines)
    /// bins <T>
    /// interval <seconds>
    /// <T counts>                   (R lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FLOW_HEADER}").unwrap();
        writeln!(s, "routes {}", self.num_routes()).unwrap();
        for r in self.routes() {
            writeln!(s, "route {}", r.join(" ")).unwrap();
        }
        writeln!(s, "bins {}", self.bins()).unwrap();
        writeln!(s, "interval {}", self.interval()).unwrap();
        for row in self.counts() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "flow file";
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(FLOW_HEADER) {
            return Err(Error::parse(ctx, format!("missing `{FLOW_HEADER}` header")));
        }
        fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<u64> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::parse("flow file", format!("expected `{name} <n>`")))
        }
        let n_routes = field(&mut lines, "routes")? as usize;
        let mut routes = Vec::with_capacity(n_routes);
        for _ in 0..n_routes {
            let line = lines.next().ok_or_else(|| Error::parse(ctx, "missing route line"))?;
            let lanes = line
                .strip_prefix("route ")
                .ok_or_else(|| Error::parse(ctx, format!("expected route line, got `{line}`")))?;
            routes.push(lanes.split_whitespace().map(str::to_string).collect::<Vec<_>>());
        }
        let bins = field(&mut lines, "bins")? as usize;
        let interval = field(&mut lines, "interval")?;
        let mut counts = Vec::with_capacity(n_routes);
        for _ in 0..n_routes {
            let line = lines.next().ok_or_else(|| Error::parse(ctx, "missing count row"))?;
            let row: Vec<u64> = line
                .split_whitespace()
                .map(|c| c.parse().map_err(|_| Error::parse(ctx, format!("bad count `{c}`"))))
                .collect::<Result<_>>()?;
            if row.len() != bins {
                return Err(Error::parse(ctx, format!("row has {} counts, want {bins}", row.len())));
            }
            counts.push(row);
        }
        FlowMatrix::new(counts, routes, interval)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    provenance: Provenance,
    files: Vec<String>,
}

impl FlowSet {
    /// Writes `flow_NNNN.txt` per member plus `manifest.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (i, m) in self.members().iter().enumerate() {
            let name = format!("flow_{i:04}.txt");
            m.save(&dir.join(&name))?;
            files.push(name);
        }
        let manifest = Manifest {
            format: "tscflowset-v1".into(),
            provenance: self.provenance(),
            files,
        };
        let path = dir.join(FLOWSET_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable"))
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(FLOWSET_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        if manifest.format != "tscflowset-v1" {
            return Err(Error::parse(
                "flow set manifest",
                format!("format `{}`", manifest.format),
            ));
        }
        let members = manifest
            .files
            .iter()
            .map(|f| FlowMatrix::load(&dir.join(f)))
            .collect::<Result<_>>()?;
        FlowSet::new(members, manifest.provenance)
    }
}
