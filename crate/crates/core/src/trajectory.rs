//! Per-generation record of a simulation run.

use serde::Serialize;
use std::io::{self, Write};

/// One generation: the untreated population `z` (absent for engines that do
/// not track it), the post-tracing current generation `zct`, and the number
/// of live cluster seeds `r0` born this generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrajectoryRow {
    pub n: u32,
    pub z: Option<u64>,
    pub zct: u64,
    pub r0: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// First generation with an empty current generation; once empty it
    /// stays empty.
    pub extinct_at: Option<u32>,
}

impl Trajectory {
    pub fn extinct(&self) -> bool {
        self.extinct_at.is_some()
    }

    pub fn zct(&self, n: usize) -> u64 {
        self.rows[n].zct
    }

    /// CSV with header `n,Z,ZCT,R0`; `Z` is left empty when untracked.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,Z,ZCT,R0")?;
        for row in &self.rows {
            match row.z {
                Some(z) => writeln!(out, "{},{},{},{}", row.n, z, row.zct, row.r0)?,
                None => writeln!(out, "{},,{},{}", row.n, row.zct, row.r0)?,
            }
        }
        Ok(())
    }

    /// Mark the extinction generation from the recorded rows.
    pub(crate) fn derive_extinction(rows: Vec<TrajectoryRow>) -> Trajectory {
        let extinct_at = rows.iter().find(|r| r.zct == 0).map(|r| r.n);
        Trajectory { rows, extinct_at }
    }
}
