//! Artifact writing: every file lands via a temporary file and a rename, so
//! readers never observe a partial artifact.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use fragkin_core::solver::Trajectory;
use fragkin_core::DensityState;
use serde::Serialize;

use crate::error::CliError;

/// Directory that receives the artifacts of one invocation.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.root.join(name);
        let write = || -> std::io::Result<()> {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.root)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&target).map_err(|e| e.error)?;
            Ok(())
        };
        write().map_err(|e| CliError::io(&target, e))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Header `time,<pivots>` followed by one row per snapshot.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let grid = traj.snapshots[0].grid();
    let mut out = DensityState::csv_header(grid);
    out.push('\n');
    for s in &traj.snapshots {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// `time,N_-r,N_0,N_1,N_2` per snapshot.
pub fn moments_csv(traj: &Trajectory, r: f64) -> String {
    let mut out = String::from("time,N_-r,N_0,N_1,N_2\n");
    for s in &traj.snapshots {
        let m = |p: f64| s.moment(p).expect("moment orders above -1");
        let _ = writeln!(out, "{:?},{:?},{:?},{:?},{:?}", s.time(), m(-r), m(0.0), m(1.0), m(2.0));
    }
    out
}
