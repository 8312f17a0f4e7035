//! Output directory handling. Every artifact carries the config hash: CSV
//! and PGM files in a leading `#` comment, PLY in a header comment, PNG in a
//! text chunk, JSON as a field and the binary grid in a trailing comment
//! line after its payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use canopy::geom_io::{load_scans_ply, load_trajectory, write_scans_ply, ScanSet, Trajectory};
use canopy::simulation::World;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const WORLD: &str = "world.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const SCANS: &str = "scans.ply";

pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct WorldArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub world: World,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&out)
            .map_err(|e| CliError::Run(format!("cannot create output directory {}: {e}", out.display())))?;
        let hash = cfg.hash();
        Ok(Self { cfg, hash, out })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `config_hash=..,seed=..,command=..` followed by `extra` pairs.
    pub fn meta_body(&self, command: &str, extra: &[(&str, String)]) -> String {
        let mut parts = vec![
            format!("config_hash={}", self.hash),
            format!("seed={}", self.seed()),
            format!("command={command}"),
        ];
        parts.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
        parts.join(",")
    }

    /// Writes a text artifact whose first line is the metadata comment.
    pub fn write_text(
        &self,
        name: &str,
        command: &str,
        extra: &[(&str, String)],
        body: impl FnOnce(&mut Vec<u8>) -> canopy::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# {}", self.meta_body(command, extra))?;
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::Run(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    /// Binary payload followed by `\n# <meta>\n`. Readers stop at the end of
    /// the payload, so the trailer is ignored on load.
    pub fn write_binary(
        &self,
        name: &str,
        command: &str,
        extra: &[(&str, String)],
        body: impl FnOnce(&mut Vec<u8>) -> canopy::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        writeln!(buf, "\n# {}", self.meta_body(command, extra))?;
        self.write_bytes(name, &buf)
    }

    pub fn write_scans(&self, name: &str, command: &str, scans: &ScanSet) -> Result<PathBuf, CliError> {
        let mut raw = Vec::new();
        write_scans_ply(&mut raw, scans)?;
        // Splice a comment in after the `format` line.
        let first = raw.iter().position(|&b| b == b'\n').expect("ply magic line");
        let second = first + 1 + raw[first + 1..].iter().position(|&b| b == b'\n').expect("ply format line");
        let mut buf = raw[..=second].to_vec();
        writeln!(buf, "comment {}", self.meta_body(command, &[]))?;
        buf.extend_from_slice(&raw[second + 1..]);
        self.write_bytes(name, &buf)
    }

    pub fn require(&self, name: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Input(format!("{} not found; run `{producer}` first", p.display())))
        }
    }

    pub fn load_world(&self) -> Result<World, CliError> {
        let p = self.require(WORLD, "gen-world")?;
        let text = fs::read_to_string(&p)?;
        let a: WorldArtifact =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        Ok(a.world)
    }

    pub fn load_flight(&self) -> Result<(Trajectory, ScanSet), CliError> {
        let tp = self.require(TRAJECTORY, "fly")?;
        let sp = self.require(SCANS, "fly")?;
        let input = |p: &Path, e: canopy::Error| CliError::Input(format!("{}: {e}", p.display()));
        let traj = load_trajectory(&tp).map_err(|e| input(&tp, e))?;
        let scans = load_scans_ply(&sp, &traj).map_err(|e| input(&sp, e))?;
        Ok((traj, scans))
    }
}
