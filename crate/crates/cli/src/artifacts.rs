//! Reading inputs and staging outputs.
//!
//! Outputs are rendered in memory, written to temporary files beside their
//! targets, and renamed into place only once every file of a command has
//! been written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use entity_embed::corpus::read_states_csv;
use entity_embed::{EntityState, Error, Result, VaeModel};
use serde_json::{json, Value};
use tempfile::NamedTempFile;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    pub fn render(&mut self, path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(path, buf);
        Ok(())
    }

    /// Adds `<path>.config.json` carrying the run provenance.
    pub fn sidecar(&mut self, path: &Path, provenance: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(provenance)?;
        text.push('\n');
        self.add(&sidecar_path(path), text.into_bytes());
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            let mut tmp = NamedTempFile::new_in(parent_dir(&path))?;
            tmp.write_all(&bytes)?;
            tmp.flush()?;
            staged.push((tmp, path));
        }
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        }
        Ok(())
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Rejects output paths whose directory is missing or that name a directory.
pub fn check_output(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Err(Error::Config(format!("output {} is a directory", path.display())));
    }
    if !parent_dir(path).is_dir() {
        return Err(Error::Config(format!("output directory for {} does not exist", path.display())));
    }
    Ok(())
}

pub fn provenance(command: &str, config: Value) -> Value {
    json!({
        "tool": "entity-embed",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    })
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn read_states(path: &Path) -> Result<Vec<EntityState>> {
    read_states_csv(open(path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read_model(path: &Path) -> Result<VaeModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    VaeModel::load_json(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => Error::Data(format!("{}: {other}", path.display())),
    })
}

/// A latent CSV: `z1..zL` columns plus optional `game_id`/`entity_id`.
pub struct LatentTable {
    pub points: Vec<Vec<f64>>,
    pub ids: Option<Vec<(i32, i32)>>,
}

pub fn read_latent(path: &Path) -> Result<LatentTable> {
    let ctx = |m: String| Error::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| ctx(e.to_string()))?.clone();
    let mut z_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(k) = h.strip_prefix('z').and_then(|r| r.parse::<usize>().ok()) {
            z_cols.push((k, i));
        }
    }
    z_cols.sort_unstable();
    if z_cols.is_empty() || z_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(ctx("latent columns must be z1..zL".into()));
    }
    let game = headers.iter().position(|h| h == "game_id");
    let entity = headers.iter().position(|h| h == "entity_id");
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ctx(e.to_string()))?;
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        let z = z_cols
            .iter()
            .map(|&(_, i)| {
                cell(i)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ctx(format!("row {}: `{}` is not a finite number", row + 1, cell(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(z);
        if let (Some(g), Some(e)) = (game, entity) {
            let parse = |i: usize| {
                cell(i)
                    .parse::<i32>()
                    .map_err(|_| ctx(format!("row {}: `{}` is not an integer id", row + 1, cell(i))))
            };
            ids.push((parse(g)?, parse(e)?));
        }
    }
    Ok(LatentTable { points, ids: (game.is_some() && entity.is_some()).then_some(ids) })
}
