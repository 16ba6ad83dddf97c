use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Collects the files of one run and writes each one atomically.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut s = String::with_capacity(64 * (rows.len() + 1));
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub manifest_version: u32,
    pub tool: String,
    pub command: &'a str,
    pub config: &'a Value,
    pub resolved_seed: u64,
    pub workers: usize,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub summary: Value,
}

/// CSV cell for a float: shortest round-trip form, exponent notation for
/// very small or large magnitudes.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e12) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}
