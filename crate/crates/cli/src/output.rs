//! Manifest plumbing and the three artifact writers: machine JSON, a
//! full-precision CSV that parses back exactly, and a 2-decimal display CSV
//! shaped like the published tables.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Provenance block embedded in every artifact. Reruns with the same
/// command, parameters, and seed produce byte-identical payloads; only
/// `wall_clock` varies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub version: String,
    pub wall_clock: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, params: impl Serialize, seed: u64, sample_sizes: Vec<usize>) -> Self {
        RunManifest {
            command: command.into(),
            params: serde_json::to_value(params).expect("serializable params"),
            seed,
            sample_sizes,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_clock: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        }
    }
}

/// Which artifact families to emit; absent `--format` means both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub fn wants(format: Option<Format>, f: Format) -> bool {
    format.is_none() || format == Some(f)
}

/// One CSV-shaped table: a header plus stringified rows in two precisions.
pub struct Table {
    pub headers: Vec<String>,
    /// Full-precision rows (round-trip exactly through `str::parse`).
    pub rows: Vec<Vec<String>>,
    /// Rows at the published two-decimal precision, sentinels rendered
    /// literally.
    pub display_rows: Vec<Vec<String>>,
}

/// Shortest round-tripping decimal for a float cell.
pub fn full(v: f64) -> String {
    format!("{v}")
}

pub fn two_dec(v: f64) -> String {
    format!("{v:.2}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub struct Emitter<'a> {
    pub dir: &'a Path,
    pub manifest: RunManifest,
    pub format: Option<Format>,
    written: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    pub fn new(dir: &'a Path, manifest: RunManifest, format: Option<Format>) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Emitter {
            dir,
            manifest,
            format,
            written: Vec::new(),
        })
    }

    /// Record intended artifact names up front so every file embeds the
    /// complete output list.
    pub fn plan(&mut self, names: &[&str]) {
        for n in names {
            let keep = match self.format {
                None => true,
                Some(Format::Json) => n.ends_with(".json"),
                Some(Format::Csv) => n.ends_with(".csv"),
            };
            if keep {
                self.manifest.outputs.push((*n).to_string());
            }
        }
    }

    pub fn json(&mut self, name: &str, payload: &impl Serialize) -> Result<(), CliError> {
        if !wants(self.format, Format::Json) {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.json"));
        let doc = serde_json::json!({ "manifest": self.manifest, "payload": payload });
        let mut buf = serde_json::to_vec_pretty(&doc)?;
        buf.push(b'\n');
        fs::write(&path, buf).map_err(io_err(&path))?;
        self.written.push(path);
        Ok(())
    }

    /// Write `{name}.csv` at full precision and `{name}_display.csv` at the
    /// published precision, both headed by a manifest comment line.
    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        if !wants(self.format, Format::Csv) {
            return Ok(());
        }
        self.csv_one(&format!("{name}.csv"), &table.headers, &table.rows)?;
        self.csv_one(
            &format!("{name}_display.csv"),
            &table.headers,
            &table.display_rows,
        )
    }

    fn csv_one(&mut self, file: &str, headers: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(headers)?;
        for row in rows {
            w.write_record(row)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        writeln!(f, "# manifest: {}", serde_json::to_string(&self.manifest)?)
            .map_err(io_err(&path))?;
        f.write_all(&body).map_err(io_err(&path))?;
        self.written.push(path);
        Ok(())
    }

    pub fn finish(self) {
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}
